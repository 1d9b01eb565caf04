"""Vertical field of a coplanar electrode pair and the index modulation it writes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .material import ElectroOpticTensor, default_material, eo_index_shift, polarization_axis
from .modesolver import Grid2D

EDGE_EXCLUSION = 0.010  # um, radius of the disk dropped around each electrode edge


class FieldSingularityError(ValueError):
    """Field requested exactly at an electrode edge."""


@dataclass(frozen=True)
class ElectrodeConfig:
    """Coplanar periodic electrode pair.

    ``half_gap_a`` is half the electrode separation and ``offset_d`` the
    lateral position of the pair midpoint relative to the waveguide centre.
    The pattern repeats with ``period_lambda`` over ``length_L``; only its
    first longitudinal harmonic (unit depth) couples the modes, ``duty`` is
    kept for the record.
    """

    half_gap_a: float
    offset_d: float = 0.0
    period_lambda: float = 100.0
    length_L: float = 2.0e4
    voltage: float = 1.0
    duty: float = 0.5

    def __post_init__(self):
        if not self.half_gap_a > 0:
            raise ValueError("half_gap_a must be positive")
        if not self.period_lambda > 0 or not self.length_L > 0:
            raise ValueError("period and length must be positive")
        if not math.isfinite(self.voltage) or not math.isfinite(self.offset_d):
            raise ValueError("voltage and offset must be finite")
        periods = self.length_L / self.period_lambda
        if abs(periods - round(periods)) > 1e-6 * max(1.0, periods):
            warnings.warn(
                f"electrode length {self.length_L} um is not a whole number of "
                f"{self.period_lambda} um periods ({periods:.3f})",
                stacklevel=2,
            )

    def replace(self, **changes) -> "ElectrodeConfig":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return replace(self, **changes)


def _ez_unit(a: float, y, z):
    """E_z for 1 V with the electrode gap centred at y = 0."""
    y2, z2 = y * y, z * z
    x = a * a + z2 - y2
    r = np.sqrt(x * x + 4 * y2 * z2)
    # R - X without cancellation when X > 0
    num = np.where(x > 0, 4 * y2 * z2 / np.where(x > 0, x + r, 1.0), r - x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(num) / (math.pi * math.sqrt(2) * r)


def ez_field(config: ElectrodeConfig, y, z):
    """Vertical field component (V/um) at depth ``z >= 0`` below the surface."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("ez_field is defined in the crystal only (z >= 0)")
    u = y - config.offset_d
    edge = (z == 0) & (np.abs(np.abs(u) - config.half_gap_a) == 0)
    if np.any(edge):
        raise FieldSingularityError(
            f"E_z is singular at the electrode edges y = d +/- a = "
            f"{config.offset_d - config.half_gap_a}, {config.offset_d + config.half_gap_a}"
        )
    out = config.voltage * _ez_unit(config.half_gap_a, u, z)
    return float(out) if out.ndim == 0 else out


def index_modulation(
    config: ElectrodeConfig,
    polarization: str,
    n_profile: Grid2D,
    tensor: ElectroOpticTensor | None = None,
) -> Grid2D:
    """Transverse envelope of the index change for one polarization.

    H modes see the y index through r23, V modes the z index through r33.
    The cover (z < 0) carries no modulation.
    """
    axis = polarization_axis(polarization)
    tensor = tensor or default_material().eo
    Y, Z = n_profile.mesh()
    u = Y - config.offset_d
    crystal = Z >= 0
    near_edge = np.hypot(np.abs(u) - config.half_gap_a, Z) < EDGE_EXCLUSION
    keep = crystal & ~near_edge
    e = np.zeros_like(Y)
    e[keep] = config.voltage * _ez_unit(config.half_gap_a, u[keep], Z[keep])
    dn = np.zeros_like(Y)
    dn[keep] = eo_index_shift(axis, n_profile.values[keep], e[keep], tensor)
    return n_profile.with_values(dn)


def field_map(config: ElectrodeConfig, y, z) -> np.ndarray:
    """Rows of (y, z, E_z) over the crystal part of a y-z grid, edges excluded."""
    Y, Z = np.meshgrid(np.asarray(y, float), np.asarray(z, float), indexing="ij")
    keep = (Z >= 0) & (np.hypot(np.abs(Y - config.offset_d) - config.half_gap_a, Z) >= EDGE_EXCLUSION)
    e = np.full(Y.shape, np.nan)
    e[keep] = ez_field(config, Y[keep], Z[keep])
    return np.column_stack([Y.ravel(), Z.ravel(), e.ravel()])
