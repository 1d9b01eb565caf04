"""Grating-assisted coupling between the 00 and 10 modes of one polarization.

Amplitudes (A, B) of the 00 and 10 modes obey

    dA/dx =  kappa12 B exp(+i (dbeta - K) x)
    dB/dx = -kappa21 A exp(-i (dbeta - K) x)

with detuning ``delta = (dbeta - K) / 2`` and ``gamma = sqrt(kappa^2 + delta^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .electrode import ElectrodeConfig, index_modulation
from .material import ElectroOpticTensor
from .modesolver import Grid2D, GuidedMode

DEFAULT_LENGTH = 2.0e4  # um


@dataclass(frozen=True)
class CouplingDesign:
    """Phase-matched converter for one polarization."""

    polarization: str
    kappa_per_volt: float
    grating_period: float
    delta_beta: float
    length_L: float = DEFAULT_LENGTH

    def __post_init__(self):
        if self.kappa_per_volt < 0:
            raise ValueError("kappa_per_volt must be non-negative")
        if not self.grating_period > 0:
            raise ValueError("grating_period must be positive")

    @property
    def grating_k(self) -> float:
        return 2 * math.pi / self.grating_period

    def detuning(self, grating_k: float) -> float:
        """delta of this mode pair under a grating of spatial frequency ``grating_k``."""
        return 0.5 * (self.delta_beta - grating_k)


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """Maps (A, B) at x = 0 onto (A, B) at x = length."""

    matrix: np.ndarray
    delta: float
    kappa: float
    gamma: float
    length: float

    @property
    def m11(self) -> complex:
        return complex(self.matrix[0, 0])

    @property
    def m12(self) -> complex:
        return complex(self.matrix[0, 1])

    @property
    def m21(self) -> complex:
        return complex(self.matrix[1, 0])

    @property
    def m22(self) -> complex:
        return complex(self.matrix[1, 1])

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.abs(m.conj().T @ m - np.eye(2)).max())

    def __matmul__(self, other):
        m = other.matrix if isinstance(other, TransferMatrix) else other
        return self.matrix @ m


def coupling_coefficients(
    mode00: GuidedMode, mode10: GuidedMode, modulation: Grid2D, n_profile: Grid2D
) -> tuple[float, float, float]:
    """(kappa12, kappa21, kappa) in 1/um for an index-modulation envelope."""
    if mode00.polarization != mode10.polarization:
        raise ValueError("modes must share a polarization")
    if not math.isclose(mode00.wavelength, mode10.wavelength, rel_tol=1e-12):
        raise ValueError("modes must share a wavelength")
    ref = mode00.field
    for g in (mode10.field, modulation, n_profile):
        if not g.same_axes(ref):
            raise ValueError("modes, modulation and index profile must share one grid")
    k0 = mode00.k0
    integral = float((ref.values * n_profile.values * modulation.values * mode10.field.values).sum())
    integral *= ref.cell_area
    k12 = k0 * k0 / (2 * mode00.beta) * integral
    k21 = k0 * k0 / (2 * mode10.beta) * integral
    return k12, k21, math.sqrt(k12 * k21)


def kappa_for_electrode(
    mode00: GuidedMode,
    mode10: GuidedMode,
    n_profile: Grid2D,
    electrode: ElectrodeConfig,
    tensor: ElectroOpticTensor | None = None,
) -> float:
    mod = index_modulation(electrode, mode00.polarization, n_profile, tensor)
    return coupling_coefficients(mode00, mode10, mod, n_profile)[2]


def kappa_sweep(mode00, mode10, n_profile, half_gaps, offsets, tensor=None, voltage=1.0):
    """kappa over a (a, d) grid; rows follow ``half_gaps``, columns ``offsets``."""
    out = np.empty((len(half_gaps), len(offsets)))
    for i, a in enumerate(half_gaps):
        for j, d in enumerate(offsets):
            cfg = ElectrodeConfig(float(a), float(d), voltage=voltage)
            out[i, j] = kappa_for_electrode(mode00, mode10, n_profile, cfg, tensor)
    return out


def optimize_electrode(
    mode00: GuidedMode,
    mode10: GuidedMode,
    n_profile: Grid2D,
    half_gaps=np.arange(0.5, 6.01, 0.5),
    offsets=np.arange(0.0, 6.01, 0.25),
    tensor=None,
) -> tuple[float, float, float]:
    """(a, d, kappa per volt) maximizing the coupling.

    A coarse sweep picks the start point; Nelder-Mead refines it.
    """
    grid = kappa_sweep(mode00, mode10, n_profile, half_gaps, offsets, tensor)
    i, j = np.unravel_index(np.argmax(grid), grid.shape)

    def neg(p):
        a, d = p
        if a <= 0.05:
            return 0.0
        cfg = ElectrodeConfig(float(a), float(d))
        return -kappa_for_electrode(mode00, mode10, n_profile, cfg, tensor)

    res = minimize(
        neg,
        [half_gaps[i], offsets[j]],
        method="Nelder-Mead",
        options={"xatol": 1e-4, "fatol": 1e-14, "initial_simplex": [
            [half_gaps[i], offsets[j]],
            [half_gaps[i] + 0.1, offsets[j]],
            [half_gaps[i], offsets[j] + 0.1],
        ]},
    )
    a, d = (float(v) for v in res.x)
    return a, d, float(-res.fun)


def design_grating_period(delta_beta: float) -> float:
    """Electrode period whose spatial frequency equals ``delta_beta``."""
    if not delta_beta > 0:
        raise ValueError(f"delta_beta must be positive, got {delta_beta}")
    return 2 * math.pi / delta_beta


def _sin_over(gamma, x):
    # sin(gamma x) / gamma, finite as gamma -> 0
    return x * np.sinc(gamma * x / math.pi)


def transfer_matrix(kappa: float, delta: float, length: float) -> TransferMatrix:
    """Closed-form solution of the coupled equations over ``length``."""
    for v in (kappa, delta, length):
        if not math.isfinite(v):
            raise ValueError("transfer_matrix inputs must be finite")
    gamma = math.hypot(kappa, delta)
    c = math.cos(gamma * length)
    s = float(_sin_over(gamma, length))
    ep, em = np.exp(1j * delta * length), np.exp(-1j * delta * length)
    m = np.array(
        [
            [(c - 1j * delta * s) * ep, kappa * s * ep],
            [-kappa * s * em, (c + 1j * delta * s) * em],
        ]
    )
    return TransferMatrix(m, delta, kappa, gamma, length)


def rotating_frame_matrix(kappa: float, delta: float, length: float) -> np.ndarray:
    """Transfer matrix with the exp(+-i delta x) factors removed.

    Unlike :func:`transfer_matrix` this composes over consecutive lengths,
    because the coupled equations are autonomous in the co-rotating frame.
    """
    t = transfer_matrix(kappa, delta, length).matrix
    return np.diag([np.exp(-1j * delta * length), np.exp(1j * delta * length)]) @ t


def power_evolution(kappa: float, delta: float, initial, x):
    """(P00, P10) at positions ``x`` for initial amplitudes (A0, B0)."""
    a0, b0 = (complex(v) for v in initial)
    norm = abs(a0) ** 2 + abs(b0) ** 2
    if abs(norm - 1) > 1e-9:
        raise ValueError(f"initial amplitudes must be normalized, |A|^2+|B|^2 = {norm}")
    x = np.asarray(x, dtype=float)
    gamma = math.hypot(kappa, delta)
    c = np.cos(gamma * x)
    s = _sin_over(gamma, x)
    a = (c - 1j * delta * s) * a0 + kappa * s * b0
    b = -kappa * s * a0 + (c + 1j * delta * s) * b0
    return np.abs(a) ** 2, np.abs(b) ** 2


def transferred_fraction(kappa: float, delta: float, length: float) -> float:
    """Power moved into the other mode: (kappa/gamma)^2 sin^2(gamma L)."""
    gamma = math.hypot(kappa, delta)
    return float((kappa * _sin_over(gamma, length)) ** 2)


def detuning_ceiling(kappa: float, delta: float) -> float:
    """Largest transferable fraction (kappa/gamma)^2 at a given detuning."""
    g2 = kappa * kappa + delta * delta
    return 1.0 if g2 == 0 else kappa * kappa / g2


@dataclass(frozen=True)
class CrosstalkEntry:
    grating: str
    voltage: float
    fraction_H: float
    fraction_V: float
    ceiling_H: float
    ceiling_V: float
    delta_H: float
    delta_V: float


def crosstalk_analysis(
    design_H: CouplingDesign, design_V: CouplingDesign, voltage: float
) -> dict[str, CrosstalkEntry]:
    """Coupled fraction of both polarizations under each of the two gratings.

    Returns a mapping ``{'H': entry, 'V': entry}`` keyed by the grating the
    electrode period was designed for.
    """
    out = {}
    for name, grating in (("H", design_H), ("V", design_V)):
        k = grating.grating_k
        entry = {}
        for pol, des in (("H", design_H), ("V", design_V)):
            kap = des.kappa_per_volt * voltage
            dlt = des.detuning(k)
            entry[pol] = (
                transferred_fraction(kap, dlt, grating.length_L),
                detuning_ceiling(kap, dlt),
                dlt,
            )
        out[name] = CrosstalkEntry(
            name, voltage,
            entry["H"][0], entry["V"][0],
            entry["H"][1], entry["V"][1],
            entry["H"][2], entry["V"][2],
        )
    return out


def voltage_for_angle(theta: float, design: CouplingDesign) -> float:
    """Drive voltage giving a rotation angle ``theta = kappa L``."""
    if design.kappa_per_volt <= 0:
        raise ValueError("design has zero coupling per volt")
    if not 0 <= theta <= math.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    return theta / (design.kappa_per_volt * design.length_L)


def full_transfer_voltage(design: CouplingDesign) -> float:
    return voltage_for_angle(math.pi / 2, design)


def voltage_sweep(design_H: CouplingDesign, design_V: CouplingDesign, grating: str, voltages):
    """Rows (V, P00_H, P10_H, P00_V, P10_V) for input |00_H, 10_V>."""
    k = (design_H if grating == "H" else design_V).grating_k
    length = (design_H if grating == "H" else design_V).length_L
    rows = []
    for v in voltages:
        ph = power_evolution(design_H.kappa_per_volt * v, design_H.detuning(k), (1, 0), length)
        pv = power_evolution(design_V.kappa_per_volt * v, design_V.detuning(k), (0, 1), length)
        rows.append((float(v), float(ph[0]), float(ph[1]), float(pv[0]), float(pv[1])))
    return rows
