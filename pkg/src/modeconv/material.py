"""Refractive-index dispersion and linear electro-optic response of KTP.

Lengths are in micrometres, fields in V/um.  Electro-optic coefficients are
stored in pm/V and converted on use (1 pm/V = 1e-6 um/V).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import yaml

AXES = ("x", "y", "z")
PM_PER_V_TO_UM_PER_V = 1e-6


class WavelengthRangeError(ValueError):
    """Wavelength outside the validity window of a dispersion formula."""


def _kato(lam2, c):
    # n^2 = A + B/(lam^2 - C) + D/(lam^2 - E)
    a, b, cc, d, e = c
    return a + b / (lam2 - cc) + d / (lam2 - e)


def _sellmeier(lam2, c):
    # n^2 = 1 + sum_i B_i lam^2 / (lam^2 - C_i), coefficients as B1, C1, B2, C2, ...
    if len(c) % 2:
        raise ValueError("sellmeier form needs coefficient pairs (B_i, C_i)")
    out = 1.0
    for b, cc in zip(c[0::2], c[1::2]):
        out = out + b * lam2 / (lam2 - cc)
    return out


def _kato_ir(lam2, c):
    # n^2 = A + B/(lam^2 - C) - D lam^2
    a, b, cc, d = c
    return a + b / (lam2 - cc) - d * lam2


FORMS: dict[str, Callable] = {"kato": _kato, "sellmeier": _sellmeier, "kato_ir": _kato_ir}


@dataclass(frozen=True)
class SellmeierSet:
    """Dispersion coefficients of one crystal axis.

    Parameters
    ----------
    axis : str
        Crystal axis label, one of ``x``, ``y``, ``z``.
    coefficients : tuple of float
        Coefficients in the order expected by ``form``.
    valid_range : tuple of float
        (min, max) wavelength in um.
    form : str
        Key into :data:`FORMS`.
    """

    axis: str
    coefficients: tuple[float, ...]
    valid_range: tuple[float, float]
    form: str = "kato"

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown crystal axis {self.axis!r}")
        if self.form not in FORMS:
            raise ValueError(f"unknown dispersion form {self.form!r}; known: {sorted(FORMS)}")
        lo, hi = self.valid_range
        if not 0 < lo < hi:
            raise ValueError(f"bad valid_range {self.valid_range}")

    def __call__(self, wavelength):
        lam = np.asarray(wavelength, dtype=float)
        lo, hi = self.valid_range
        if np.any(lam < lo) or np.any(lam > hi) or not np.all(np.isfinite(lam)):
            raise WavelengthRangeError(
                f"wavelength {wavelength} um outside [{lo}, {hi}] um for n_{self.axis}"
            )
        n2 = FORMS[self.form](lam * lam, self.coefficients)
        n = np.sqrt(n2)
        return float(n) if n.ndim == 0 else n


@dataclass(frozen=True)
class ElectroOpticTensor:
    """Non-zero linear electro-optic coefficients of an mm2 crystal, in pm/V."""

    r13: float
    r23: float
    r33: float
    r42: float = 0.0
    r51: float = 0.0

    def __post_init__(self):
        for name in ("r13", "r23", "r33", "r42", "r51"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def r_i3(self, axis: str) -> float:
        """Coefficient coupling E_z to the index along ``axis``, in um/V."""
        try:
            r = {"x": self.r13, "y": self.r23, "z": self.r33}[axis]
        except KeyError:
            raise ValueError(f"unknown crystal axis {axis!r}") from None
        return r * PM_PER_V_TO_UM_PER_V


@dataclass(frozen=True)
class IndexPerturbation:
    """Index shifts of the three principal axes produced by a field E_z."""

    e_z: float
    delta_n_x: float
    delta_n_y: float
    delta_n_z: float


def eo_index_shift(axis: str, n, e_z, tensor: ElectroOpticTensor | None = None):
    """Index change ``-n**3 r_i3 E_z / 2`` along ``axis`` for a field ``e_z`` (V/um).

    Works elementwise on arrays.
    """
    tensor = tensor or default_material().eo
    r = tensor.r_i3(axis)
    n = np.asarray(n, dtype=float)
    if np.any(n <= 1.0):
        raise ValueError("refractive index must exceed 1")
    e_z = np.asarray(e_z, dtype=float)
    if not np.all(np.isfinite(e_z)):
        raise ValueError("e_z must be finite")
    out = -0.5 * n**3 * r * e_z
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class Material:
    """A dispersive electro-optic crystal loaded from a data file."""

    name: str
    axes: Mapping[str, SellmeierSet]
    eo: ElectroOpticTensor
    citation: str = ""
    source: str = field(default="", compare=False)

    def refractive_index(self, axis: str, wavelength):
        if axis not in self.axes:
            raise ValueError(f"unknown crystal axis {axis!r}")
        return self.axes[axis](wavelength)

    def index_perturbation(self, wavelength: float, e_z: float) -> IndexPerturbation:
        shifts = {
            ax: eo_index_shift(ax, self.refractive_index(ax, wavelength), e_z, self.eo)
            for ax in AXES
        }
        return IndexPerturbation(e_z, shifts["x"], shifts["y"], shifts["z"])

    @classmethod
    def from_dict(cls, data: Mapping, source: str = "") -> "Material":
        form = data.get("form", "kato")
        rng = tuple(float(v) for v in data["valid_range"])
        axes = {}
        for ax, coeffs in data["axes"].items():
            axes[ax] = SellmeierSet(str(ax), tuple(float(c) for c in coeffs), rng, form)
        eo = data.get("electro_optic", {})
        tensor = ElectroOpticTensor(
            **{k: float(eo.get(k, 0.0)) for k in ("r13", "r23", "r33", "r42", "r51")}
        )
        return cls(data.get("material", "unnamed"), axes, tensor, data.get("citation", ""), source)

    @classmethod
    def load(cls, path: str | Path) -> "Material":
        path = Path(path)
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data, str(path))


_DEFAULT: Material | None = None


def default_material() -> Material:
    """The bundled KTP data set."""
    global _DEFAULT
    if _DEFAULT is None:
        ref = resources.files("modeconv") / "data" / "ktp.yaml"
        with resources.as_file(ref) as p:
            _DEFAULT = Material.load(p)
    return _DEFAULT


def refractive_index(axis: str, wavelength, material: Material | None = None):
    """Principal index ``n_axis`` at ``wavelength`` (um)."""
    return (material or default_material()).refractive_index(axis, wavelength)


def polarization_axis(polarization: str) -> str:
    """Crystal axis carrying the dominant field of a guided polarization."""
    try:
        return {"H": "y", "V": "z"}[polarization]
    except KeyError:
        raise ValueError(f"polarization must be 'H' or 'V', got {polarization!r}") from None


__all__ = [
    "AXES",
    "ElectroOpticTensor",
    "IndexPerturbation",
    "Material",
    "SellmeierSet",
    "WavelengthRangeError",
    "default_material",
    "eo_index_shift",
    "polarization_axis",
    "refractive_index",
]
