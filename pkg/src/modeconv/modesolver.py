"""Finite-difference semivectorial mode solver for step-index channel waveguides.

Coordinates: ``y`` is lateral (core centred at y = 0), ``z`` is depth below
the crystal surface (crystal for z > 0, cover for z < 0).  The grid is
cell-centred so that every material interface lying on a multiple of the
spacing falls midway between samples.

H-polarized modes (dominant E_y) use the operator
``d/dy[(1/eps) d/dy(eps E)] + d2/dz2`` and V-polarized modes (dominant E_z)
use ``d2/dy2 + d/dz[(1/eps) d/dz(eps E)]``, each plus ``k0^2 eps``.  The
eigenvalue is ``beta^2``.  Boundary condition is Dirichlet on the box.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .material import Material, default_material, polarization_axis

log = logging.getLogger(__name__)

DEFAULT_SPACING = 0.025
DEFAULT_MARGIN = 5.0
DEFAULT_COVER = 1.0


class ModeSolverError(RuntimeError):
    """The eigensolver failed to converge."""


@dataclass(frozen=True)
class WaveguideGeometry:
    """Rectangular step-index channel below a flat surface."""

    width_b: float
    depth_c: float
    delta_n: float = 0.02
    material: Material = field(default_factory=default_material, repr=False)
    cover_index: float = 1.0

    def __post_init__(self):
        if not self.width_b > 0 or not self.depth_c > 0:
            raise ValueError("waveguide width and depth must be positive")
        if not 0 < self.delta_n < 0.1:
            raise ValueError(f"delta_n must lie in (0, 0.1), got {self.delta_n}")
        if not self.cover_index >= 1.0:
            raise ValueError("cover index must be >= 1")

    def substrate_index(self, polarization: str, wavelength: float) -> float:
        return self.material.refractive_index(polarization_axis(polarization), wavelength)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Samples on a uniform rectangular grid, ``values[i, j]`` at ``(y[i], z[j])``."""

    y: np.ndarray
    z: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.y.size, self.z.size):
            raise ValueError("values shape does not match the axes")

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def cell_area(self) -> float:
        return self.dy * self.dz

    @property
    def shape(self):
        return self.values.shape

    def mesh(self):
        return np.meshgrid(self.y, self.z, indexing="ij")

    def with_values(self, values) -> "Grid2D":
        return Grid2D(self.y, self.z, np.asarray(values))

    def same_axes(self, other: "Grid2D") -> bool:
        return (
            self.y.shape == other.y.shape
            and self.z.shape == other.z.shape
            and np.allclose(self.y, other.y, atol=1e-9)
            and np.allclose(self.z, other.z, atol=1e-9)
        )

    def resample(self, other: "Grid2D") -> "Grid2D":
        """These samples interpolated onto the axes of ``other`` (zero outside)."""
        if self.same_axes(other):
            return self
        if (
            other.y.max() < self.y.min()
            or other.y.min() > self.y.max()
            or other.z.max() < self.z.min()
            or other.z.min() > self.z.max()
        ):
            raise ValueError("grids do not overlap")
        interp = RegularGridInterpolator(
            (self.y, self.z), self.values, bounds_error=False, fill_value=0.0
        )
        Y, Z = other.mesh()
        return other.with_values(interp((Y, Z)))


def make_axes(geometry: WaveguideGeometry, spacing: float, margin: float, cover: float):
    """Cell-centred y and z sample positions enclosing the core."""
    if spacing <= 0:
        raise ValueError("grid spacing must be positive")
    if margin < 3.0:
        raise ValueError("domain margin around the core must be at least 3 um")
    ny_half = math.ceil((geometry.width_b / 2 + margin) / spacing - 1e-9)
    y = (np.arange(-ny_half, ny_half) + 0.5) * spacing
    n_cover = math.ceil(cover / spacing - 1e-9)
    n_sub = math.ceil((geometry.depth_c + margin) / spacing - 1e-9)
    z = (np.arange(-n_cover, n_sub) + 0.5) * spacing
    return y, z


def build_index_profile(
    geometry: WaveguideGeometry,
    polarization: str,
    wavelength: float,
    spacing: float = DEFAULT_SPACING,
    margin: float = DEFAULT_MARGIN,
    cover: float = DEFAULT_COVER,
) -> Grid2D:
    """Index n(y, z) seen by one polarization: core, substrate, cover."""
    n_s = geometry.substrate_index(polarization, wavelength)
    y, z = make_axes(geometry, spacing, margin, cover)
    Y, Z = np.meshgrid(y, z, indexing="ij")
    n = np.full(Y.shape, n_s)
    core = (np.abs(Y) < geometry.width_b / 2) & (Z > 0) & (Z < geometry.depth_c)
    n[core] = n_s + geometry.delta_n
    n[Z < 0] = geometry.cover_index
    return Grid2D(y, z, n)


@dataclass(frozen=True, eq=False)
class GuidedMode:
    """A guided transverse mode, field normalized to unit integral of psi^2."""

    polarization: str
    order: tuple[int, int]
    beta: float
    field: Grid2D
    wavelength: float
    residual: float = 0.0

    @property
    def k0(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def n_eff(self) -> float:
        return self.beta / self.k0

    @property
    def label(self) -> str:
        return f"{self.order[0]}{self.order[1]}"


def _second_difference(eps: np.ndarray, h: float, axis: int, weighted: bool) -> sp.csr_matrix:
    """Three-point second difference along ``axis`` on the flattened grid.

    ``weighted`` selects d/dx[(1/eps) d/dx(eps u)] with the arithmetic mean of
    eps at the half-node, which keeps the flux (1/eps) d(eps u)/dx continuous.
    """
    ny, nz = eps.shape
    idx = np.arange(ny * nz).reshape(ny, nz)
    sl_a = (slice(None, -1), slice(None)) if axis == 0 else (slice(None), slice(None, -1))
    sl_b = (slice(1, None), slice(None)) if axis == 0 else (slice(None), slice(1, None))
    a, b = idx[sl_a].ravel(), idx[sl_b].ravel()
    if weighted:
        ea, eb = eps[sl_a].ravel(), eps[sl_b].ravel()
        emid = 0.5 * (ea + eb)
        c_ab, c_ba = eb / emid, ea / emid
        c_aa, c_bb = -ea / emid, -eb / emid
    else:
        c_ab = c_ba = np.ones(a.size)
        c_aa = c_bb = -np.ones(a.size)
    n = ny * nz
    diag = np.zeros(n)
    np.add.at(diag, a, c_aa)
    np.add.at(diag, b, c_bb)
    # Dirichlet walls: each missing neighbour contributes -1 to the diagonal
    links = np.zeros(n)
    np.add.at(links, a, 1)
    np.add.at(links, b, 1)
    diag -= 2 - links
    rows = np.concatenate([a, b, np.arange(n)])
    cols = np.concatenate([b, a, np.arange(n)])
    vals = np.concatenate([c_ab, c_ba, diag])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n)) / (h * h)


def helmholtz_operator(profile: Grid2D, polarization: str, wavelength: float) -> sp.csr_matrix:
    """Sparse semivectorial operator whose eigenvalues are beta^2."""
    polarization_axis(polarization)
    eps = profile.values**2
    k0 = 2 * math.pi / wavelength
    dyy = _second_difference(eps, profile.dy, 0, weighted=polarization == "H")
    dzz = _second_difference(eps, profile.dz, 1, weighted=polarization == "V")
    return (dyy + dzz + sp.diags(k0 * k0 * eps.ravel())).tocsr()


def _count_sign_changes(line: np.ndarray, rel_floor: float = 1e-3) -> int:
    peak = np.abs(line).max()
    kept = line[np.abs(line) > rel_floor * peak]
    return int(np.count_nonzero(np.diff(np.sign(kept))))


def classify_mode(field: Grid2D) -> tuple[int, int]:
    """(m, n) from sign changes along y and z through the field maximum."""
    f = field.values
    i, j = np.unravel_index(np.argmax(np.abs(f)), f.shape)
    return _count_sign_changes(f[:, j]), _count_sign_changes(f[i, :])


def _fix_sign(f: np.ndarray, Y: np.ndarray, Z: np.ndarray, order) -> np.ndarray:
    # positive lowest non-vanishing moment: int psi (y-yc)^m (z-zc)^n > 0
    w = f * f
    yc = (w * Y).sum() / w.sum()
    zc = (w * Z).sum() / w.sum()
    moment = (f * (Y - yc) ** order[0] * (Z - zc) ** order[1]).sum()
    if abs(moment) < 1e-12 * np.abs(f).sum():
        moment = f.flat[np.argmax(np.abs(f))]
    return f if moment >= 0 else -f


def boundary_fraction(field: Grid2D) -> float:
    """Largest |psi| on the outermost ring of samples relative to the peak."""
    f = np.abs(field.values)
    ring = max(f[0].max(), f[-1].max(), f[:, 0].max(), f[:, -1].max())
    return float(ring / f.max())


def solve_modes(
    profile: Grid2D,
    polarization: str,
    wavelength: float,
    max_modes: int = 6,
    n_cutoff: float | None = None,
) -> list[GuidedMode]:
    """Guided modes of an index profile, sorted by decreasing beta.

    Parameters
    ----------
    profile : Grid2D
        Refractive index samples.
    polarization : {'H', 'V'}
    wavelength : float
        Vacuum wavelength in um.
    max_modes : int
        Number of eigenpairs requested from the shift-invert iteration.
    n_cutoff : float, optional
        Modes need ``beta > k0 * n_cutoff`` to count as guided.  Defaults to
        the median index on the domain boundary (the substrate).

    Returns
    -------
    list of GuidedMode
        Possibly empty when nothing is guided.
    """
    k0 = 2 * math.pi / wavelength
    n = profile.values
    if n_cutoff is None:
        ring = np.concatenate([n[0], n[-1], n[:, 0], n[:, -1]])
        n_cutoff = float(np.median(ring))
    A = helmholtz_operator(profile, polarization, wavelength)
    size = A.shape[0]
    k = min(max_modes, size - 2)
    sigma = (k0 * n.max()) ** 2
    v0 = np.random.default_rng(12345).standard_normal(size)
    try:
        vals, vecs = eigs(A.tocsc(), k=k, sigma=sigma, v0=v0, which="LM")
    except ArpackNoConvergence as exc:
        raise ModeSolverError(
            f"eigensolver did not converge ({len(exc.eigenvalues)} of {k} eigenpairs; "
            f"grid {profile.shape}, lambda={wavelength} um, pol={polarization})"
        ) from exc

    order = np.argsort(-vals.real)
    Y, Z = profile.mesh()
    modes = []
    for col in order:
        lam2 = vals[col].real
        if lam2 <= (k0 * n_cutoff) ** 2:
            continue
        if abs(vals[col].imag) > 1e-8 * abs(lam2):
            log.warning("discarding eigenvalue with imaginary part %g", vals[col].imag)
            continue
        vec = vecs[:, col]
        vec = vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))]))
        vec = vec.real
        residual = float(np.linalg.norm(A @ vec - lam2 * vec) / np.linalg.norm(lam2 * vec))
        f = vec.reshape(profile.shape)
        f = f / math.sqrt((f * f).sum() * profile.cell_area)
        fld = profile.with_values(f)
        label = classify_mode(fld)
        fld = profile.with_values(_fix_sign(f, Y, Z, label))
        frac = boundary_fraction(fld)
        if frac > 1e-2:
            log.warning(
                "mode %s (%s, %.4f um) reaches the domain edge at %.2g of its peak; "
                "enlarge the margin", label, polarization, wavelength, frac,
            )
        modes.append(GuidedMode(polarization, label, math.sqrt(lam2), fld, wavelength, residual))
    return modes


@functools.lru_cache(maxsize=128)
def _solve_cached(geometry, polarization, wavelength, spacing, margin, cover, max_modes):
    profile = build_index_profile(geometry, polarization, wavelength, spacing, margin, cover)
    n_s = geometry.substrate_index(polarization, wavelength)
    return tuple(solve_modes(profile, polarization, wavelength, max_modes, n_cutoff=n_s))


def guided_modes(
    geometry: WaveguideGeometry,
    polarization: str,
    wavelength: float,
    spacing: float = DEFAULT_SPACING,
    margin: float = DEFAULT_MARGIN,
    cover: float = DEFAULT_COVER,
    max_modes: int = 6,
    extrapolate: bool = True,
) -> list[GuidedMode]:
    """Guided modes of ``geometry``, one per order label.

    With ``extrapolate`` the propagation constants are Richardson-extrapolated
    from the solutions at ``2*spacing`` and ``spacing`` (second-order scheme);
    fields come from the finer grid.
    """
    args = (geometry, polarization, float(wavelength), float(spacing), float(margin), float(cover))
    fine = _unique(_solve_cached(*args, max_modes))
    if not extrapolate:
        return fine
    coarse_args = args[:3] + (2 * float(spacing),) + args[4:]
    coarse = {m.order: m for m in _unique(_solve_cached(*coarse_args, max_modes))}
    out = []
    for m in fine:
        c = coarse.get(m.order)
        beta = m.beta if c is None else (4 * m.beta - c.beta) / 3
        out.append(GuidedMode(m.polarization, m.order, beta, m.field, m.wavelength, m.residual))
    return out


def _unique(modes) -> list[GuidedMode]:
    seen, out = set(), []
    for m in modes:
        if m.order in seen:
            log.warning("duplicate mode label %s; keeping the higher beta", m.label)
            continue
        seen.add(m.order)
        out.append(m)
    return out


def find_mode(modes, order) -> GuidedMode:
    """The mode with label ``order`` (tuple like (1, 0) or string '10')."""
    if isinstance(order, str):
        order = (int(order[0]), int(order[1]))
    for m in modes:
        if m.order == tuple(order):
            return m
    raise LookupError(f"mode {order} not among {[m.label for m in modes]}")


def mode_overlap(*modes: GuidedMode) -> float:
    """Overlap integral of two or three real mode profiles on a common grid."""
    if len(modes) not in (2, 3):
        raise ValueError("mode_overlap takes two or three modes")
    ref = modes[0].field
    prod = ref.values.copy()
    for m in modes[1:]:
        fld = m.field if m.field.same_axes(ref) else m.field.resample(ref)
        prod = prod * fld.values
    return float(prod.sum() * ref.cell_area)


def convergence_sequence(
    geometry: WaveguideGeometry,
    polarization: str,
    wavelength: float,
    spacings=(0.1, 0.05, 0.025),
    margin: float = DEFAULT_MARGIN,
    max_modes: int = 4,
) -> dict[tuple[int, int], list[float]]:
    """Raw finite-difference beta of each mode label for a sequence of spacings."""
    table: dict[tuple[int, int], list[float]] = {}
    for h in spacings:
        for m in guided_modes(geometry, polarization, wavelength, h, margin,
                              max_modes=max_modes, extrapolate=False):
            table.setdefault(m.order, []).append(m.beta)
    return {k: v for k, v in table.items() if len(v) == len(spacings)}
