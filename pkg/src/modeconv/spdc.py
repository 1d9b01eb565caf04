"""Type-II quasi-phase-matched down-conversion in the multimode source section.

Two processes share one H-polarized pump in the 10 mode:

    process 1:  10_P -> 00_H (signal) + 10_V (idler)
    process 2:  10_P -> 10_H (signal) + 00_V (idler)

The pump is monochromatic, so each process is described by a signal-wavelength
amplitude ``a(ls) = O(ls) * sinc(dbeta(ls) L / 2)`` where ``O`` is the overlap
of the three transverse modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import bisect

from .modesolver import WaveguideGeometry, find_mode, guided_modes, mode_overlap

# (pump order, signal H order, idler V order)
PROCESSES = {
    1: ((1, 0), (0, 0), (1, 0)),
    2: ((1, 0), (1, 0), (0, 0)),
}

REFERENCE_TRIPLE = (0.392, 0.750776, 0.820435)
# pump wavelength conserving energy for the quoted signal/idler pair (392.03 nm)
DEFAULT_PUMP = 1.0 / (1.0 / REFERENCE_TRIPLE[1] + 1.0 / REFERENCE_TRIPLE[2])


def idler_wavelength(pump: float, signal):
    """Energy conservation 1/lp = 1/ls + 1/li."""
    signal = np.asarray(signal, dtype=float)
    inv = 1.0 / pump - 1.0 / signal
    if np.any(inv <= 0):
        raise ValueError("signal wavelength must exceed the pump wavelength")
    out = 1.0 / inv
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QpmSourceConfig:
    """Periodically poled multimode source waveguide.

    ``qpm_period=None`` designs the poling period so that the two processes,
    on average, are phase-matched at ``center_signal``.

    Mode solving uses a coarser default grid than the mode solver itself:
    the spectra depend on differences of propagation constants, which the
    Richardson-extrapolated 50 nm grid already resolves to ~1e-5 rad/um.
    """

    pump_wavelength: float = DEFAULT_PUMP
    qpm_period: float | None = None
    crystal_length: float = 1000.0
    geometry: WaveguideGeometry = field(default_factory=lambda: WaveguideGeometry(5.0, 2.0))
    center_signal: float = 0.750776
    half_window: float = 0.012
    nodes: int = 7
    spacing: float = 0.05
    margin: float = 5.0
    pump_modes: int = 10

    def __post_init__(self):
        for name in ("pump_wavelength", "crystal_length", "half_window", "spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.qpm_period is not None and not self.qpm_period > 0:
            raise ValueError("qpm_period must be positive")
        if self.center_signal <= self.pump_wavelength:
            raise ValueError("signal wavelength must exceed the pump wavelength")
        if self.nodes < 4:
            raise ValueError("need at least four interpolation nodes")


def _modes(cfg: QpmSourceConfig, pol: str, wavelength: float, max_modes: int = 6):
    return guided_modes(cfg.geometry, pol, wavelength, cfg.spacing, cfg.margin,
                        max_modes=max_modes)


def pump_mode(cfg: QpmSourceConfig):
    return find_mode(_modes(cfg, "H", cfg.pump_wavelength, cfg.pump_modes), (1, 0))


def _process(process_id: int):
    try:
        return PROCESSES[process_id]
    except KeyError:
        raise ValueError(f"process_id must be 1 or 2, got {process_id}") from None


def _material_mismatch(cfg: QpmSourceConfig, process_id: int, signal_wavelength: float) -> float:
    # beta_P - beta_s - beta_i, before the poling grating
    _, s_order, i_order = _process(process_id)
    li = idler_wavelength(cfg.pump_wavelength, signal_wavelength)
    bp = pump_mode(cfg).beta
    bs = find_mode(_modes(cfg, "H", float(signal_wavelength)), s_order).beta
    bi = find_mode(_modes(cfg, "V", li), i_order).beta
    return bp - bs - bi


def design_qpm_period(cfg: QpmSourceConfig, process_id: int | None = None,
                      signal_wavelength: float | None = None) -> float:
    """Poling period phase-matching a process at ``signal_wavelength``.

    With ``process_id=None`` the grating vector is the mean of the two
    processes' requirements.
    """
    lam = cfg.center_signal if signal_wavelength is None else signal_wavelength
    ids = tuple(PROCESSES) if process_id is None else (process_id,)
    k = sum(_material_mismatch(cfg, pid, lam) for pid in ids) / len(ids)
    if k <= 0:
        raise ValueError("process cannot be quasi-phase-matched with a positive period")
    return 2 * math.pi / k


def resolved_qpm_period(cfg: QpmSourceConfig) -> float:
    return cfg.qpm_period if cfg.qpm_period is not None else design_qpm_period(cfg)


def qpm_mismatch(cfg: QpmSourceConfig, process_id: int, signal_wavelength: float) -> float:
    """beta_P - beta_s - beta_i - 2 pi / period, solving modes at this exact wavelength."""
    return _material_mismatch(cfg, process_id, signal_wavelength) - 2 * math.pi / resolved_qpm_period(cfg)


class SourceModel:
    """Propagation constants and overlaps interpolated across the signal window.

    Modes are solved at ``cfg.nodes`` signal wavelengths (and the matching
    idler wavelengths); cubic splines carry them in between.
    """

    def __init__(self, cfg: QpmSourceConfig):
        self.cfg = cfg
        c, hw = cfg.center_signal, cfg.half_window
        self.signal_nodes = np.linspace(c - hw, c + hw, cfg.nodes)
        self.idler_nodes = idler_wavelength(cfg.pump_wavelength, self.signal_nodes)

    @cached_property
    def pump(self):
        return pump_mode(self.cfg)

    @cached_property
    def qpm_period(self) -> float:
        return resolved_qpm_period(self.cfg)

    @cached_property
    def _tables(self):
        betas = {pid: [] for pid in PROCESSES}
        overlaps = {pid: [] for pid in PROCESSES}
        for ls, li in zip(self.signal_nodes, self.idler_nodes):
            sig = _modes(self.cfg, "H", float(ls))
            idl = _modes(self.cfg, "V", float(li))
            for pid, (_, so, io) in PROCESSES.items():
                ms, mi = find_mode(sig, so), find_mode(idl, io)
                betas[pid].append(ms.beta + mi.beta)
                overlaps[pid].append(mode_overlap(self.pump, ms, mi))
        return (
            {pid: CubicSpline(self.signal_nodes, v) for pid, v in betas.items()},
            {pid: CubicSpline(self.signal_nodes, v) for pid, v in overlaps.items()},
        )

    def mismatch(self, process_id: int, signal_wavelength):
        _process(process_id)
        lam = np.asarray(signal_wavelength, dtype=float)
        lo, hi = self.signal_nodes[0], self.signal_nodes[-1]
        if np.any(lam < lo - 1e-12) or np.any(lam > hi + 1e-12):
            raise ValueError(f"signal wavelength outside the modelled window [{lo}, {hi}] um")
        out = self.pump.beta - self._tables[0][process_id](lam) - 2 * math.pi / self.qpm_period
        return float(out) if out.ndim == 0 else out

    def overlap(self, process_id: int, signal_wavelength):
        out = self._tables[1][process_id](np.asarray(signal_wavelength, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def phase_matched_signal(self, process_id: int) -> float:
        """Signal wavelength with zero mismatch, by bisection over the window."""
        f = lambda lam: self.mismatch(process_id, lam)
        lo, hi = float(self.signal_nodes[0]), float(self.signal_nodes[-1])
        if f(lo) * f(hi) > 0:
            raise ValueError(
                f"process {process_id} is not phase-matched inside [{lo}, {hi}] um; "
                "widen the window or adjust the poling period"
            )
        return bisect(f, lo, hi, xtol=1e-10)


@dataclass(frozen=True, eq=False)
class ProcessSpectrum:
    """Signal-wavelength amplitude of one process (real, arbitrary units)."""

    process_id: int
    signal_wavelengths: np.ndarray
    amplitude: np.ndarray

    @property
    def intensity(self) -> np.ndarray:
        return self.amplitude**2

    @property
    def peak_wavelength(self) -> float:
        return float(self.signal_wavelengths[np.argmax(self.intensity)])


def process_spectrum(model: SourceModel, process_id: int, signal_grid) -> ProcessSpectrum:
    lam = np.asarray(signal_grid, dtype=float)
    arg = model.mismatch(process_id, lam) * model.cfg.crystal_length / 2
    amp = model.overlap(process_id, lam) * np.sinc(arg / math.pi)
    return ProcessSpectrum(process_id, lam, amp)


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    """Density matrix on |H mode, V mode> with basis order 00,00 / 00,10 / 10,00 / 10,10."""

    w: float
    v: float
    rho: np.ndarray


def positivity_bound(w: float) -> float:
    return math.sqrt(max(w * (1 - w), 0.0))


def build_density_matrix(w: float, v: float) -> TwoPhotonState:
    """w |00_H,10_V><.| + (1-w) |10_H,00_V><.| + v (coherences)."""
    if not 0 <= w <= 1:
        raise ValueError(f"w must lie in [0, 1], got {w}")
    bound = positivity_bound(w)
    if v < 0 or v > bound + 1e-9:
        raise ValueError(f"coherence v={v} must lie in [0, sqrt(w(1-w))] = [0, {bound:.6g}]")
    rho = np.zeros((4, 4))
    rho[1, 1] = w
    rho[2, 2] = 1 - w
    rho[1, 2] = rho[2, 1] = v
    return TwoPhotonState(float(w), float(v), rho)


def estimate_wv(spec1: ProcessSpectrum, spec2: ProcessSpectrum) -> tuple[float, float]:
    """Population weight and coherence from the two process amplitudes.

    ``w = N1 / (N1 + N2)`` and ``v = |int a1* a2| / (N1 + N2)`` with
    trapezoidal weights, which keep ``v <= sqrt(w (1 - w))`` exact.
    """
    if spec1.signal_wavelengths.shape != spec2.signal_wavelengths.shape or not np.allclose(
        spec1.signal_wavelengths, spec2.signal_wavelengths, rtol=0, atol=1e-12
    ):
        raise ValueError("spectra must share a wavelength grid")
    lam = spec1.signal_wavelengths
    a1, a2 = spec1.amplitude, spec2.amplitude
    n1 = np.trapezoid(np.abs(a1) ** 2, lam)
    n2 = np.trapezoid(np.abs(a2) ** 2, lam)
    total = n1 + n2
    if not total > 0:
        raise ValueError("spectra carry no weight")
    cross = abs(np.trapezoid(np.conj(a1) * a2, lam))
    w = float(n1 / total)
    v = float(min(cross / total, positivity_bound(w)))
    return w, v
