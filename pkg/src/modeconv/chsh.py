"""CHSH test on the spatial-mode qubits of the H and V photons.

Qubit encoding: first slot is the H photon, second the V photon; on each
slot index 0 is the 00 mode and index 1 the 10 mode.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .coupler import CouplingDesign, TransferMatrix, voltage_for_angle
from .spdc import TwoPhotonState

TSIRELSON = 2 * math.sqrt(2)

_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


class OptimizationError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def _rho(state) -> np.ndarray:
    rho = state.rho if isinstance(state, TwoPhotonState) else np.asarray(state)
    if rho.shape != (4, 4):
        raise ValueError("two-photon density matrix must be 4x4")
    return rho


def _wrap(theta: float) -> float:
    t = math.fmod(theta, math.pi)
    if t < 0:
        t += math.pi
    # a tiny negative remainder can round up to pi itself
    return 0.0 if t >= math.pi else t


@dataclass(frozen=True)
class MeasurementSettings:
    """Analyzer angles in radians: (theta1, theta1') for H, (theta2, theta2') for V.

    Angles are stored modulo pi, which leaves every correlation unchanged.
    """

    theta1: float
    theta1p: float
    theta2: float
    theta2p: float

    def __post_init__(self):
        for name in ("theta1", "theta1p", "theta2", "theta2p"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, _wrap(float(value)))

    @classmethod
    def from_degrees(cls, theta1, theta1p, theta2, theta2p) -> "MeasurementSettings":
        return cls(*(math.radians(t) for t in (theta1, theta1p, theta2, theta2p)))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.theta1, self.theta1p, self.theta2, self.theta2p

    def degrees(self) -> tuple[float, float, float, float]:
        return tuple(math.degrees(t) for t in self.as_tuple())


# canonical optimum for the maximally entangled state
MAXIMAL_SETTINGS = MeasurementSettings.from_degrees(90.0, 45.0, 22.5, 67.5)


@dataclass(frozen=True)
class PlanarCorrelation:
    """Correlation-matrix entries <s_i x s_j> for i, j in {x, z}."""

    t_xx: float
    t_zz: float
    t_xz: float
    t_zx: float

    def matrix(self) -> np.ndarray:
        return np.array([[self.t_xx, self.t_xz], [self.t_zx, self.t_zz]])


@dataclass(frozen=True)
class ChshResult:
    settings: MeasurementSettings
    correlations: tuple[float, float, float, float]
    s_value: float
    voltages: tuple[float, float, float, float] | None = field(default=None)

    def with_voltages(self, design_H: CouplingDesign, design_V: CouplingDesign) -> "ChshResult":
        s = self.settings
        volts = (
            voltage_for_angle(s.theta1, design_H),
            voltage_for_angle(s.theta1p, design_H),
            voltage_for_angle(s.theta2, design_V),
            voltage_for_angle(s.theta2p, design_V),
        )
        return replace(self, voltages=volts)


def projection_state(theta: float, shift: float = 0.0) -> np.ndarray:
    """cos(theta)|00> + sin(theta)|10>, or its orthogonal partner for shift = pi/2."""
    if not (shift == 0 or math.isclose(shift, math.pi / 2)):
        raise ValueError("shift must be 0 or pi/2")
    t = theta + shift
    return np.array([math.cos(t), math.sin(t)])


def coincidence_probabilities(state, theta1: float, theta2: float) -> np.ndarray:
    """P[m, n] of finding H in mode m0 and V in mode n0 after the rotations."""
    rho = _rho(state)
    out = np.empty((2, 2))
    for m, n in itertools.product((0, 1), repeat=2):
        ket = np.kron(projection_state(theta1, m * math.pi / 2), projection_state(theta2, n * math.pi / 2))
        out[m, n] = float(np.real(ket @ rho @ ket))
    return out


def correlation(state, theta1: float, theta2: float) -> float:
    p = coincidence_probabilities(state, theta1, theta2)
    return float(p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0])


def _observable(theta: float) -> np.ndarray:
    # |theta><theta| - |theta+pi/2><theta+pi/2|
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return np.array([[c, s], [s, -c]])


def _correlations(r4: np.ndarray, angles) -> tuple[float, float, float, float]:
    # r4 is Re(rho) reshaped to (h, v, h', v'); projectors are real
    t1, t1p, t2, t2p = angles
    o1, o1p, o2, o2p = (_observable(t) for t in (t1, t1p, t2, t2p))
    e = lambda a, b: float(np.einsum("ij,kl,jlik->", a, b, r4))
    return e(o1, o2), e(o1p, o2), e(o1p, o2p), e(o1, o2p)


def chsh_value(state, settings: MeasurementSettings) -> ChshResult:
    """S = E(t1, t2) + E(t1', t2) + E(t1', t2') - E(t1, t2')."""
    s = settings
    e = (
        correlation(state, s.theta1, s.theta2),
        correlation(state, s.theta1p, s.theta2),
        correlation(state, s.theta1p, s.theta2p),
        correlation(state, s.theta1, s.theta2p),
    )
    return ChshResult(settings, e, e[0] + e[1] + e[2] - e[3])


def planar_correlation(state) -> PlanarCorrelation:
    rho = _rho(state)
    ev = lambda a, b: float(np.real(np.trace(rho @ np.kron(a, b))))
    return PlanarCorrelation(ev(_X, _X), ev(_Z, _Z), ev(_X, _Z), ev(_Z, _X))


def analytic_planar_bound(state) -> float:
    """Largest S reachable with real-plane analyzers: 2 sqrt(s1^2 + s2^2).

    s1, s2 are the singular values of the x-z block of the correlation
    matrix; for the source state this is 2 sqrt(t_xx^2 + t_zz^2).
    """
    sv = np.linalg.svd(planar_correlation(state).matrix(), compute_uv=False)
    return float(2 * math.sqrt(sv[0] ** 2 + sv[1] ** 2))


def _default_starts() -> list[tuple[float, float, float, float]]:
    d = math.radians
    starts = [
        MAXIMAL_SETTINGS.as_tuple(),
        tuple(d(t) for t in (87.850, 42.832, 24.598, 69.720)),
    ]
    # fixed lattice of further starts, spread over the torus
    for k in range(6):
        base = (k + 0.5) * math.pi / 6
        starts.append((base, base + math.pi / 4, base + math.pi / 8, base + 3 * math.pi / 8))
    return starts


def optimize_settings(state, starts=None, tol: float = 1e-12) -> ChshResult:
    """Settings maximizing S by multi-start Nelder-Mead over the four angles.

    Every start is refined independently and the largest S wins. If no
    start reports convergence an :class:`OptimizationError` carries the
    best result found.
    """
    rho = _rho(state)
    r4 = np.real(rho).reshape(2, 2, 2, 2)

    def neg_s(x):
        e = _correlations(r4, x)
        return -(e[0] + e[1] + e[2] - e[3])

    best = None
    converged = False
    for x0 in starts or _default_starts():
        res = minimize(
            neg_s, np.asarray(x0, float), method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": tol, "maxiter": 4000},
        )
        converged |= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    result = chsh_value(rho, MeasurementSettings(*best.x))
    if not converged:
        raise OptimizationError("no start converged", best=result)
    return result


def apply_converters(state, m_h, m_v) -> TwoPhotonState:
    """rho' = (M_H x M_V) rho (M_H x M_V)^dagger for the two mode converters.

    The returned state carries the full ``rho'``; its ``w`` and ``v`` are
    read off the |00,10>/|10,00> block and only describe ``rho'`` when the
    converters preserve the source form.
    """
    mats = []
    for m in (m_h, m_v):
        m = m.matrix if isinstance(m, TransferMatrix) else np.asarray(m, dtype=complex)
        if np.abs(m.conj().T @ m - np.eye(2)).max() > 1e-9:
            raise ValueError("converter matrices must be unitary")
        mats.append(m)
    u = np.kron(mats[0], mats[1])
    rho = u @ _rho(state) @ u.conj().T
    return TwoPhotonState(float(np.real(rho[1, 1])), float(abs(rho[1, 2])), rho)


def detection_probabilities(rho) -> np.ndarray:
    """P[m, n] after an ideal mode demultiplexer: the diagonal of rho."""
    return np.real(np.diag(_rho(rho))).reshape(2, 2)


def concurrence(state) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    rho = _rho(state).astype(complex)
    yy = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))
    r = rho @ yy @ rho.conj() @ yy
    lam = np.sqrt(np.clip(np.sort(np.real(np.linalg.eigvals(r)))[::-1], 0, None))
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))
