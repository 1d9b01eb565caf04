import math

import numpy as np
import pytest
from scipy.optimize import brentq

from modeconv.modesolver import (
    Grid2D, WaveguideGeometry, boundary_fraction, build_index_profile, classify_mode,
    convergence_sequence, find_mode, guided_modes, helmholtz_operator, make_axes, mode_overlap,
    solve_modes,
)

N_S, DN, DEPTH, LAM = 1.84, 0.02, 2.0, 0.8


def slab_oracle(pol, n_c=1.0, n_f=N_S + DN, n_s=N_S, d=DEPTH, lam=LAM):
    """Fundamental n_eff of an asymmetric slab, TE (H) or TM (V), by root bracketing."""
    k0 = 2 * math.pi / lam

    def f(neff):
        kf = k0 * math.sqrt(n_f**2 - neff**2)
        gs = k0 * math.sqrt(neff**2 - n_s**2)
        gc = k0 * math.sqrt(neff**2 - n_c**2)
        if pol == "V":
            gs *= (n_f / n_s) ** 2
            gc *= (n_f / n_c) ** 2
        return kf * d - math.atan(gs / kf) - math.atan(gc / kf)

    return brentq(f, n_s + 1e-12, n_f - 1e-12, xtol=1e-15)


def slab_profile(h, ny=4, hy=5.0, cover=1.0, margin=5.0):
    # index uniform along y, so y separates out as a wide Dirichlet box
    y = (np.arange(ny) + 0.5) * hy
    n_cov = math.ceil(cover / h - 1e-9)
    z = (np.arange(-n_cov, math.ceil((DEPTH + margin) / h - 1e-9)) + 0.5) * h
    n = np.where(z < 0, 1.0, np.where(z < DEPTH, N_S + DN, N_S))
    return Grid2D(y, z, np.tile(n, (ny, 1)))


@pytest.mark.parametrize("pol", ["H", "V"])
def test_slab_against_analytic_dispersion(pol):
    k0 = 2 * math.pi / LAM
    results = []
    for h in (0.02, 0.01):
        prof = slab_profile(h)
        ny, hy = prof.y.size, prof.dy
        ky2 = 4 / hy**2 * math.sin(math.pi / (2 * (ny + 1))) ** 2
        m = solve_modes(prof, pol, LAM, max_modes=2, n_cutoff=N_S)[0]
        results.append(math.sqrt(m.beta**2 + ky2) / k0)
    exact = slab_oracle(pol)
    errs = [abs(r - exact) for r in results]
    assert errs[1] < 2e-5
    # second order: halving h cuts the error about fourfold
    assert 2.5 < errs[0] / errs[1] < 6
    extrap = (4 * results[1] - results[0]) / 3
    assert abs(extrap - exact) < 2e-6


def test_slab_te_above_tm():
    assert slab_oracle("H") > slab_oracle("V")


def test_make_axes_cell_centred():
    g = WaveguideGeometry(3.0, 2.0)
    y, z = make_axes(g, 0.05, 5.0, 1.0)
    assert np.allclose(y, -y[::-1])
    # interfaces at z = 0 and z = depth fall midway between samples
    assert np.min(np.abs(z)) == pytest.approx(0.025)
    assert np.min(np.abs(z - 2.0)) == pytest.approx(0.025)
    with pytest.raises(ValueError):
        make_axes(g, 0.05, 2.0, 1.0)


def test_geometry_validation():
    with pytest.raises(ValueError):
        WaveguideGeometry(0, 2)
    with pytest.raises(ValueError):
        WaveguideGeometry(3, 2, delta_n=0.5)


def test_index_profile_regions():
    g = WaveguideGeometry(3.0, 2.0)
    p = build_index_profile(g, "V", 0.82, 0.1)
    Y, Z = p.mesh()
    n_s = g.substrate_index("V", 0.82)
    assert np.all(p.values[Z < 0] == 1.0)
    assert np.allclose(p.values[(np.abs(Y) < 1.5) & (Z > 0) & (Z < 2)], n_s + 0.02)
    assert np.allclose(p.values[(Z > 2.1)], n_s)


def test_operator_reduces_to_laplacian_in_uniform_medium():
    y = (np.arange(8) + 0.5) * 0.1
    p = Grid2D(y, y.copy(), np.full((8, 8), 1.7))
    for pol in ("H", "V"):
        A = helmholtz_operator(p, pol, 1.0)
        assert np.allclose((A - A.T).toarray(), 0)


@pytest.fixture(scope="module")
def two_mode_h():
    return guided_modes(WaveguideGeometry(3.0, 2.0), "H", 0.750776, 0.05)


@pytest.fixture(scope="module")
def two_mode_v():
    return guided_modes(WaveguideGeometry(3.0, 2.0), "V", 0.820435, 0.05)


def test_two_mode_section(two_mode_h, two_mode_v):
    for modes in (two_mode_h, two_mode_v):
        assert [m.order for m in modes] == [(0, 0), (1, 0)]
        assert modes[0].beta > modes[1].beta
        assert all(m.residual < 1e-8 for m in modes)


def test_orthonormal(two_mode_h):
    m00, m10 = two_mode_h
    assert mode_overlap(m00, m00) == pytest.approx(1.0, abs=1e-12)
    assert mode_overlap(m10, m10) == pytest.approx(1.0, abs=1e-12)
    assert abs(mode_overlap(m00, m10)) < 1e-10


def test_parity(two_mode_h):
    m00, m10 = two_mode_h
    f0, f1 = m00.field.values, m10.field.values
    # the grid is mirror symmetric in y
    assert np.allclose(f0, f0[::-1], atol=1e-8 * np.abs(f0).max())
    assert np.allclose(f1, -f1[::-1], atol=1e-8 * np.abs(f1).max())


def test_sign_convention(two_mode_h):
    m00, m10 = two_mode_h
    Y, _ = m10.field.mesh()
    assert m00.field.values.sum() > 0
    assert (m10.field.values * Y).sum() > 0


def test_neff_between_substrate_and_core(two_mode_h):
    g = WaveguideGeometry(3.0, 2.0)
    n_s = g.substrate_index("H", 0.750776)
    for m in two_mode_h:
        assert n_s < m.n_eff < n_s + 0.02


def test_fields_decay_at_box(two_mode_h, two_mode_v):
    for m in two_mode_h + two_mode_v:
        assert boundary_fraction(m.field) < 1e-3


def test_margin_insensitivity(two_mode_h):
    wider = guided_modes(WaveguideGeometry(3.0, 2.0), "H", 0.750776, 0.05, margin=6.0)
    for a, b in zip(two_mode_h, wider):
        assert a.beta == pytest.approx(b.beta, rel=1e-7)


def test_convergence_second_order():
    seq = convergence_sequence(WaveguideGeometry(3.0, 2.0), "V", 0.820435, spacings=(0.1, 0.05, 0.025))
    for betas in seq.values():
        d1, d2 = abs(betas[1] - betas[0]), abs(betas[2] - betas[1])
        assert 3.0 < d1 / d2 < 5.5


def test_find_mode_and_classify(two_mode_h):
    assert find_mode(two_mode_h, "10") is two_mode_h[1]
    assert classify_mode(two_mode_h[1].field) == (1, 0)
    with pytest.raises(LookupError):
        find_mode(two_mode_h, (0, 1))


def test_mode_overlap_arity(two_mode_h):
    with pytest.raises(ValueError):
        mode_overlap(two_mode_h[0])


def test_source_section_guides_higher_order():
    modes = guided_modes(WaveguideGeometry(5.0, 2.0), "H", 0.750776, 0.1)
    labels = {m.order for m in modes}
    assert {(0, 0), (1, 0)} <= labels
    assert len(modes) > 2


def test_nothing_guided_below_cutoff():
    p = build_index_profile(WaveguideGeometry(0.2, 0.2, delta_n=0.001), "H", 1.5, 0.1, margin=3.0)
    assert solve_modes(p, "H", 1.5, max_modes=2) == []
