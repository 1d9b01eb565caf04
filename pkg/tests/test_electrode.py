import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from modeconv.electrode import (
    EDGE_EXCLUSION, ElectrodeConfig, FieldSingularityError, ez_field, field_map, index_modulation,
)
from modeconv.material import default_material
from modeconv.modesolver import WaveguideGeometry, build_index_profile


def ez_oracle(v, a, d, y, z):
    # same field written through the complex potential of a coplanar gap
    w = (y - d) + 1j * z
    return v / math.pi * np.abs(np.real(1 / np.sqrt(w * w - a * a + 0j)))


coords = st.floats(-8, 8)
depths = st.floats(1e-3, 8)


@given(coords, depths, st.floats(0.3, 5), st.floats(-3, 3))
def test_matches_complex_form(y, z, a, d):
    cfg = ElectrodeConfig(a, d)
    ref = ez_oracle(1.0, a, d, y, z)
    assert ez_field(cfg, y, z) == pytest.approx(ref, rel=1e-9, abs=1e-12)


@given(st.floats(0, 6), depths, st.floats(0.3, 5), st.floats(-3, 3))
def test_even_about_gap_centre(u, z, a, d):
    cfg = ElectrodeConfig(a, d)
    assert ez_field(cfg, d + u, z) == pytest.approx(ez_field(cfg, d - u, z), rel=1e-12, abs=1e-15)


@given(st.floats(-10, 10), coords, depths)
def test_linear_in_voltage(v, y, z):
    cfg = ElectrodeConfig(1.5, 0.5, voltage=v)
    assert ez_field(cfg, y, z) == pytest.approx(v * ez_field(ElectrodeConfig(1.5, 0.5), y, z), abs=1e-14)


def test_surface_values():
    cfg = ElectrodeConfig(2.0, 0.0, voltage=3.0)
    assert ez_field(cfg, 1.0, 0.0) == 0.0
    assert ez_field(cfg, 3.0, 0.0) == pytest.approx(3.0 / (math.pi * math.sqrt(9 - 4)))
    # the vertical component vanishes on the plane through the gap centre
    assert ez_field(cfg, 0.0, 1.5) == 0.0
    assert ez_field(cfg, 2.5, 1.5) > ez_field(cfg, 0.5, 1.5) > 0


def test_field_is_harmonic():
    cfg = ElectrodeConfig(1.2, 0.4)
    h = 1e-3
    y = np.linspace(-4, 4, 9)
    z = np.linspace(0.3, 4, 9)
    Y, Z = np.meshgrid(y, z)
    lap = (ez_field(cfg, Y + h, Z) + ez_field(cfg, Y - h, Z) + ez_field(cfg, Y, Z + h)
           + ez_field(cfg, Y, Z - h) - 4 * ez_field(cfg, Y, Z)) / h**2
    assert np.abs(lap).max() < 1e-4 * np.abs(ez_field(cfg, Y, Z)).max() / h


def test_decays_far_away():
    cfg = ElectrodeConfig(1.0)
    assert ez_field(cfg, 1.0, 100.0) < 0.01 * ez_field(cfg, 1.0, 1.0)


def test_errors():
    cfg = ElectrodeConfig(1.0, 0.5)
    with pytest.raises(FieldSingularityError):
        ez_field(cfg, 1.5, 0.0)
    with pytest.raises(ValueError):
        ez_field(cfg, 0.0, -0.1)
    with pytest.raises(ValueError):
        ElectrodeConfig(0.0)


def test_period_warning():
    with pytest.warns(UserWarning, match="whole number"):
        ElectrodeConfig(1.0, period_lambda=103.0, length_L=2e4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ElectrodeConfig(1.0, period_lambda=100.0, length_L=2e4)
        ElectrodeConfig(1.0).replace(period_lambda=103.0)


@pytest.fixture(scope="module")
def profile():
    return build_index_profile(WaveguideGeometry(3.0, 2.0), "V", 0.82, 0.05)


def test_modulation_map(profile):
    cfg = ElectrodeConfig(1.3, 1.0)
    dn = index_modulation(cfg, "V", profile)
    Y, Z = profile.mesh()
    assert np.all(dn.values[Z < 0] == 0)
    assert np.all(dn.values[Z > 0] <= 0)
    i, j = np.unravel_index(np.argmin(dn.values), dn.shape)
    assert Z[i, j] > 0
    # r33 > r23: V modes see the larger shift
    dn_h = index_modulation(cfg, "H", build_index_profile(WaveguideGeometry(3.0, 2.0), "H", 0.82, 0.05))
    assert dn.values.min() < dn_h.values.min()


def test_modulation_matches_pointwise(profile):
    cfg = ElectrodeConfig(1.3, 1.0, voltage=2.0)
    dn = index_modulation(cfg, "V", profile)
    Y, Z = profile.mesh()
    i, j = 40, 30
    assert Z[i, j] > 0
    n = profile.values[i, j]
    expected = -0.5 * n**3 * default_material().eo.r_i3("z") * ez_field(cfg, Y[i, j], Z[i, j])
    assert dn.values[i, j] == pytest.approx(expected, rel=1e-12)


def test_field_map_excludes_edges():
    cfg = ElectrodeConfig(1.0)
    rows = field_map(cfg, [-1.0, 0.0, 1.0, 2.0], [0.0, 0.5])
    assert rows.shape == (8, 3)
    edge = (np.abs(np.abs(rows[:, 0]) - 1.0) < EDGE_EXCLUSION) & (rows[:, 1] == 0)
    assert np.all(np.isnan(rows[edge, 2]))
    assert np.all(np.isfinite(rows[~edge, 2]))
