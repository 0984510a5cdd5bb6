import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from packspec import space as sp


def test_build_rejects_bad_input():
    with pytest.raises(sp.SpaceError):
        sp.build(3, [(0, 1, 1.0)])  # disconnected
    with pytest.raises(sp.SpaceError):
        sp.build(2, [(0, 1, -1.0)])
    with pytest.raises(sp.SpaceError):
        sp.build(2, [(0, 0, 1.0)])
    with pytest.raises(sp.SpaceError):
        sp.build(2, [(0, 1, 1.0)], measure=[1.0, -0.5])


def test_two_point_space():
    s = sp.build(2, [(0, 1, 1.0)])
    assert s.dist[0, 1] == 1.0
    assert np.allclose(s.measure, [0.5, 0.5])
    assert sp.diameter(s) == 1.0
    assert list(sp.ball(s, 0, 1.0)) == [0]  # open ball
    assert sorted(sp.ball(s, 0, 1.0 + 1e-9)) == [0, 1]


def test_circle_distances_wrap():
    s = sp.circle(2 * math.pi, 24)
    h = 2 * math.pi / 24
    assert s.dist[0, 23] == pytest.approx(h)
    assert s.dist[0, 12] == pytest.approx(math.pi)
    assert sp.diameter(s) == pytest.approx(math.pi)
    assert s.measure.sum() == pytest.approx(1.0)
    assert np.allclose(s.edge_measure, h / (2 * math.pi))


def test_interval_edge_measure_is_cell_length():
    s = sp.interval(math.pi, 11)
    assert np.allclose(s.edge_measure, 0.1)
    assert s.measure[0] == pytest.approx(s.measure[5] / 2)


def test_theta_space_shape():
    s = sp.theta_space(0.1)
    assert s.dist[0, 1] == pytest.approx(math.pi + 2)
    assert sp.diameter(s) == pytest.approx(math.pi + 2, abs=0.1)
    assert s.meta["volume"] == pytest.approx(2 + 2 * math.pi)


def test_roundtrip_is_bit_identical(tmp_path):
    s = sp.random_geometric(12, 0.4, seed=3)
    text = sp.dumps(s)
    path = tmp_path / "s.json"
    path.write_text(text)
    t = sp.load(path)
    assert sp.dumps(t) == text
    assert np.array_equal(t.dist, s.dist)
    assert json.loads(text)["schema_version"] == sp.SCHEMA_VERSION


def test_lip_local_of_distance_function():
    s = sp.interval(1.0, 11)
    f = s.dist[0]
    assert np.allclose(sp.lip_local_all(s, f), 1.0)
    assert sp.lip_global(s, f) == pytest.approx(1.0)


def test_doubling_constant_circle_is_about_two():
    cd = sp.doubling_constant(sp.circle(1.0, 64))
    assert 1.9 <= cd <= 4.0


def test_induced_components():
    s = sp.circle(1.0, 10)
    assert sp.induced_components(s, [0, 1, 3, 4, 9]) == [[0, 1, 9], [3, 4]]


@settings(max_examples=25, deadline=None)
@given(n=st.integers(4, 16), seed=st.integers(0, 10_000))
def test_random_geometric_is_a_metric_measure_space(n, seed):
    s = sp.random_geometric(n, 0.4, seed)
    d = s.dist
    assert np.allclose(d, d.T)
    assert np.all(np.diag(d) == 0)
    assert np.all(d[~np.eye(n, dtype=bool)] > 0)
    # triangle inequality
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-12)
    assert s.measure.sum() == pytest.approx(1.0)
    assert np.all(s.measure > 0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(3, 40), L=st.floats(0.5, 20))
def test_circle_diameter(n, L):
    s = sp.circle(L, n)
    assert sp.diameter(s) == pytest.approx((n // 2) * L / n)
