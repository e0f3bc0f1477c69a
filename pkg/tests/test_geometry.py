import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import sinusoidal_fields, wavy_fields
from kklab.config import ScenarioConfig
from kklab.errors import DomainError, FrameError, SingularityError
from kklab.geometry import (BundleMetric, FieldBundle, christoffel, conformal_view, fd_gradient, field_strength,
                            minkowski)

coords = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)


def test_flat_bundle_metric_components():
    cfg = ScenarioConfig(base_dim=4, beta=2.0)
    f = FieldBundle.flat(4, a=1.5, A=[0.1, 0.2, 0.0, -0.3])
    g = BundleMetric(f, cfg).metric(np.zeros(4))
    A = np.array([0.1, 0.2, 0.0, -0.3])
    expect = np.empty((5, 5))
    expect[:4, :4] = minkowski(4) - (1.5 * 2.0) ** 2 * np.outer(A, A)
    expect[:4, 4] = expect[4, :4] = -1.5 ** 2 * 2.0 * A
    expect[4, 4] = -1.5 ** 2
    np.testing.assert_allclose(g, expect, rtol=0, atol=1e-15)
    assert np.sum(np.linalg.eigvalsh(g) > 0) == 1


@given(coords, st.sampled_from([1, -1]), st.floats(0.3, 3.0))
def test_inverse_and_frame_identities(x, ve, beta):
    cfg = ScenarioConfig(base_dim=3, varepsilon=ve, beta=beta)
    bm = BundleMetric(wavy_fields(3), cfg)
    g, inv = bm.metric(x), bm.inverse(x)
    np.testing.assert_allclose(g @ inv, np.eye(4), atol=1e-11)
    ids = bm.check_frame_identities(x)
    assert max(ids.values()) < 1e-12
    k, _ = bm.frame(x)
    assert np.allclose(bm.metric(x, y=7.3), g)  # cylinder condition
    assert k @ g @ k < 0


@given(coords)
def test_analytic_christoffel_matches_finite_differences(x):
    bm = BundleMetric(wavy_fields(3), ScenarioConfig(base_dim=3))
    z = np.append(x, 0.0)
    analytic = bm.christoffel(x)
    numeric = christoffel(lambda p: bm.metric(p[:3]), z)
    np.testing.assert_allclose(analytic, numeric, atol=1e-7)
    assert np.allclose(analytic, np.transpose(analytic, (0, 2, 1)))


def test_christoffel_of_polar_plane():
    # flat plane in polar coordinates: Gamma^r_pp = -r, Gamma^p_rp = 1/r
    def g(p):
        return np.diag([1.0, p[0] ** 2])

    G = christoffel(g, np.array([2.0, 0.4]))
    assert G[0, 1, 1] == pytest.approx(-2.0, abs=1e-8)
    assert G[1, 0, 1] == pytest.approx(0.5, abs=1e-8)


def test_fd_gradient_orders():
    f = np.sin
    x = np.array([0.7])
    e2 = abs(fd_gradient(lambda p: f(p[0]), x, 1e-2, order=2)[0] - np.cos(0.7))
    e4 = abs(fd_gradient(lambda p: f(p[0]), x, 1e-2, order=4)[0] - np.cos(0.7))
    assert e4 < e2 / 100


def test_field_strength_uniform():
    f = sinusoidal_fields(4, E=0.3)
    F = field_strength(f, np.array([0.0, 0.5, 0.0, 0.0]))
    assert F[1, 0] == pytest.approx(0.3) and F[0, 1] == pytest.approx(-0.3)
    np.testing.assert_allclose(F, -F.T)


def test_field_strength_finite_difference_fallback():
    f = wavy_fields(3)
    x = np.array([0.2, 0.4, -0.1])
    F = field_strength(f, x)
    # d_0 A_1 - d_1 A_0 = 0.1 sin(x2) + 0.2 sin(x1)
    assert F[0, 1] == pytest.approx(0.1 * np.sin(-0.1) + 0.2 * np.sin(0.4), abs=1e-9)


def test_domain_and_singularity_errors():
    cfg = ScenarioConfig(base_dim=2)
    bad_a = FieldBundle.flat(2, a=-1.0)
    with pytest.raises(DomainError):
        BundleMetric(bad_a, cfg).metric(np.zeros(2))
    degenerate = FieldBundle(2, lambda x: 1.0, lambda x: np.zeros(2), lambda x: np.diag([1.0, 0.0]))
    with pytest.raises(DomainError):
        degenerate.jordan(np.zeros(2))
    object.__setattr__(degenerate, "_checked", {"signature": True})
    with pytest.raises(SingularityError):
        BundleMetric(degenerate, cfg).inverse(np.zeros(2))
    wrong_sig = FieldBundle(2, lambda x: 1.0, lambda x: np.zeros(2), lambda x: np.diag([-1.0, -1.0]))
    with pytest.raises(DomainError, match="Lorentzian"):
        wrong_sig.jordan(np.zeros(2))


def test_frames():
    f = sinusoidal_fields(4)
    cfg = ScenarioConfig(base_dim=4, a0=1.0)
    x = np.array([0.0, 0.9, 0.0, 0.0])
    a = f.scalar(x)
    assert conformal_view(f, cfg, "einstein").factor(x) == pytest.approx(a)
    assert conformal_view(f, cfg, "rescaled", 0.7).factor(x) == pytest.approx(1 + 0.49 / a ** 2)
    assert conformal_view(f, cfg, "jordan").factor(x) == 1.0
    tach = ScenarioConfig(base_dim=4, epsilon=-1)
    with pytest.raises(FrameError):
        conformal_view(f, tach, "rescaled", 0.5).metric(x)
    v = conformal_view(f, cfg, "rescaled", 0.7)
    G = v.christoffel(x)
    num = christoffel(v.metric, x)
    np.testing.assert_allclose(G, num, atol=1e-8)
