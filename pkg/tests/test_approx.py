import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carleman.approx import (FitError, TargetProfile, cauchy_margin, escape_profile, find_exit_path, fit,
                             rectangle_boundary)
from carleman.shears import ScalarFn

from oracles import remez

T = np.linspace(-1, 1, 2001)
FINE = np.linspace(-1, 1, 40001)


def real_profile(values, t=T):
    return TargetProfile(t.astype(complex), np.asarray(values, complex), np.ones(len(t)))


def test_zero_target():
    cp = fit(real_profile(np.zeros(len(T))), tol=1e-12, zeros=(0.3,), zero_order=2)
    assert cp.error == 0.0
    assert np.all(cp.fn(FINE.astype(complex)) == 0)


def test_identity_target():
    cp = fit(real_profile(T), tol=1e-12)
    assert cp.degree == 8 and cp.error < 1e-13
    z = np.array([0.5 + 0.5j, -2.0])
    assert np.allclose(cp.fn(z), z, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 64), st.integers(0, 10_000))
def test_exact_polynomials_reproduced(degree, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=degree + 1) + 1j * rng.normal(size=degree + 1)
    p = np.polynomial.Polynomial(c)
    cp = fit(real_profile(p(T)), tol=1e-9 * np.abs(c).sum())
    assert cp.error < 1e-9 * np.abs(c).sum()


def test_abs_fit_reaches_tolerance_by_sixteen():
    cp = fit(real_profile(np.abs(T)), tol=0.05, lawson=10)
    assert cp.degree <= 16


@pytest.mark.parametrize("degree", [8, 16, 32, 64])
def test_abs_fit_within_twice_minimax(degree):
    # the best degree-d fit of |x| is even, i.e. the best degree-d/2 fit of sqrt(y) on [0, 1]
    minimax, _ = remez(np.sqrt, degree // 2, 0.0, 1.0)
    assert minimax == pytest.approx(0.2801694990 / degree, rel=0.02)
    cp = fit(real_profile(np.abs(T)), tol=1e-30, degrees=(degree,), strict=False, lawson=10)
    err = np.max(np.abs(cp.fn(FINE.astype(complex)) - np.abs(FINE)))
    assert err <= 2 * minimax


def test_fit_error_monotone_in_degree():
    cp = fit(real_profile(np.abs(T)), tol=1e-30, strict=False)
    errs = [e for _, e in cp.history]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert not cp.converged


def test_degree_cap_raises():
    with pytest.raises(FitError) as exc:
        fit(real_profile(np.sign(T)), tol=1e-6, degrees=(8, 16))
    assert exc.value.best.degree in (8, 16)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-0.9, 0.9), min_size=1, max_size=3, unique=True), st.integers(0, 3))
def test_zero_constraints_exact(nodes, order):
    nodes = sorted(nodes)
    if len(nodes) > 1 and np.min(np.diff(nodes)) < 0.05:
        return
    cp = fit(real_profile(np.cos(3 * T)), tol=1e-30, degrees=(16,), strict=False,
             zeros=tuple(nodes), zero_order=order)
    d = cp.fn.derivatives(np.array(nodes, complex), order)
    assert np.all(np.abs(d) <= 1e-12)


def test_cauchy_formula():
    m = cauchy_margin(ScalarFn.zero(), 2.0, 1.0, (-1.0, 1.0), 3)
    assert np.all(m.bounds == 0)
    m = cauchy_margin(ScalarFn.poly([1e-3]), 1.5, 0.5, (-1.0, 1.0), 1)
    assert m.distance == 0.5
    assert np.allclose(m.bounds, [1e-3, 2e-3])


def test_cauchy_margin_randomized():
    rng = np.random.default_rng(11)
    hits = 0
    for _ in range(10):
        c = rng.normal(size=11) + 1j * rng.normal(size=11)
        fn = ScalarFn.poly(c)
        edge = np.max(np.abs(fn(rectangle_boundary(2.0, 1.0))))
        fn = ScalarFn.poly(c * 1e-3 / edge)
        m = cauchy_margin(fn, 2.0, 1.0, (-1.0, 1.0), 2)
        hits += m.ok
    assert hits == 10


def _empty(zz):
    return np.zeros(zz.shape, bool)


def _disk(center, radius):
    return lambda zz: np.abs(zz - center) <= radius


def test_escape_profile_without_obstacles():
    R, rho, delta = 4.0, 1.0, 0.2
    prof = escape_profile((_empty, _empty), (-2.0, 2.0), rho, R, delta)
    for p in prof.paths:
        assert p.nodes.size == 2 and abs(p.end) > R + 1
        assert abs(p.end.real) < 1e-12
    pts = prof.profile.points
    on_k = (np.abs(pts.real) <= prof.half_width) & (np.abs(pts.imag) <= prof.half_height)
    assert np.all(prof.profile.values[on_k] == 0)
    t = np.linspace(-R, R, 4001)
    h = prof.target(t)
    assert np.all(h[np.abs(t) <= 2 + delta] == 0)
    assert np.all(h[t < -2 - 2 * delta] == prof.paths[0].end)
    assert np.all(h[t > 2 + 2 * delta] == prof.paths[1].end)


def test_ball_slices_empty_for_far_mu():
    # ball of radius 2 at the origin of C^2 meets the slice over mu only if |mu| <= 2
    def slice_over(mu):
        return lambda zz: np.abs(mu) ** 2 + np.abs(zz) ** 2 <= 4.0
    prof = escape_profile((slice_over(-3.0), slice_over(3.0)), (-3.0, 3.0), 1.0, 4.0, 0.1)
    assert all(p.nodes.size == 2 for p in prof.paths)


def _clearance(path, centers, radius):
    s = np.linspace(0, 1, 4001)
    pts = path(s)
    return min(np.min(np.abs(pts - c)) - radius for c in centers)


def test_exit_path_detours_around_slice_disk():
    delta = 0.1
    center, radius = 2j, 1.5
    path = find_exit_path(_disk(center, radius), 5.0, 0.02, 3 * delta)
    assert abs(path.end) > 5.0
    assert _clearance(path, [center], radius) >= 3 * delta - 0.02


def test_exit_path_search_through_ring_of_obstacles():
    centers = [1.5 * np.exp(1j * a) for a in np.arange(8) * np.pi / 4]
    blocked = lambda zz: np.any([np.abs(zz - c) <= 0.4 for c in centers], axis=0)
    path = find_exit_path(blocked, 3.0, 0.02, 0.1)
    assert path.nodes.size > 2
    assert abs(path.end) > 3.0
    assert _clearance(path, centers, 0.4) >= 0.1 - 0.02
