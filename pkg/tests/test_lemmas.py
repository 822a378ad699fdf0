import numpy as np
import pytest
import sympy as sp

from carleman.approx import rectangle_boundary
from carleman.curve import Cutoff
from carleman.geometry import Ball, CompactScene, ball_samples, hull_on_curve
from carleman.lemmas import (ArcPushTask, LemmaError, arc_push, avoidance_shear, correction, embed,
                             endpoint_components, escape_shear, jet_polynomial, tangency_slope)
from carleman.shears import AutoWord

EMPTY = CompactScene(2, ())


def fd_decay(err_at, t0, steps=(0.1, 0.05, 0.025)):
    """Central-difference error of the first derivative of err_at at t0 for
    each step; matching jets give O(h^2) decay."""
    out = []
    for h in steps:
        e = err_at(np.array([t0 - h, t0 + h]))
        out.append(float(np.linalg.norm((e[1] - e[0]) / (2 * h))))
    return out


def assert_factor_four(errs, floor=1e-10):
    for a, b in zip(errs, errs[1:]):
        assert b < floor or a / b > 3.5, errs


def recheck_escape(word, scene, rho, interval, r, eps, radius):
    """Conditions (i)-(iii) from the returned word only."""
    fn = word.letters[0].shear.fn
    disk = np.abs(fn(rho * np.exp(2j * np.pi * np.arange(4096) / 4096))).max()
    t_in = np.linspace(*interval, 801).astype(complex)
    cr = np.abs(fn.derivatives(t_in, r)).max()
    outer = np.linspace(-radius - 1, radius + 1, 20001)
    outer = outer[(outer < interval[0]) | (outer > interval[1])]
    hits = scene.contains(word.eval(embed(outer, 2))).sum()
    return disk < eps and cr < eps and hits == 0


# ------------------------------------------------------------------ escape

def test_escape_auto_mode_returns_identity_for_empty_scene():
    res = escape_shear(EMPTY, 1.0, (-2.0, 2.0), 1, 0.1, [0.0], 2, 3.0)
    assert res.word.is_empty() and res.certificate["ok"]


def test_escape_ramp_profile_for_empty_scene():
    res = escape_shear(EMPTY, 1.0, (-2.0, 2.0), 1, 0.1, [0.0], 2, 3.0, mode="fit", delta=0.5)
    assert res.certificate["ok"]
    assert recheck_escape(res.word, EMPTY, 1.0, (-2.0, 2.0), 1, 0.1, 3.0)
    # the ramp lifts the tail far off the real axis
    fn = res.word.letters[0].shear.fn
    assert np.abs(fn(np.array([3.5 + 0j, -3.5 + 0j]))).min() > 3.0


def test_escape_vanishes_to_order_r_on_zero_set():
    res = escape_shear(EMPTY, 1.0, (-2.0, 2.0), 1, 0.1, [0.0], 2, 3.0, mode="fit", delta=0.5)
    d = res.word.letters[0].shear.fn.derivatives(np.array([0j]), 1)
    assert np.all(d == 0)


@pytest.mark.slow
def test_escape_clears_ball():
    # radius-2 ball beside I = [-3, 3]; its nearest point is 3 from the endpoint
    scene = CompactScene(2, (Ball(2.0, (8.0, 0.0)),))
    res = escape_shear(scene, 1.0, (-3.0, 3.0), 1, 0.1, [0.0], 2, 10.0, mode="fit", delta=0.9,
                       degrees=(64, 128, 256, 384))
    assert res.certificate["ok"]
    fn = res.word.letters[0].shear.fn
    assert np.abs(fn(np.exp(2j * np.pi * np.arange(4096) / 4096))).max() < 0.1
    t = np.linspace(6.0, 10.0, 4001)
    assert np.min((t - 8.0) ** 2 + np.abs(fn(t.astype(complex))) ** 2) > 4.0
    assert recheck_escape(res.word, scene, 1.0, (-3.0, 3.0), 1, 0.1, 10.0)


def test_escape_reports_failure_when_fit_cannot_certify():
    with pytest.raises(LemmaError) as exc:
        escape_shear(EMPTY, 1.0, (-2.0, 2.0), 1, 0.1, [0.0], 2, 4.0, mode="fit", delta=0.25)
    assert not exc.value.details["ok"]


# ------------------------------------------------------------------ avoidance

def test_jet_polynomial_matches_expanded_product():
    z = sp.symbols("z")
    expected = sp.Poly(sp.expand((z - 1) ** 2 * (z + 1) ** 2), z).all_coeffs()
    fn = jet_polynomial([1.0, -1.0], 1)
    pts = np.array([0.3 + 0.2j, -1.7, 2.5j])
    assert np.allclose(fn(pts), np.polyval(np.array(expected, dtype=float), pts), atol=1e-12)
    assert np.all(fn.derivatives(np.array([1 + 0j, -1 + 0j]), 1) == 0)


def test_avoidance_on_real_line_meets_only_at_center(rng):
    t = np.linspace(-5, 5, 4001)
    res = avoidance_shear(embed(t, 2), [0.0], 0, 0.1, 2.0, rng, damping=False, threshold=1e-4)
    shear = res.word.letters[0].shear
    assert shear.direction[0] == 0
    # h(z) = z: the image surface meets the real axis only at the origin
    z = np.array([0.5 + 0.1j, -1.0])
    assert np.allclose(shear.fn(z), z)
    image = res.word.eval(embed(t, 2))
    away = np.abs(t) >= 0.05
    assert np.abs(image[away, 1]).min() > 1e-4
    assert res.certificate["slopes"][0] >= 0.7


def test_avoidance_tangency_and_smallness(rng):
    t = np.linspace(-4, 4, 2001)
    curve = np.stack([t + 0j, 0.5 * np.sin(t) * t**2 + 0j], axis=1)
    res = avoidance_shear(curve, [0.0], 1, 0.05, 3.0, rng)
    cert = res.certificate
    assert cert["ok"] and cert["ball_max"] < 0.05 and cert["clearance"] > 0
    shear = res.word.letters[0].shear
    assert tangency_slope(shear.fn, shear.direction[1:], 0.0) >= 2 - 0.3
    k = ball_samples(2, 3.0, 2000, np.random.default_rng(2))
    assert np.linalg.norm(res.word.eval(k) - k, axis=1).max() < 0.05


# ------------------------------------------------------------------ arc push

def push_target(t, order):
    chi = Cutoff(1.25, 1.75, order)
    out = np.zeros((len(t), order + 1, 2), complex)
    out[:, 0, 0] = t
    if order >= 1:
        out[:, 1, 0] = 1.0
    s = -chi.derivatives(t, order)
    s[:, 0] += 1.0
    out[:, :, 1] = 0.3 * s
    return out


def segment_task(target, **kw):
    k = ball_samples(2, 1.0, 800, np.random.default_rng(0))
    opts = dict(n=2, r=1, curve=AutoWord.identity(2), arcs=((1.0, 2.0),), target=target, k_points=k,
                eps=0.05, arc_marked=(1.0,), guard=((2.0, 2.5),), beta=40.0, beta_center=1.75,
                density=200.0, degrees=(16, 32, 64, 128))
    opts.update(kw)
    return ArcPushTask(**opts)


def identity_target(t, order):
    out = np.zeros((len(t), order + 1, 2), complex)
    out[:, 0, 0] = t
    if order >= 1:
        out[:, 1, 0] = 1.0
    return out


def test_arc_push_identity_target_gives_empty_word():
    res = arc_push(segment_task(identity_target))
    assert res.word.is_empty() and res.arc_error == 0 and res.k_error == 0


def test_arc_push_translates_outer_half_of_segment():
    task = segment_task(push_target)
    res = arc_push(task)
    assert res.stages <= 8 and res.arc_error < 0.05 and res.k_error < 0.05
    # independent held-out check: 200 arc samples, 200 ball samples
    t = np.linspace(1.0, 2.0, 203)[1:-1] + 1e-3
    jets = res.word.real_jet(t, 1).jets
    assert np.linalg.norm(jets - push_target(t, 1), axis=-1).max() < 0.05
    k = ball_samples(2, 1.0, 200, np.random.default_rng(99))
    assert np.linalg.norm(res.word.eval(k) - k, axis=1).max() < 0.05
    # round trip of the returned word
    assert np.abs(res.word.inverse().eval(res.word.eval(k)) - k).max() < 1e-10


def test_arc_push_marked_endpoint_jets():
    res = arc_push(segment_task(push_target))
    jet = res.word.real_jet(np.array([1.0]), 1).jets
    assert np.abs(jet - push_target(np.array([1.0]), 1)).max() < 1e-9

    def err(t):
        return res.word.eval(embed(t, 2)) - push_target(t, 0)[:, 0, :]

    assert_factor_four(fd_decay(err, 1.0))


# ------------------------------------------------------------------ correction

def bent(t, order):
    t = np.asarray(t, float)
    out = np.zeros((len(t), order + 1, 2), complex)
    out[:, 0, 0] = t
    if order >= 1:
        out[:, 1, 0] = 1.0
    u = np.maximum(np.abs(t) - 2.0, 0.0)
    out[:, 0, 1] = 0.2 * u**2
    if order >= 1:
        out[:, 1, 1] = 0.4 * u * np.sign(t)
    return out


@pytest.fixture(scope="module")
def bent_correction():
    f = AutoWord.identity(2)
    hull = hull_on_curve(f, 1.0)
    res = correction(bent, f, (-2.0, 2.0), hull, 3.0, 1, 0.05, [0.0, 2.5], np.random.default_rng(0),
                     guard_end=3.5)
    return f, hull, res


def test_correction_components(bent_correction):
    _, _, res = bent_correction
    assert res.inner[0] == pytest.approx(-1.0, abs=0.02) and res.inner[1] == pytest.approx(1.0, abs=0.02)
    assert len(res.arcs) == 2


def test_correction_certificate(bent_correction):
    f, hull, res = bent_correction
    assert res.certificate["ok"]
    g = f.then(res.word)
    t = np.linspace(-3, 3, 3001) + 1e-4
    assert np.linalg.norm(g.real_jet(t, 1).jets - bent(t, 1), axis=-1).max() < 0.05
    k = ball_samples(2, 1.0, 2000, np.random.default_rng(7))
    assert np.linalg.norm(res.word.eval(k) - k, axis=1).max() < 0.05


def test_correction_jets_at_marked_points(bent_correction):
    f, _, res = bent_correction
    g = f.then(res.word)
    for t0 in (0.0, 2.5):
        tt = np.array([t0])
        assert np.abs(g.real_jet(tt, 1).jets - bent(tt, 1)).max() < 1e-9

        def err(t):
            return g.eval(embed(t, 2)) - bent(t, 0)[:, 0, :]

        assert_factor_four(fd_decay(err, t0))


def test_correction_no_spurious_motion_inside(bent_correction):
    f, _, res = bent_correction
    t = np.linspace(-2.0, 2.0, 801)
    moved = np.linalg.norm(f.then(res.word).eval(embed(t, 2)) - embed(t, 2), axis=1)
    assert moved.max() < 0.05


def test_correction_identity_target_gives_empty_word():
    f = AutoWord.identity(2)
    hull = hull_on_curve(f, 1.0)
    res = correction(identity_target, f, (-2.0, 2.0), hull, 3.0, 1, 0.05, [0.0], np.random.default_rng(0))
    assert res.word.is_empty() and res.certificate["ok"]


def test_endpoint_components_scans_inward():
    lo, hi = endpoint_components(lambda t: np.abs(t) <= 1.0, -3.0, 3.0, 0.01)
    assert lo == pytest.approx(-1.0, abs=0.011) and hi == pytest.approx(1.0, abs=0.011)
    assert endpoint_components(lambda t: np.zeros(len(t), bool), -1.0, 1.0, 0.1) == (1.0, -1.0)
