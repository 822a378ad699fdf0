import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from carleman.curve import (Cutoff, CurveError, Weight, blend, cr_norm, curve_from_descriptor,
                            curve_margins, cutoff_constant, load_curve, mollify, perturbation_battery,
                            stability_weight, transversal_push_off, with_seed_offset)

from conftest import bump_descriptor, descriptor, line_descriptor, poly


def test_line_jets_and_margins(line_curve):
    t = np.linspace(-3, 3, 7)
    j = line_curve.jets(t, 1)
    assert np.allclose(j[:, 1, :], [1.0, 0.0])
    m = curve_margins(line_curve)
    assert m.immersion >= 1 - 1e-12
    assert m.injectivity >= 1 - 1e-12
    assert m.properness > 0


def test_bump_graph_accepted(bump_curve, bump_graph_path):
    assert curve_margins(bump_curve).injectivity > 0
    lam = load_curve(bump_graph_path)
    t = np.array([0.0, 1.0, -2.0])
    assert np.allclose(lam(t)[:, 1], 1 / (1 + t**2))
    assert np.allclose(lam.jets(t, 1)[:, 1, 1], -2 * t / (1 + t**2) ** 2)


def test_cusp_cubic_rejected():
    d = descriptor([[poly(0.0, -1.0, 0.0, 1.0)], [poly(0.0)]], window=3.0)
    root = brentq(lambda t: 3 * t**2 - 1, 0.1, 1.0)
    assert abs(root - 1 / np.sqrt(3)) < 1e-12
    with pytest.raises(CurveError, match="immersion"):
        curve_from_descriptor(d, d["h_grid"])


def test_descriptor_errors():
    with pytest.raises(CurveError):
        curve_from_descriptor(line_descriptor(n=1))
    with pytest.raises(CurveError):
        curve_from_descriptor(descriptor([[{"kind": "tan", "coefficients": [1]}], [poly(0.0)]]))
    with pytest.raises(CurveError):
        curve_from_descriptor(line_descriptor(window=-1.0))


def test_quarter_weight_certifies_line(line_curve):
    w = Weight.constant(0.25)
    worst = perturbation_battery(line_curve, w, np.random.default_rng(0), trials=100)
    assert min(worst.values()) > 0
    eta = stability_weight(line_curve, cap=0.25)
    assert np.allclose(eta(line_curve.grid), 0.25)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.01, 0.49))
def test_weight_respects_cap(bump_curve, cap):
    eta = stability_weight(bump_curve, cap=cap)
    g = bump_curve.grid
    assert np.all(eta(g) <= cap) and np.all(eta(g) > 0)
    assert np.all(eta(np.linspace(-100, 100, 101)) < 0.5)


def test_sine_weight_smaller_near_curvature():
    d = descriptor([[poly(0.0, 1.0)], [{"kind": "sin", "coefficients": [1.0, 1.0]}]])
    wavy = curve_from_descriptor(d, d["h_grid"])
    flat = curve_from_descriptor(line_descriptor(), 0.02)
    e_wavy = stability_weight(wavy)(wavy.grid)
    e_flat = stability_weight(flat)(flat.grid)
    assert np.ptp(e_wavy) > 1e-3
    assert e_wavy.min() < e_flat.min()
    worst = perturbation_battery(wavy, stability_weight(wavy), np.random.default_rng(1), trials=100)
    assert min(worst.values()) > 0


def test_mollify_fixed_point(bump_curve):
    assert mollify(bump_curve, stability_weight(bump_curve)) is bump_curve


def _kinked():
    d = descriptor([[poly(0.0, 1.0)], [{"kind": "piecewise_poly", "breaks": [0.0],
                                        "coefficients": [[0.0], [0.0, 0.0, 0.3]]}]], window=5.0)
    return curve_from_descriptor(d, d["h_grid"], check=False)


def _c1_gap(a, b, t):
    # finite-difference derivatives so the check does not reuse descriptor jets
    va, vb = a(t), b(t)
    da, db = np.gradient(va, t, axis=0), np.gradient(vb, t, axis=0)
    return np.maximum(np.linalg.norm(va - vb, axis=1), np.linalg.norm(da - db, axis=1))


def test_mollify_c1_junction():
    lam = _kinked()
    w = Weight.constant(0.1)
    sm = mollify(lam, w)
    t = np.linspace(-4, 4, 8001)
    assert np.all(_c1_gap(sm, lam, t) < w(t) / 4)
    tighter = mollify(lam, w.scaled(0.5))
    assert _c1_gap(tighter, lam, t).max() <= _c1_gap(sm, lam, t).max() + 1e-12


def test_cutoff_shape_and_constant():
    c = Cutoff(2.0, 3.0, 2)
    t = np.linspace(-5, 5, 2001)
    x = c(t)
    assert np.all(x[np.abs(t) <= 2] == 1.0) and np.all(x[np.abs(t) >= 3] == 0.0)
    assert np.all((x >= 0) & (x <= 1))
    C = cutoff_constant(2)
    assert C > 1
    rng = np.random.default_rng(5)
    for _ in range(20):
        k, p = rng.uniform(0.1, 3), rng.uniform(0, 2 * np.pi)
        h = np.stack([np.sin(k * t + p), k * np.cos(k * t + p), -k * k * np.sin(k * t + p)], axis=1)
        d = c.derivatives(t, 2)
        prod = np.stack([d[:, 0] * h[:, 0], d[:, 1] * h[:, 0] + d[:, 0] * h[:, 1],
                         d[:, 2] * h[:, 0] + 2 * d[:, 1] * h[:, 1] + d[:, 0] * h[:, 2]], axis=1)
        assert cr_norm(prod) <= C * cr_norm(h)


def test_cutoff_is_continuous_at_plateau_edges():
    c = Cutoff(1.25, 1.75, 1)
    t = np.linspace(1.2, 1.8, 60001)
    x = c(t)
    assert np.max(np.abs(np.diff(x))) < 1e-3
    assert c(np.array([1.2501]))[0] == 1.0 and c(np.array([1.7499]))[0] == 0.0


def test_blend_identical_is_identity(bump_curve):
    b = blend(lambda t, o: bump_curve.jets(t, o), bump_curve, Cutoff(2.0, 3.0, 1))
    t = np.linspace(-6, 6, 1201)
    assert np.array_equal(b.jets(t), bump_curve.jets(t))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.001, 0.1))
def test_blend_offset_bound(bump_curve, delta):
    def shifted(t, o):
        j = bump_curve.jets(t, o).copy()
        j[:, 0, 1] += delta / 2
        return j
    c = Cutoff(2.0, 3.0, 0)
    b = blend(shifted, bump_curve, c)
    t = np.linspace(-4, 4, 1601)
    gap = np.abs(b(t)[:, 1] - bump_curve(t)[:, 1])
    assert gap.max() <= cutoff_constant(0) * delta / 2
    inner, outer = np.abs(t) <= 2, np.abs(t) >= 3
    assert np.array_equal(b.jets(t[inner]), shifted(t[inner], 1))
    assert np.array_equal(b.jets(t[outer]), bump_curve.jets(t[outer]))


def test_blend_keeps_jets_at_marked_points(bump_curve):
    def exact_at_zero(t, o):
        j = bump_curve.jets(t, o).copy()
        j[:, 0, 1] += 0.01 * t**2
        j[:, 1, 1] += 0.02 * t
        return j
    b = blend(exact_at_zero, bump_curve, Cutoff(2.0, 3.0, 1))
    assert np.array_equal(b.jets(np.array([0.0])), bump_curve.jets(np.array([0.0])))


def test_push_off_unchanged_when_clear(bump_curve, rng):
    far = np.array([[0.0, 10.0]], complex)
    res = transversal_push_off(bump_curve, far, [(1.0, 2.0)], 0.01, rng)
    assert not res.pushed and res.curve is bump_curve
    empty = transversal_push_off(bump_curve, np.array([[0, 0.3j]]), [(1.005, 1.006)], 0.01, rng,
                                 grid=np.array([0.0, 5.0]))
    assert empty.curve is bump_curve


def test_push_off_clears_touching_point(bump_curve, rng):
    # a C^1-bounded bump reaches step/4 at its center only on bands wider than about 2
    hit = bump_curve(np.array([2.0]))
    step = 0.02
    res = transversal_push_off(bump_curve, hit, [(0.5, 3.5)], step, rng, tangency=[0.0])
    assert res.pushed and res.margin >= step / 4
    t = np.linspace(0.5, 3.5, 1501)
    d = np.linalg.norm(res.curve(t) - hit, axis=1)
    assert d.min() >= step / 4 * (1 - 1e-9)
    dev = np.linalg.norm(res.curve.jets(t) - bump_curve.jets(t), axis=-1)
    assert dev.max() <= step * (1 + 1e-9)
    off = np.array([0.0, 0.5, 3.5, 4.0])
    assert np.array_equal(res.curve.jets(off), bump_curve.jets(off))


def test_seed_offset_vanishes_to_order(bump_curve):
    seeded = with_seed_offset(bump_curve, [0.0], 0.15)
    z = np.array([0.0])
    assert np.array_equal(seeded.jets(z, 1), bump_curve.jets(z, 1))
    x = np.array([1e-2, 2e-2])
    d = np.abs(seeded(x)[:, 1] - bump_curve(x)[:, 1])
    assert np.log(d[1] / d[0]) / np.log(2) == pytest.approx(2.0, abs=0.05)
