"""Effective constructors for the escape, avoidance and correction shears."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial

import numpy as np

from . import series as ser
from .approx import DEFAULT_DEGREES, JetConstraint, TargetProfile, escape_profile, fit
from .geometry import (HullProxy, ball_samples, composite_grid, generic_direction, hull_on_curve,
                       regular_radius)
from .shears import AutoWord, ScalarFn, Shear, compose_all


class LemmaError(RuntimeError):
    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


def unit(n: int, j: int) -> np.ndarray:
    v = np.zeros(n, complex)
    v[j] = 1.0
    return v


def embed(t, n: int) -> np.ndarray:
    t = np.asarray(t, complex)
    out = np.zeros(t.shape + (n,), complex)
    out[..., 0] = t
    return out


# ------------------------------------------------------------------ escape

@dataclass(frozen=True)
class EscapeResult:
    word: AutoWord
    certificate: dict
    delta: float | None = None


def escape_shear(scene, rho: float, interval: tuple, r: int, eps: float, zeros, n: int, radius: float,
                 *, mode: str = "auto", delta: float | None = None, degrees=DEFAULT_DEGREES,
                 rng: np.random.Generator | None = None, lawson: int = 0) -> EscapeResult:
    """Shear psi(z) = z + g(z_1) e_2 with |g| < eps on |z_1| <= rho, g small in
    C^r on the interval, g vanishing to order r on ``zeros``, and psi(t) outside
    the scene ``scene`` for real t off the interval (up to |t| <= radius + 1;
    beyond that |psi(t)| > radius, so the caller must pass radius with the
    scene inside the radius ball)."""
    rng = rng or np.random.default_rng(0)
    mu1, mu2 = interval
    e2 = unit(n, 1)
    t_in = np.linspace(mu1, mu2, 801)
    outer = composite_grid(-radius - 1.0, radius + 1.0, 0.01, dense=max(abs(mu1), abs(mu2)) + 20.0)
    outer = outer[(outer < mu1) | (outer > mu2)]

    def certify(fn: ScalarFn) -> dict:
        pts = embed(outer, n) + fn(outer.astype(complex))[:, None] * e2
        disk = fn.disk_max(rho) if not fn.is_zero() else 0.0
        cr = float(np.abs(fn.derivatives(t_in.astype(complex), r)).max()) if not fn.is_zero() else 0.0
        inside = scene.contains(pts)
        hits = int(np.count_nonzero(inside))
        cert = {"disk": disk, "interval_cr": cr, "hits": hits,
                "ok": disk < eps and cr < eps and hits == 0}
        if hits:
            cert["first_hit"] = float(outer[np.argmax(inside)])
        return cert

    if mode == "auto":
        cert = certify(ScalarFn.zero())
        if cert["ok"]:
            return EscapeResult(AutoWord.identity(n), cert, None)
    if delta is None:
        delta = 0.25
        probe = np.linspace(mu1, mu2, 201)
        while delta > 1e-3:
            cloud = embed(np.repeat(probe, 20), n) + ball_samples(n, 3 * delta, len(probe) * 20, rng)
            if not scene.contains(cloud).any():
                break
            delta /= 2

    def slice_pred(mu):
        def blocked(zz):
            pts = np.zeros(zz.shape + (n,), complex)
            pts[..., 0] = mu
            pts[..., 1] = zz
            return scene.contains(pts)
        return blocked

    prof = escape_profile((slice_pred(mu1), slice_pred(mu2)), (mu1, mu2), rho, radius, delta)
    dist = delta / 2
    tol = 0.5 * min(eps, eps * dist**r / factorial(r))
    cp = fit(prof.profile, tol=tol, zeros=tuple(zeros), zero_order=r, degrees=degrees, strict=False,
             lawson=lawson)
    cert = certify(cp.fn)
    cert["fit_error"] = cp.error
    if not cert["ok"]:
        raise LemmaError("escape shear failed certification", cert)
    return EscapeResult(AutoWord.of(Shear(e2, cp.fn, 0), "escape"), cert, delta)


# ------------------------------------------------------------------ avoidance

@dataclass(frozen=True)
class AvoidanceResult:
    word: AutoWord
    certificate: dict


def jet_polynomial(centers, r: int, beta: float = 0.0) -> ScalarFn:
    """h(z) = prod (z - c_j)^(r+1), optionally damped by exp(-beta z^2)."""
    centers = np.asarray(centers, complex)
    return ScalarFn(beta=beta, roots=centers, mult=np.full(len(centers), r + 1, int),
                    hess=np.zeros((1, 0), complex), coef=np.ones(1, complex))


def tangency_slope(fn: ScalarFn, alpha: np.ndarray, center: complex, radii=None) -> float:
    radii = np.geomspace(1e-3, 1e-1, 9) if radii is None else radii
    vals = np.abs(fn(center + radii)) * np.linalg.norm(alpha)
    return float(np.polyfit(np.log(radii), np.log(vals), 1)[0])


def avoidance_shear(curve_points: np.ndarray, centers, r: int, eps: float, radius: float,
                    rng: np.random.Generator, *, rho: float = 0.05, damping: bool = True,
                    threshold: float = 0.0, retries: int = 64, params: np.ndarray | None = None,
                    regular_threshold: float = 1e-4) -> AvoidanceResult:
    """theta(z) = z + h(z_1)(0, alpha): |theta - id| < eps on the radius ball,
    identity to order r at the centers, and the image surface of C x {0}
    clears the sampled curve away from the centers.

    With ``params`` (the curve parameters of ``curve_points``) the exclusion
    radius steps down from rho until rho^2 is a regular value of
    |z_1(t) - c_j|^2."""
    n = np.shape(curve_points)[1]
    if params is not None and len(centers):
        rho = regular_radius(np.asarray(curve_points)[:, 0], params, list(centers),
                             rho * np.array([1.0, 0.8, 0.6, 0.4, 0.2]), regular_threshold)
    beta = 1.0 / radius**2 if damping else 0.0
    fn = jet_polynomial(centers, r, beta)
    peak = fn.disk_max(radius)
    magnitude = 0.5 * eps / peak
    res = generic_direction(fn, curve_points, list(centers), rho, np.inf, magnitude, rng, retries, threshold)
    v = np.zeros(n, complex)
    v[1:] = res.alpha
    word = AutoWord.of(Shear(v, fn, 0), "avoidance")
    slopes = [tangency_slope(fn, res.alpha, c) for c in centers]
    cert = {"ball_max": float(np.linalg.norm(res.alpha) * peak), "clearance": res.clearance,
            "attempts": res.attempts, "slopes": slopes, "alpha_norm": float(np.linalg.norm(res.alpha)),
            "rho": rho}
    cert["ok"] = cert["ball_max"] < eps and res.clearance > threshold and all(s >= r + 1 - 0.3 for s in slopes)
    if not cert["ok"]:
        raise LemmaError("avoidance shear failed certification", cert)
    return AvoidanceResult(word, cert)


# ------------------------------------------------------------------ arc push

@dataclass(frozen=True)
class ArcPushTask:
    """Move the arcs f(t), t in ``arcs``, onto the target jets while keeping the
    K samples fixed.

    ``target(t, order)`` returns jets (M, order+1, n) of F o f.  K points in
    ``k_marked`` must be fixed to order r; parameters in ``arc_marked`` must hit
    the target jets exactly.  ``guard`` intervals are tracked with a lower
    weight but not certified.  ``beta`` > 0 damps each letter by
    exp(-beta (z - beta_center)^2); centering it on the moving part of the arc
    keeps letters negligible on K.

    With ``partition_beta`` > 0 the first-coordinate letters of a stage are
    split over a partition of unity: one letter exp(-beta (z-c)^2) q_c(z) per
    center c, each fitted on the window |Re z - c| <= sqrt(kappa/beta) where
    the Gaussian dominates any degree-64 growth of q_c.
    """

    n: int
    r: int
    curve: AutoWord
    arcs: tuple
    target: object
    k_points: np.ndarray
    eps: float
    k_marked: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), complex))
    arc_marked: tuple = ()
    guard: tuple = ()
    guard_weight: float = 1.0
    density: float = 40.0
    dense: float = 40.0
    k_weight: float = 10.0
    beta: float = 0.0
    beta_center: complex | None = None
    degrees: tuple = DEFAULT_DEGREES
    stages: int = 8
    max_stages: int = 64
    fit_fraction: float = 0.05
    lawson: int = 0
    complementary: bool = True
    partition_beta: float = 0.0
    partition_kappa: float = 60.0
    partition_floor: float = 1e-4


@dataclass(frozen=True)
class ArcPushResult:
    word: AutoWord
    arc_error: float
    k_error: float
    stages: int
    history: tuple = ()

    @property
    def certified(self) -> bool:
        return True


def _param_grid(intervals, h, dense, offset=0.0):
    parts = [composite_grid(lo, hi, h, dense=dense, offset=offset) for lo, hi in intervals]
    return np.unique(np.concatenate(parts)) if parts else np.zeros(0)


def _curve_series(word: AutoWord, t: np.ndarray, r: int) -> np.ndarray:
    """(M, n, r+1) normalized series of word o iota at t."""
    return ser.from_derivatives(np.swapaxes(word.real_jet(t, r).jets, 1, 2))


def _target_series(task: ArcPushTask, t: np.ndarray) -> np.ndarray:
    return ser.from_derivatives(np.swapaxes(task.target(t, task.r), 1, 2))


def _prescribed_jet(disp: np.ndarray, proj_series: np.ndarray, r: int) -> np.ndarray:
    """Derivatives of g at u(t0) with g(u(t)) = disp(t) to order r."""
    sigma = ser.revert(proj_series)
    return ser.to_derivatives(ser.compose(disp, sigma))


def _errors(task: ArcPushTask, word: AutoWord, t_val: np.ndarray, k_val: np.ndarray) -> tuple[float, float]:
    full = task.curve.then(word)
    jets = full.real_jet(t_val, task.r).jets
    tgt = task.target(t_val, task.r)
    with np.errstate(invalid="ignore"):
        arc = float(np.max(np.linalg.norm(jets - tgt, axis=-1))) if len(t_val) else 0.0
        kk = float(np.max(np.linalg.norm(word.eval(k_val) - k_val, axis=-1))) if len(k_val) else 0.0
    if not np.isfinite(arc):
        arc = np.inf
    return arc, kk


def _gauss_series(u0: complex, beta: float, r: int) -> np.ndarray:
    u = ser.variable(np.array([u0], complex), r)
    return ser.exp(-beta * ser.mul(u, u))[0]


def _partition_letters(task: ArcPushTask, j: int, pts: np.ndarray, vals: np.ndarray, wts: np.ndarray,
                       node_jets: list, zeros: tuple, tol: float, stage: int) -> list:
    """Letters exp(-beta (z-c)^2) q_c(z) e_j whose sum reproduces the
    displacement ``vals`` at ``pts``; ``node_jets`` holds (u0, derivatives)
    pairs the sum must match exactly.  None when the samples span less than
    two windows."""
    n, r = task.n, task.r
    beta = task.partition_beta
    re = pts.real
    lo, hi = float(re.min()), float(re.max())
    w = np.sqrt(task.partition_kappa / beta)
    if hi - lo < 2 * w:
        # too short for overlapping windows: the caller fits a single letter
        return None
    spacing = np.sqrt(0.6 / beta)
    centers = np.arange(np.ceil((lo + w) / spacing), np.floor((hi - w) / spacing) + 1) * spacing
    s0 = np.sqrt(np.pi / beta) / spacing
    letters = []
    for c in centers:
        win = np.abs(re - c) <= w
        if not win.any():
            continue
        p = pts[win]
        with np.errstate(all="ignore"):
            g = np.abs(np.exp(-beta * (p - c) ** 2))
        target = vals[win] / s0
        mine = [(u0, d) for u0, d in node_jets if abs(u0.real - c) <= w]
        if np.max(np.abs(target) * g) < 1e-3 * tol and not mine:
            continue
        jets = []
        for u0, derivs in mine:
            near = [c2 for c2 in centers if abs(u0.real - c2) <= w]
            total = sum(_gauss_series(u0 - c2, beta, r) for c2 in near)
            q = ser.mul(ser.from_derivatives(np.asarray(derivs, complex)), ser.reciprocal(total))
            jets.append(JetConstraint(complex(u0), ser.to_derivatives(q)))
        zs = tuple(z for z in zeros if abs(z.real - c) <= w)
        prof = TargetProfile(p, target, wts[win] * np.maximum(g, task.partition_floor) ** 2)
        cp = fit(prof, tol=tol / s0, degrees=task.degrees, beta=0.0, jets=tuple(jets), zeros=zs,
                 zero_order=r, strict=False, lawson=task.lawson, center=complex(c), scale=float(w))
        fn = replace(cp.fn, beta=beta)
        letters.append(AutoWord.of(Shear(unit(n, j), fn, 0), f"arc_push:stage{stage}:e{j + 1}:c{c:.4g}"))
    return letters


def arc_push(task: ArcPushTask) -> ArcPushResult:
    """Staged shear approximation of the map that is the identity on K and
    moves the arcs to their targets (certified on held-out samples)."""
    n, r = task.n, task.r
    h = 1.0 / task.density
    t_fit = _param_grid(task.arcs, h, task.dense)
    t_val = _param_grid(task.arcs, h, task.dense, offset=0.5)
    t_guard = _param_grid(task.guard, h, task.dense) if task.guard else np.zeros(0)
    kp = np.asarray(task.k_points, complex).reshape(-1, n)
    k_fit, k_val = kp[0::2], kp[1::2]
    marked_t = np.array([t for t in task.arc_marked], float)
    k_marked = np.asarray(task.k_marked, complex).reshape(-1, n)

    word = AutoWord.identity(n)
    arc_err, k_err = _errors(task, word, t_val, k_val)
    history = [(0, arc_err, k_err)]
    if arc_err < task.eps and k_err < task.eps:
        return ArcPushResult(word, arc_err, k_err, 0, tuple(history))
    tol = task.eps * task.fit_fraction
    t_all = np.concatenate([t_fit, t_guard])
    w_all = np.concatenate([np.ones(len(t_fit)), np.full(len(t_guard), task.guard_weight)])
    tgt_all = task.target(t_all, 0)[:, 0, :]
    tgt_marked = _target_series(task, marked_t) if len(marked_t) else None
    stage = 0
    budget = task.stages
    while stage < task.max_stages:
        stage += 1
        for proj, coords in ((0, range(1, n)), (1, (0,))):
            if proj == 1 and not task.complementary:
                continue
            full = task.curve.then(word)
            cur = full.eval(embed(t_all, n))
            kcur = word.eval(k_fit)
            new_letters = []
            for j in coords:
                disp = tgt_all[:, j] - cur[:, j]
                if np.max(np.abs(disp)) < 1e-3 * tol:
                    continue
                pts = np.concatenate([cur[:, proj], kcur[:, proj]])
                vals = np.concatenate([disp, np.zeros(len(kcur))])
                wts = np.concatenate([w_all, np.full(len(kcur), task.k_weight)])
                jets = []
                if len(marked_t):
                    cs = _curve_series(full, marked_t, r)
                    for i, t0 in enumerate(marked_t):
                        d = tgt_marked[i, j] - cs[i, j]
                        jets.append(JetConstraint(complex(cs[i, proj, 0]), _prescribed_jet(d, cs[i, proj], r)))
                zeros = tuple(complex(z) for z in word.eval(k_marked)[:, proj]) if len(k_marked) else ()
                finite = np.isfinite(pts) & np.isfinite(vals)
                if proj == 0 and task.partition_beta > 0:
                    part = _partition_letters(task, j, pts[finite], vals[finite], wts[finite],
                                              [(jc.node, jc.derivs) for jc in jets], zeros, tol, stage)
                    if part is not None:
                        new_letters += part
                        continue
                prof = TargetProfile(pts[finite], vals[finite], wts[finite])
                beta = task.beta
                cp = fit(prof, tol=tol, degrees=task.degrees, beta=beta, jets=tuple(jets), zeros=zeros,
                         zero_order=r, strict=False, lawson=task.lawson, center=task.beta_center)
                new_letters.append(AutoWord.of(Shear(unit(n, j), cp.fn, proj), f"arc_push:stage{stage}:e{j + 1}"))
            for w in new_letters:
                word = word.then(w)
        arc_err, k_err = _errors(task, word, t_val, k_val)
        history.append((stage, arc_err, k_err))
        if arc_err < task.eps and k_err < task.eps:
            return ArcPushResult(word, arc_err, k_err, stage, tuple(history))
        if stage >= budget:
            prev = min(e[1] for e in history[:-1])
            if arc_err > 0.9 * prev or budget >= task.max_stages:
                break
            budget *= 2
    raise LemmaError(f"arc push not certified: arc error {arc_err:.3g}, K error {k_err:.3g}, eps {task.eps:.3g}",
                     {"history": history, "word": word})


# ------------------------------------------------------------------ correction

@dataclass(frozen=True)
class CorrectionResult:
    word: AutoWord
    hull: HullProxy | None
    arcs: tuple
    inner: tuple
    certificate: dict


def endpoint_components(member, lo: float, hi: float, h: float) -> tuple[float, float]:
    """Scan inward from both endpoints of [lo, hi] while ``member`` is False;
    returns (s_lo, s_hi), the first parameters from each end that are members.
    (lo, hi) returned unchanged pieces mean the whole side is outside."""
    t = np.linspace(lo, hi, max(int(np.ceil((hi - lo) / h)), 1) + 1)
    inside = member(t)
    if not inside.any():
        return (hi, lo)
    idx = np.nonzero(inside)[0]
    return float(t[idx[0]]), float(t[idx[-1]])


def correction(lam_jets, f: AutoWord, inner: tuple, hull: HullProxy | None, a: float, r: int, eps: float,
               tangency, rng: np.random.Generator, *, h: float = 0.01, beta_cap: float = 0.3,
               k_ball_points: int = 2000, guard_end: float | None = None, partition: bool = True,
               **task_options) -> CorrectionResult:
    """Shear word Phi with Phi o f close to lambda_k in C^r on [-a, a], jets of
    lambda_k at the tangency parameters, and Phi close to the identity on the hull.

    ``lam_jets(t, order)`` evaluates lambda_k.  ``hull`` is K (None for empty).
    Samples on a < |t| < guard_end also track lambda_k so the letters stay
    tame just beyond the interval.
    """
    n = f.n
    lo, hi = inner
    if hull is not None:
        def member(t):
            pts = f.eval(embed(t, n))
            return hull.contains(pts)
        s_lo, s_hi = endpoint_components(member, lo, hi, h)
    else:
        s_lo, s_hi = hi, lo
    if hull is None:
        a_hull = None
        arcs = ((-a, a),)
        k_points = np.zeros((0, n), complex)
    else:
        extra = ((s_lo, s_hi),) if s_lo <= s_hi else ()
        a_hull = hull_on_curve(f, hull.radius, hull.disks, tuple(hull.intervals) + extra, cells=len(hull.xs))
        h_scan = max(h, 2 * a / 200000)
        on = endpoint_components(lambda t: a_hull.contains(f.eval(embed(t, n))), -a, a, h_scan)
        arcs = ((-a, on[0]), (on[1], a)) if on[0] <= on[1] else ((-a, a),)
        k_points = a_hull.samples(rng, k_ball_points if a_hull.radius > 0 else 0)
    tangency = [float(t) for t in tangency if -a <= t <= a]
    arc_marked = tuple(t for t in tangency if any(l <= t <= u for l, u in arcs))
    k_marked_t = [t for t in tangency if t not in arc_marked]
    k_marked = f.eval(embed(np.array(k_marked_t, float), n)) if k_marked_t else np.zeros((0, n), complex)
    rho_k = float(np.max(np.abs(k_points[:, 0]))) if len(k_points) else 0.0
    beta = min(beta_cap, 1.0 / rho_k**2) if rho_k > 0 else beta_cap

    def target(t, order):
        return lam_jets(t, order)

    guard = ((-guard_end, -a), (a, guard_end)) if guard_end is not None and guard_end > a else ()
    task = ArcPushTask(n=n, r=r, curve=f, arcs=arcs, target=target, k_points=k_points, eps=eps,
                       k_marked=k_marked, arc_marked=arc_marked, guard=guard, beta=beta,
                       partition_beta=beta if partition else 0.0, **task_options)
    res = arc_push(task)
    # whole-interval certificate (i): includes the part inside the hull
    grid = composite_grid(-a, a, h, offset=0.37)
    jets = f.then(res.word).real_jet(grid, r).jets
    dev = float(np.max(np.linalg.norm(jets - lam_jets(grid, r), axis=-1)))
    cert = {"arc_error": res.arc_error, "k_error": res.k_error, "interval_error": dev,
            "stages": res.stages, "letters": len(res.word), "beta": beta}
    cert["ok"] = dev < eps and res.k_error < eps
    if not cert["ok"]:
        raise LemmaError("correction failed certification", cert)
    return CorrectionResult(res.word, a_hull, arcs, (s_lo, s_hi), cert)
