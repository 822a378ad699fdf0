"""Inductive construction of f_k = Phi_k ... Phi_1 Psi_1 ... Psi_k with
condition bookkeeping, verification and a convergence monitor."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging

import numpy as np

from .config import RunConfig
from .curve import (Cutoff, JetCurve, Weight, blend, cutoff_constant, load_curve, stability_weight,
                    transversal_push_off, with_seed_offset)
from .geometry import (Ball, CompactScene, WordBall, ball_samples, composite_grid, hull_on_curve,
                       nearest_distances)
from .lemmas import (ArcPushTask, LemmaError, arc_push, avoidance_shear, correction, embed,
                     escape_shear)
from .shears import AutoWord, additive_form, compose_all, tail_bound

log = logging.getLogger(__name__)

JET_TOL = 1e-9
PHASES = {"base": 1, "push": 2, "correction": 3, "battery": 4, "escape": 5, "avoid": 6, "hull": 7}


class StepError(RuntimeError):
    def __init__(self, message: str, report=None, details: dict | None = None):
        super().__init__(message)
        self.report = report
        self.details = details or {}


def _num(x) -> float | str:
    x = float(x)
    if np.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


# ---------------------------------------------------------------- problem

@dataclass(frozen=True)
class Problem:
    curve: JetCurve
    weight: Weight
    tangency: tuple
    C: float
    config: RunConfig

    @property
    def n(self) -> int:
        return self.curve.n

    @property
    def r(self) -> int:
        return self.curve.r

    def tangency_in(self, a: float) -> list:
        return [float(t) for t in self.tangency if -a <= t <= a]

    def rng(self, k: int, phase: str) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, k, PHASES[phase]])


def make_problem(cfg: RunConfig, curve: JetCurve | None = None) -> Problem:
    curve = curve if curve is not None else load_curve(cfg.curve)
    weight = stability_weight(curve, cap=cfg.eta_cap)
    return Problem(curve, weight, tuple(float(t) for t in cfg.tangency), cutoff_constant(curve.r), cfg)


# ---------------------------------------------------------------- reports

@dataclass(frozen=True)
class Condition:
    name: str
    margin: float
    grid: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.margin > 0)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "margin": _num(self.margin),
                "grid": {k: (_num(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.grid.items()}}


@dataclass(frozen=True)
class ConditionReport:
    k: int
    conditions: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failing(self) -> list:
        return [c.name for c in self.conditions if not c.passed]

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"k": self.k, "passed": self.passed, "conditions": [c.to_json() for c in self.conditions],
                "note": "(5) is a grid clearance proxy plus tangency order, not exact set equality"}

    def summary(self) -> str:
        return " ".join(f"({c.name}){'ok' if c.passed else 'FAIL'}:{c.margin:.3g}" for c in self.conditions)


# ---------------------------------------------------------------- state

@dataclass(frozen=True)
class InductionState:
    n: int
    r: int
    k: int
    R: tuple
    a: tuple
    eps: tuple
    delta: tuple
    phis: tuple
    psis: tuple
    psi_parts: tuple = ()
    certificates: tuple = ()
    report: ConditionReport | None = field(default=None, compare=False)
    hull_masks: tuple = field(default=(), compare=False)

    def prefix(self, k: int | None = None) -> AutoWord:
        """Phi_k o ... o Phi_1 (Phi_1 acts first)."""
        k = self.k if k is None else k
        return compose_all(self.n, list(self.phis[:k]))

    def suffix(self, k: int | None = None) -> AutoWord:
        """Psi_1 o ... o Psi_k (Psi_k acts first)."""
        k = self.k if k is None else k
        return compose_all(self.n, list(self.psis[:k])[::-1])

    def f(self, k: int | None = None) -> AutoWord:
        return self.suffix(k).then(self.prefix(k))

    def to_json(self) -> dict:
        return {
            "n": self.n, "r": self.r, "k": self.k,
            "R": list(self.R), "a": list(self.a), "eps": list(self.eps), "delta": list(self.delta),
            "phis": [w.to_json() for w in self.phis],
            "psis": [w.to_json() for w in self.psis],
            "psi_parts": [[p.to_json() for p in parts] for parts in self.psi_parts],
            "certificates": list(self.certificates),
        }

    @staticmethod
    def from_json(d: dict) -> "InductionState":
        return InductionState(
            n=d["n"], r=d["r"], k=d["k"], R=tuple(d["R"]), a=tuple(d["a"]), eps=tuple(d["eps"]),
            delta=tuple(d["delta"]),
            phis=tuple(AutoWord.from_json(w) for w in d["phis"]),
            psis=tuple(AutoWord.from_json(w) for w in d["psis"]),
            psi_parts=tuple(tuple(AutoWord.from_json(p) for p in parts) for parts in d.get("psi_parts", [])),
            certificates=tuple(d.get("certificates", [])),
        )


# ---------------------------------------------------------------- sampling helpers

def disk_params(rho: float, rings: int = 24, per_ring: int = 96) -> np.ndarray:
    """Polar samples of the closed disk |zeta| <= rho, boundary included."""
    if rho <= 0:
        return np.zeros(1, complex)
    rad = np.linspace(0, rho, rings + 1)[1:]
    th = np.exp(2j * np.pi * np.arange(per_ring) / per_ring)
    return np.concatenate([[0j], (rad[:, None] * th[None, :]).ravel()])


def thick_disk_points(n: int, rho: float, eps: float, rng: np.random.Generator, directions: int = 16) -> np.ndarray:
    """Samples of Delta_rho + eps * closed ball in C^n: the disk grid shifted by
    sphere points of radius eps."""
    zeta = disk_params(rho)
    base = embed(zeta, n)
    if eps <= 0:
        return base
    u = rng.normal(size=(directions, n)) + 1j * rng.normal(size=(directions, n))
    u = eps * u / np.linalg.norm(u, axis=1, keepdims=True)
    u = np.concatenate([np.zeros((1, n), complex), u])
    return (base[:, None, :] + u[None, :, :]).reshape(-1, n)


def max_modulus(word: AutoWord, pts: np.ndarray) -> float:
    with np.errstate(all="ignore"):
        m = np.linalg.norm(word.eval(pts), axis=-1)
    return float(np.nanmax(np.where(np.isfinite(m), m, np.inf)))


def interval_grid(a: float, h: float, offset: float = 0.0) -> np.ndarray:
    return composite_grid(-a, a, h, offset=offset)


def square_params(rho: float, count: int = 150) -> np.ndarray:
    """Square-lattice parameter grid over the disk |zeta| <= rho plus its real diameter."""
    axis = np.linspace(-rho, rho, count + 1)
    zeta = (axis[None, :] + 1j * axis[:, None]).ravel()
    return zeta[np.abs(zeta) <= rho]


# ---------------------------------------------------------------- verification

def _jet_errors(word: AutoWord, problem: Problem, t: np.ndarray) -> np.ndarray:
    """|f^(s)(t) - lambda^(s)(t)|, shape (M, r+1)."""
    jets = word.real_jet(t, problem.r).jets
    with np.errstate(invalid="ignore"):
        err = np.linalg.norm(jets - problem.curve.jets(t, problem.r), axis=-1)
    return np.where(np.isfinite(err), err, np.inf)


def tangency_slopes(f: AutoWord, problem: Problem, centers, radii=None) -> list:
    """Log-log slope of |f(t_j + x) - lambda(t_j + x)| against x on both sides."""
    radii = np.geomspace(1e-3, 1e-1, 9) if radii is None else radii
    out = []
    for c in centers:
        for sgn in (1, -1):
            t = c + sgn * radii
            d = np.linalg.norm(f.eval(embed(t, problem.n)) - problem.curve(t), axis=-1)
            out.append(float(np.polyfit(np.log(radii), np.log(np.maximum(d, 1e-300)), 1)[0]))
    return out


def clearance_proxy(f: AutoWord, problem: Problem, rho: float, centers, count: int = 150) -> dict:
    """Min distance between f(parameter grid over Delta_rho) and lambda(window grid),
    both taken outside the tangency_radius neighborhoods of lambda(centers)."""
    cfg, n = problem.config, problem.n
    zeta = square_params(rho, count)
    lam_t = problem.curve.grid
    row = lam_t[np.abs(lam_t) <= rho]
    zeta = np.concatenate([zeta, row.astype(complex)])
    with np.errstate(all="ignore"):
        fp = f.eval(embed(zeta, n))
    fp = fp[np.all(np.isfinite(fp), axis=1)]
    lp = problem.curve(lam_t)
    if centers:
        anchors = problem.curve(np.array(centers, float))
        keep_f = nearest_distances(fp, anchors) > cfg.tangency_radius
        keep_l = nearest_distances(lp, anchors) > cfg.tangency_radius
        fp, lp = fp[keep_f], lp[keep_l]
    dist = float(np.min(nearest_distances(fp, lp))) if len(fp) and len(lp) else np.inf
    return {"clearance": dist, "param_points": int(len(zeta)), "curve_points": int(len(lam_t)),
            "resolution": float(2 * rho / count)}


def verify(state: InductionState, problem: Problem) -> ConditionReport:
    """Recompute all conditions of step k on fresh grids (never raises)."""
    cfg, n, r, k = problem.config, problem.n, problem.r, state.k
    rng = np.random.default_rng([cfg.seed, k, 99])
    f = state.f()
    R, a, eps, delta = state.R, state.a, state.eps, state.delta
    eta = problem.weight
    conds = []

    # (1) f_k(Delta_j + eps_k B) inside Int B_j
    m1, meta1 = np.inf, {}
    for j in range(1, k + 1):
        pts = thick_disk_points(n, j, eps[k - 1], rng)
        mm = max_modulus(f, pts)
        m1 = min(m1, R[j - 1] - mm)
        meta1[f"max_modulus_{j}"] = mm
    meta1["samples_per_disk"] = int(len(thick_disk_points(n, 1, eps[k - 1], np.random.default_rng(0))))
    conds.append(Condition("1", m1, meta1))

    # (2), (3) jets on I_k
    t = interval_grid(a[k - 1], problem.curve.h_grid, offset=0.29)
    err = _jet_errors(f, problem, t)
    eta_t = eta(t)
    m2 = float(np.min(eta_t[:, None] - err))
    conds.append(Condition("2", m2, {"points": int(len(t)), "max_ratio": float(np.max(err / eta_t[:, None]))}))
    outer = np.abs(t) >= a[k - 1] - 1
    m3 = float(np.min(delta[k - 1] - err[outer])) if outer.any() else np.inf
    conds.append(Condition("3", m3, {"points": int(outer.sum()), "delta": delta[k - 1]}))

    # (4) jets at T inside I_k
    centers = problem.tangency_in(a[k - 1])
    if centers:
        e4 = _jet_errors(f, problem, np.array(centers))
        conds.append(Condition("4", JET_TOL - float(e4.max()), {"max_error": float(e4.max()), "tol": JET_TOL}))
    else:
        conds.append(Condition("4", np.inf, {"vacuous": True}))

    # (5) clearance proxy plus tangency order
    cp = clearance_proxy(f, problem, k + 1, centers)
    slopes = tangency_slopes(f, problem, centers) if centers else []
    slope_margin = min(slopes) - (r + 1 - 0.3) if slopes else np.inf
    cp.update({"threshold": cfg.clearance, "min_slope": min(slopes) if slopes else np.inf})
    conds.append(Condition("5", min(cp["clearance"] - cfg.clearance, slope_margin), cp))

    # (6), (7) escape scans
    lo, hi = a[k - 1] - 1, a[k - 1] + max(10.0, a[k - 1])
    ts = composite_grid(lo, hi, problem.curve.h_grid, dense=lo + 20.0)
    ts = np.concatenate([ts, -ts])
    lam_mod = np.linalg.norm(problem.curve(ts), axis=-1)
    conds.append(Condition("6", float(lam_mod.min() - (R[k - 1] + 1)), {"points": int(len(ts)), "hi": hi}))
    with np.errstate(all="ignore"):
        f_mod = np.linalg.norm(f.eval(embed(ts, n)), axis=-1)
    conds.append(Condition("7", float(np.nanmin(f_mod) - R[k - 1]), {"points": int(len(ts)), "hi": hi}))

    # (a)-(f) bookkeeping
    ma = min(R[j] - max(j + 2, (R[j - 1] + 1) if j else -np.inf) for j in range(k))
    conds.append(Condition("a", ma))
    mb, tb = np.inf, {}
    for j in range(2, k + 1):
        pts = ball_samples(n, R[j - 2], cfg.ball_samples, rng)
        with np.errstate(all="ignore"):
            dev = float(np.max(np.linalg.norm(state.phis[j - 1].eval(pts) - pts, axis=-1)))
        mb = min(mb, 2.0 ** -j - dev)
        tb[f"sup_{j}"] = dev
    conds.append(Condition("b", mb, tb))
    mc = 0.5 - eps[0]
    for j in range(1, k):
        mc = min(mc, eps[j - 1] / 2 - eps[j])
    conds.append(Condition("c", mc))
    md, dd = np.inf, {}
    for j in range(1, k + 1):
        psi = state.psis[j - 1]
        form_ok = all(l.shear.proj == 0 and l.shear.direction[0] == 0 for l in psi.letters)
        pts = ball_samples(n, j, cfg.ball_samples, rng)
        dev = float(np.max(np.linalg.norm(psi.eval(pts) - pts, axis=-1)))
        bound = tail_bound(psi, j)
        dd[f"sup_{j}"], dd[f"tail_bound_{j}"] = dev, bound
        md = min(md, eps[j - 1] - dev if form_ok else -1.0)
    conds.append(Condition("d", md, dd))
    me = min(a[j] - max(a[j - 1] + 2 if j else -np.inf, j + 3) for j in range(k))
    conds.append(Condition("e", me))
    mf = min(min(delta[j], eta.inf_on(-a[j], a[j]) / problem.C - delta[j]) for j in range(k))
    conds.append(Condition("f", mf))
    return ConditionReport(k, tuple(conds))


# ---------------------------------------------------------------- choices

def _clean(x):
    """JSON-safe copy: numpy scalars to floats, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return _num(x)
    if isinstance(x, (str, type(None))):
        return x
    return str(x)


def choose_radius(prev: float | None, k: int, reach: float) -> float:
    """R_k >= max(k+1, R_{k-1}+1) with the reach strictly inside (R_k - 1) B."""
    lo = max(k + 1.0, prev + 1.0 if prev is not None else 0.0, reach + 1.0)
    return float(1.02 * lo + 0.5)


def choose_interval_end(curve: JetCurve, R: float, floor: float) -> float:
    """a >= floor with |lambda(t)| > R + 1 for all grid |t| >= a - 1."""
    hi = max(floor + 10.0, 4.0 * (R + 2.0))
    for _ in range(24):
        ts = composite_grid(0.0, hi, curve.h_grid, dense=min(hi, 40.0))
        s = 0.0
        for sgn in (1.0, -1.0):
            bad = np.nonzero(np.linalg.norm(curve(sgn * ts), axis=-1) <= R + 1)[0]
            if bad.size == 0:
                continue
            i = bad[-1]
            if i + 1 < len(ts):
                # refine the gap to the next good grid point at the base resolution
                fine = np.linspace(ts[i], ts[i + 1], int(np.ceil((ts[i + 1] - ts[i]) / curve.h_grid)) + 2)
                fb = fine[np.linalg.norm(curve(sgn * fine), axis=-1) <= R + 1]
                s = max(s, float(fb.max()) + curve.h_grid)
            else:
                s = max(s, float(ts[i]))
        if s < hi / 2:
            return float(max(floor, s + 1.5))
        hi *= 4
    raise StepError(f"curve modulus stays below {R + 1:.4g} out to |t| = {hi:.4g}")


def circle_reach(word: AutoWord, rho: float, count: int = 4096) -> float:
    """max |word(zeta e_1)| on |zeta| = rho: the max over the disk, since
    |word|^2 is subharmonic along the line."""
    th = np.exp(2j * np.pi * np.arange(count) / count)
    return max_modulus(word, embed(np.concatenate([[0j], rho * th]), word.n))


def middle_interval(f: AutoWord, R: float, rho: float, a: float, h: float) -> tuple:
    """I^0 = [s_-, s_+]: the closed part of I = [-a, a] left after removing the
    two components of {t in I, |t| > rho : |f(t)| > R} that contain the endpoints."""
    h = max(h, a / 100000)
    m = max(int(np.ceil(a / h)), 1)
    t = np.linspace(0.0, a, m + 1)
    ends = []
    for sgn in (1, -1):
        with np.errstate(all="ignore"):
            mod = np.linalg.norm(f.eval(embed(sgn * t, f.n)), axis=-1)
        out = (t > rho) & (mod > R)
        inside = np.nonzero(~out)[0]
        ends.append(float(t[inside[-1]]) if inside.size else 0.0)
    return (-ends[1], ends[0])


def _perturbation_tables(t: np.ndarray, r: int, n: int, size: float, rng: np.random.Generator,
                         trials: int) -> list:
    """Jet tables of t -> t e_1 + p(t) with ||p||_{C^r} <= size: a constant
    offset and damped sinusoids in random complex directions."""
    out = []
    for i in range(trials + 1):
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        v /= np.linalg.norm(v)
        omega = 0.0 if i == 0 else float(rng.uniform(0.2, 1.0))
        phase = float(rng.uniform(0, 2 * np.pi))
        jets = np.zeros((t.size, r + 1, n), complex)
        jets[:, 0, 0] = t
        if r >= 1:
            jets[:, 1, 0] = 1.0
        for s in range(r + 1):
            if omega == 0.0:
                wave = np.full(t.shape, 1.0 if s == 0 else 0.0)
            else:
                wave = omega**s * np.sin(omega * t + phase + s * np.pi / 2)
            jets[:, s, :] += size * wave[:, None] * v[None, :]
        out.append(jets)
    return out


def stability_scan(G: AutoWord, problem: Problem, k: int, R: tuple, a: float, delta: float,
                   start: float, rng: np.random.Generator) -> tuple[float, dict]:
    """Largest eps' in start * 2^-m such that G(Delta_j + eps' B) stays inside
    Int B_j (j <= k) and every battery perturbation psi with
    ||psi - t||_{C^r(I_k)} < eps' keeps (2), (3) and (7) for G o psi."""
    from .shears import RealJetTable
    cfg, n, r = problem.config, problem.n, problem.r
    t = interval_grid(a, problem.curve.h_grid, offset=0.13)
    lam = problem.curve.jets(t, r)
    eta_t = problem.weight(t)
    outer = np.abs(t) >= a - 1

    def margins(jets):
        out = G.real_jet(t, r, init=RealJetTable(t, jets)).jets
        with np.errstate(invalid="ignore"):
            err = np.linalg.norm(out - lam, axis=-1)
            mod = np.linalg.norm(out[:, 0, :], axis=-1)
        err = np.where(np.isfinite(err), err, np.inf)
        return (float(np.min(eta_t[:, None] - err)), float(np.min(delta - err[outer])),
                float(np.min(mod[outer]) - R[k - 1]))

    base = margins(_perturbation_tables(t, r, n, 0.0, rng, 0)[0])
    if min(base) <= 0:
        raise StepError("G fails (2)/(3)/(7) before perturbation", details={"margins": base})
    e = start
    for halving in range(60):
        inside = all(max_modulus(G, thick_disk_points(n, j, e, rng)) < R[j - 1] for j in range(1, k + 1))
        if inside:
            worst = min(min(margins(p)) for p in _perturbation_tables(t, r, n, 0.999 * e, rng, cfg.stability_trials))
            if worst > 0:
                return e, {"halvings": halving, "unperturbed": list(base), "worst_perturbed": worst,
                           "grid_points": int(len(t))}
        e /= 2
    raise StepError("stability scan exhausted", details={"last": e})


def _preimage_extent(G: AutoWord, R: float, rng: np.random.Generator, count: int) -> float:
    pts = ball_samples(G.n, R, count, rng)
    with np.errstate(all="ignore"):
        pre = G.inverse().eval(pts)
    return float(max(R, np.nanmax(np.abs(pre[:, 0]))))


def tail_clearance(psi: AutoWord, scene, a: float, radius: float, rng: np.random.Generator,
                   h: float = 0.01, directions: int = 12) -> float:
    """Largest delta in 2^-m with psi(([-radius, radius] minus (-a, a)) + delta B)
    missing the scene on samples."""
    n = psi.n
    t = composite_grid(a, radius, h, dense=a + 20.0)
    t = np.concatenate([t, -t])
    u = rng.normal(size=(directions, n)) + 1j * rng.normal(size=(directions, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u = np.concatenate([np.zeros((1, n), complex), u])
    d = 1.0
    while d > 1e-12:
        cloud = (embed(t, n)[:, None, :] + d * u[None, :, :]).reshape(-1, n)
        if not scene.contains(psi.eval(cloud)).any():
            return d
        d /= 2
    raise StepError("escaped tail meets A")


def _cr_dev(word: AutoWord, t: np.ndarray, r: int) -> float:
    jets = word.real_jet(t, r).jets
    jets[:, 0, 0] -= t
    if r >= 1:
        jets[:, 1, 0] -= 1.0
    return float(np.max(np.linalg.norm(jets, axis=-1)))


def finish_step(G: AutoWord, problem: Problem, k: int, R: tuple, a: float, delta: float,
                eps_start: float) -> dict:
    """Given G = Phi_k o f_{k-1}, choose eps_k and build Psi_k = psi o theta."""
    cfg, n, r = problem.config, problem.n, problem.r
    h = problem.curve.h_grid
    eps_p, battery = stability_scan(G, problem, k, R, a, delta, eps_start, problem.rng(k, "battery"))
    eps = eps_p / 2
    centers = problem.tangency_in(a)
    scene = WordBall(G, R[k - 1])
    rng = problem.rng(k, "escape")
    radius_A = 1.1 * _preimage_extent(G, R[k - 1], rng, cfg.ball_samples) + 1.0
    esc = escape_shear(scene, float(k), (-a, a), r, eps / 2, centers, n, radius_A, mode=cfg.escape_mode,
                       degrees=cfg.degrees, rng=rng)
    psi = esc.word
    R_theta = max(a, radius_A) + 1.0
    delta_theta = 0.5 * tail_clearance(psi, scene, a, R_theta, rng)
    H = psi.then(G)
    X = max(problem.curve.window, 2 * R_theta)
    tl = composite_grid(-X, X, h, dense=problem.curve.window)
    with np.errstate(all="ignore"):
        pts = H.inverse().eval(problem.curve(tl))
    t_I = interval_grid(a, h, offset=0.41)
    ball = ball_samples(n, float(k), cfg.ball_samples, rng)
    eps_theta = min(delta_theta, eps / 2)
    rng_avoid = problem.rng(k, "avoid")
    for attempt in range(24):
        av = avoidance_shear(pts, centers, r, eps_theta, R_theta, rng_avoid, rho=cfg.avoid_rho,
                             retries=cfg.retries, params=tl, regular_threshold=cfg.regular_threshold)
        Psi = av.word.then(psi)
        dev_I = _cr_dev(Psi, t_I, r)
        dev_ball = float(np.max(np.linalg.norm(Psi.eval(ball) - ball, axis=-1)))
        if dev_I < eps and dev_ball < eps:
            break
        eps_theta /= 2
    else:
        raise StepError("avoidance perturbation too large on I_k", details={"dev": dev_I})
    cert = {"eps_prime": eps_p, "battery": battery, "escape": esc.certificate, "escape_radius": radius_A,
            "theta_radius": R_theta, "theta_delta": delta_theta, "theta_eps": eps_theta,
            "avoidance": av.certificate, "psi_cr_dev": dev_I, "psi_ball_dev": dev_ball}
    return {"eps": eps, "Psi": Psi, "parts": (psi, av.word), "cert": cert}


def _commit(problem: Problem, state: InductionState) -> InductionState:
    report = verify(state, problem)
    state = replace(state, report=report)
    if not report.passed:
        raise StepError(f"step {state.k} failed conditions {report.failing()}", report)
    return state


def _hull(word: AutoWord, radius: float, disks: tuple, intervals: tuple, cells: int):
    return hull_on_curve(word, radius, disks, intervals, cells=cells)


def base_case(problem: Problem) -> InductionState:
    """k = 1: arc push onto the seeded target, blend, correction, then Psi_1."""
    cfg, n, r = problem.config, problem.n, problem.r
    curve, eta, C = problem.curve, problem.weight, problem.C
    h = curve.h_grid
    c0 = cfg.base_half_width
    eta_base = eta.inf_on(-c0, c0)
    kappa = cfg.offset_gain * eta_base
    seeded = with_seed_offset(curve, problem.tangency, kappa)
    guard_end = cfg.guard_scale * curve.window
    task = ArcPushTask(n=n, r=r, curve=AutoWord.identity(n), arcs=((-c0, c0),), target=seeded.jets,
                       k_points=np.zeros((0, n), complex), eps=eta_base / C,
                       arc_marked=tuple(problem.tangency_in(c0)),
                       guard=((-guard_end, -c0), (c0, guard_end)) if guard_end > c0 else (),
                       density=cfg.arc_density, beta=cfg.base_beta, partition_beta=cfg.base_beta,
                       degrees=cfg.degrees, stages=cfg.stages,
                       max_stages=cfg.max_stages, k_weight=cfg.k_weight, fit_fraction=cfg.fit_fraction)
    push = arc_push(task)
    phi1 = push.word
    R1 = choose_radius(None, 1, circle_reach(phi1, 1.0))
    a1 = choose_interval_end(curve, R1, max(c0 + 1, 3.0) + 0.5)
    delta1 = eta.inf_on(-a1, a1) / (2 * C)
    K0 = _hull(phi1, 0.0, (1.0,), (), cfg.hull_cells)
    lam_hat = blend(lambda t, o: phi1.real_jet(t, o).jets, curve, Cutoff(c0 - 1, c0, r))
    band = [(-c0, -(c0 - 1)), (c0 - 1, c0)]
    pushed = transversal_push_off(lam_hat, K0.samples(problem.rng(1, "push"), 0), band,
                                  cfg.push_fraction * delta1, problem.rng(1, "push"), problem.tangency,
                                  cfg.tangency_radius, cfg.retries, grid=curve.grid)
    lam0 = pushed.curve
    tg = interval_grid(a1, h, offset=0.17)
    sigma1 = float(np.min(eta(tg)[:, None] - np.linalg.norm(lam0.jets(tg, r) - curve.jets(tg, r), axis=-1)))
    if sigma1 <= 0:
        raise StepError("blended curve leaves the weight tube", details={"sigma": sigma1})
    eps_corr = 0.5 * min(delta1, sigma1)
    corr = correction(lam0.jets, phi1, (-(c0 - 1), c0 - 1), K0, a1, r, eps_corr, problem.tangency,
                      problem.rng(1, "correction"), h=h, beta_cap=cfg.base_beta, k_ball_points=0,
                      guard_end=max(cfg.guard_scale * a1, a1 + 10.0),
                      density=cfg.arc_density, degrees=cfg.degrees, stages=cfg.stages,
                      max_stages=cfg.max_stages, k_weight=cfg.k_weight, fit_fraction=cfg.fit_fraction)
    Phi1 = phi1.then(corr.word)
    fin = finish_step(Phi1, problem, 1, (R1,), a1, delta1, 0.5)
    cert = {"k": 1, "kappa": kappa, "arc_push": {"error": push.arc_error, "stages": push.stages,
                                                 "letters": len(phi1)},
            "R": R1, "a": a1, "delta": delta1, "sigma": sigma1, "eps_correction": eps_corr,
            "chain_ok": bool(eps_corr < delta1 and eps_corr < sigma1),
            "push_off": {"margin": pushed.margin, "pushed": pushed.pushed},
            "correction": corr.certificate, **fin["cert"]}
    state = InductionState(n, r, 1, (R1,), (a1,), (fin["eps"],), (delta1,), (Phi1,), (fin["Psi"],),
                           (fin["parts"],), (_clean(cert),), hull_masks=(K0.mask_text(),))
    state = _commit(problem, state)
    log.info("k=1 committed: %s", state.report.summary())
    return state


def step(state: InductionState, problem: Problem) -> InductionState:
    """k -> k+1; raises StepError with the report if any condition fails."""
    cfg, n, r = problem.config, problem.n, problem.r
    curve, eta, C = problem.curve, problem.weight, problem.C
    h = curve.h_grid
    k = state.k
    f = state.f()
    Rk, ak, ek, dk = state.R[-1], state.a[-1], state.eps[-1], state.delta[-1]
    I0 = middle_interval(f, Rk, k + 1.0, ak, h)
    K = _hull(f, Rk, (k + 1.0,), (I0,), cfg.hull_cells)
    i0 = np.linspace(I0[0], I0[1], 2001)
    reach = max(K.max_modulus(), circle_reach(f, k + 1.0), max_modulus(f, embed(i0, n)))
    Rn = choose_radius(Rk, k + 1, reach)
    an = choose_interval_end(curve, Rn, max(ak + 2, k + 3.0) + 0.5)
    lam_hat = blend(lambda t, o: f.real_jet(t, o).jets, curve, Cutoff(ak - 1, ak, r))
    band = [(-ak, -(ak - 1)), (ak - 1, ak)]
    band_grid = np.concatenate([np.linspace(lo, hi, int(np.ceil((hi - lo) / h)) + 1) for lo, hi in band])
    rng_push = problem.rng(k + 1, "push")
    pushed = transversal_push_off(lam_hat, K.samples(rng_push, cfg.ball_samples), band,
                                  cfg.push_fraction * dk, rng_push, problem.tangency, cfg.tangency_radius,
                                  cfg.retries, grid=band_grid)
    lam_k = pushed.curve
    delta_n = eta.inf_on(-an, an) / (2 * C)
    tg = interval_grid(an, h, offset=0.17)
    sigma = float(np.min(eta(tg)[:, None] - np.linalg.norm(lam_k.jets(tg, r) - curve.jets(tg, r), axis=-1)))
    if sigma <= 0:
        raise StepError("blended curve leaves the weight tube", details={"sigma": sigma})
    rng_b = problem.rng(k + 1, "hull")
    room = [state.R[j - 1] - max_modulus(f, thick_disk_points(n, j, ek, rng_b)) for j in range(1, k + 1)]
    eps_corr = 0.5 * min(2.0 ** -(k + 1), delta_n, sigma, min(room))
    if eps_corr <= 0:
        raise StepError("no room for the correction tolerance", details={"room": room})
    corr = correction(lam_k.jets, f, (-(ak - 1), ak - 1), K, an, r, eps_corr, problem.tangency,
                      problem.rng(k + 1, "correction"), h=h, beta_cap=cfg.base_beta,
                      k_ball_points=cfg.ball_samples, guard_end=max(cfg.guard_scale * an, an + 10.0),
                      density=cfg.arc_density, degrees=cfg.degrees,
                      stages=cfg.stages, max_stages=cfg.max_stages, k_weight=cfg.k_weight,
                      fit_fraction=cfg.fit_fraction)
    Phi = corr.word
    G = f.then(Phi)
    fin = finish_step(G, problem, k + 1, state.R + (Rn,), an, delta_n, ek / 2)
    cert = {"k": k + 1, "I0": list(I0), "hull": {"absorbed": K.absorbed, "thin_warning": K.thin_warning,
                                                   "cells": len(K.xs), "cell": K.cell, "reach": reach},
            "R": Rn, "a": an, "delta": delta_n, "sigma": sigma, "eps_correction": eps_corr, "room": room,
            "chain_ok": bool(eps_corr < delta_n and eps_corr < sigma),
            "push_off": {"margin": pushed.margin, "pushed": pushed.pushed},
            "correction": corr.certificate, **fin["cert"]}
    new = InductionState(n, r, k + 1, state.R + (Rn,), state.a + (an,), state.eps + (fin["eps"],),
                         state.delta + (delta_n,), state.phis + (Phi,), state.psis + (fin["Psi"],),
                         state.psi_parts + (fin["parts"],), state.certificates + (_clean(cert),),
                         hull_masks=state.hull_masks + (K.mask_text(),))
    new = _commit(problem, new)
    log.info("k=%d committed: %s", k + 1, new.report.summary())
    return new


# ---------------------------------------------------------------- monitor and runner

@dataclass(frozen=True)
class MonitorReport:
    halving_chain: bool
    tail_checks: tuple
    omega_margins: tuple
    carleman_ratio: tuple

    @property
    def passed(self) -> bool:
        return (self.halving_chain and all(c["bound"] + c["rounding"] >= c["measured"] for c in self.tail_checks)
                and all(m["margin"] > 0 for m in self.omega_margins)
                and all(c < 1 for c in self.carleman_ratio))

    def to_json(self) -> dict:
        return _clean({"passed": self.passed, "halving_chain": self.halving_chain,
                       "tail_checks": list(self.tail_checks), "omega_margins": list(self.omega_margins),
                       "carleman_ratio": list(self.carleman_ratio)})


def limit_monitor(states: list, problem: Problem, min_points: int = 1000) -> MonitorReport:
    """Numeric stand-ins for the k -> infinity limit: the eps halving chain, tail
    bounds of the shear sums, domain membership margins and the weighted error."""
    last = states[-1]
    n, r, m_top = last.n, last.r, last.k
    eps = last.eps
    chain = bool(eps[0] < 0.5 and all(eps[j] < eps[j - 1] / 2 for j in range(1, m_top)))
    tails = []
    for k in range(1, m_top):
        zeta = disk_params(k - 1.0)
        pts = embed(zeta, n)
        base = last.suffix(k).eval(pts)
        for m in range(k + 1, m_top + 1):
            rest = compose_all(n, list(last.psis[k:m])[::-1])
            full = last.suffix(m).eval(pts)
            measured = float(np.max(np.linalg.norm(full - base, axis=-1)))
            # rounding of the two evaluations being subtracted
            slack = 8 * np.finfo(float).eps * float(np.max(np.abs(full)))
            tails.append({"k": k, "m": m, "radius": k - 1.0, "measured": measured,
                          "bound": tail_bound(rest, k - 1.0), "rounding": slack})
    omega = []
    rng = np.random.default_rng([problem.config.seed, m_top, 101])
    for k in range(2, m_top + 1):
        pts = thick_disk_points(n, k - 1.0, eps[k - 1], rng)
        mm = max_modulus(last.f(k), pts)
        omega.append({"k": k, "radius": last.R[k - 2], "max_modulus": mm, "margin": last.R[k - 2] - mm})
    a = last.a[-1]
    h = min(problem.curve.h_grid, 2 * a / min_points)
    t = interval_grid(a, h, offset=0.41)
    ratio = _jet_errors(last.f(), problem, t) / problem.weight(t)[:, None]
    return MonitorReport(chain, tuple(tails), tuple(omega), tuple(float(x) for x in ratio.max(axis=0)))


def run_induction(problem: Problem, steps: int | None = None, on_commit=None) -> list:
    """Base case followed by steps - 1 induction steps; StepError propagates."""
    steps = problem.config.steps if steps is None else steps
    if steps < 1:
        raise ValueError("steps must be at least 1")
    state = base_case(problem)
    states = [state]
    if on_commit:
        on_commit(state)
    while state.k < steps:
        state = step(state, problem)
        states.append(state)
        if on_commit:
            on_commit(state)
    return states
