"""Proper curves with exact jets, stability weights, cutoffs and blends."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
import json
from pathlib import Path
from typing import Callable

import numpy as np
import sympy as sp

from . import series as ser

DEFAULT_H_GRID = 1e-2
ETA_CEILING = 0.5 * (1 - 1e-9)


class CurveError(ValueError):
    pass


# ---------------------------------------------------------------- descriptors

_T = sp.Symbol("t", real=True)


def _poly(coeffs) -> sp.Expr:
    return sum(sp.nsimplify(0) + sp.Float(c) * _T**k for k, c in enumerate(coeffs))


def _term_expr(term: dict) -> sp.Expr:
    kind = term["kind"]
    c = term["coefficients"]
    if kind == "poly":
        expr = _poly(c)
    elif kind == "rational":
        expr = _poly(c[0]) / _poly(c[1])
    elif kind in ("sin", "cos"):
        amp, freq, phase = (list(c) + [0.0, 0.0, 0.0])[:3]
        f = sp.sin if kind == "sin" else sp.cos
        expr = sp.Float(amp) * f(sp.Float(freq) * _T + sp.Float(phase))
    elif kind == "piecewise_poly":
        breaks = term["breaks"]
        pieces = [_poly(p) for p in c]
        args = [(pieces[i], _T < b) for i, b in enumerate(breaks)] + [(pieces[-1], True)]
        expr = sp.Piecewise(*args)
    elif kind == "smooth_join":
        breaks, width = term["breaks"], term["width"]
        pieces = [_poly(p) for p in c]
        expr = pieces[0]
        for i, b in enumerate(breaks):
            expr = expr + (pieces[i + 1] - pieces[i]) * (1 + sp.tanh((_T - sp.Float(b)) / sp.Float(width))) / 2
    else:
        raise CurveError(f"unknown term kind {kind!r}")
    factor = term.get("factor")
    if factor is not None:
        expr = (sp.Float(factor[0]) + sp.I * sp.Float(factor[1])) * expr
    return expr


def _coordinate_exprs(desc: dict) -> list:
    coords = desc["coordinates"]
    if len(coords) != desc["n"]:
        raise CurveError("number of coordinates does not match n")
    return [sum((_term_expr(term) for term in terms), sp.Integer(0)) for terms in coords]


# ---------------------------------------------------------------- curves

@dataclass(frozen=True)
class CurveMargins:
    immersion: float
    injectivity: float
    properness: float

    def ok(self) -> bool:
        return self.immersion > 0 and self.injectivity > 0 and self.properness > 0


@dataclass(frozen=True)
class JetCurve:
    """Curve t -> C^n with exact jets; ``evaluator(t, order)`` returns an array
    of shape (M, order+1, n) holding lambda^(s)(t)."""

    n: int
    r: int
    window: float
    core: float
    evaluator: Callable = field(compare=False, repr=False)
    descriptor: dict | None = field(default=None, compare=False, repr=False)
    h_grid: float = DEFAULT_H_GRID

    def jets(self, t, order: int | None = None) -> np.ndarray:
        order = self.r if order is None else order
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.evaluator(t, order)

    def __call__(self, t) -> np.ndarray:
        return self.jets(t, 0)[:, 0, :]

    @property
    def grid(self) -> np.ndarray:
        m = int(round(2 * self.window / self.h_grid))
        return np.linspace(-self.window, self.window, m + 1)

    def with_evaluator(self, evaluator, descriptor=None) -> "JetCurve":
        return JetCurve(self.n, self.r, self.window, self.core, evaluator, descriptor, self.h_grid)


def _descriptor_evaluator(desc: dict) -> Callable:
    exprs = _coordinate_exprs(desc)
    cache: dict[int, list] = {}

    def deriv_fns(s):
        if s not in cache:
            cache[s] = [sp.lambdify(_T, sp.diff(e, _T, s), modules="numpy") for e in exprs]
        return cache[s]

    def evaluator(t, order):
        out = np.zeros((t.size, order + 1, len(exprs)), complex)
        for s in range(order + 1):
            for j, f in enumerate(deriv_fns(s)):
                out[:, s, j] = np.broadcast_to(np.asarray(f(t), dtype=complex), t.shape)
        return out

    return evaluator


def curve_from_descriptor(desc: dict, h_grid: float = DEFAULT_H_GRID, check: bool = True) -> JetCurve:
    n, r = int(desc["n"]), int(desc["r"])
    if n < 2 or r < 0:
        raise CurveError("need n >= 2 and r >= 0")
    window = float(desc["window"])
    if window <= 0:
        raise CurveError("window must be positive")
    core = float(desc.get("core", window / 2))
    curve = JetCurve(n, r, window, core, _descriptor_evaluator(desc), desc, h_grid)
    if check:
        margins = curve_margins(curve)
        if margins.immersion <= 0:
            raise CurveError(f"immersion margin {margins.immersion:.3g} <= 0: not an immersion at this resolution")
        if margins.injectivity <= 0:
            raise CurveError(f"injectivity margin {margins.injectivity:.3g} <= 0")
        if margins.properness <= 0:
            raise CurveError("properness proxy failed")
    return curve


def load_curve(source) -> JetCurve:
    """Load a curve descriptor (dict, JSON text or path)."""
    if isinstance(source, (str, Path)) and Path(source).exists():
        source = json.loads(Path(source).read_text())
    elif isinstance(source, str):
        source = json.loads(source)
    return curve_from_descriptor(source, float(source.get("h_grid", DEFAULT_H_GRID)))


def _pairwise_min(values: np.ndarray, t: np.ndarray, min_gap: float, chunk: int = 512,
                  ratio: bool = True) -> float:
    best = np.inf
    m = len(t)
    for lo in range(0, m, chunk):
        a = values[lo : lo + chunk]
        d = np.linalg.norm(a[:, None, :] - values[None, :, :], axis=-1)
        gap = np.abs(t[lo : lo + chunk, None] - t[None, :])
        keep = gap >= min_gap * (1 - 1e-9)
        if keep.any():
            q = d[keep] / gap[keep] if ratio else d[keep]
            best = min(best, float(q.min()))
    return best


def properness_margin(t: np.ndarray, modulus: np.ndarray, core: float, samples: int = 8) -> float:
    """Minimum increment of the lower envelope min_{|t|>=s} |lambda| between
    consecutive checkpoints s in [core, window]; positive means the envelope
    strictly increases outside the core window."""
    a = np.abs(t)
    marks = np.linspace(core, a.max(), samples + 1)
    env = np.array([modulus[a >= s - 1e-12].min() for s in marks])
    return float(np.min(np.diff(env)))


def curve_margins(curve: JetCurve, t=None) -> CurveMargins:
    t = curve.grid if t is None else t
    h = float(np.max(np.diff(t)))
    j = curve.jets(t, 2)
    speed = np.linalg.norm(j[:, 1, :], axis=-1)
    accel = np.linalg.norm(j[:, 2, :], axis=-1)
    # between grid points |lambda'| can drop by at most (h/2) max|lambda''|
    cell = np.minimum(speed[:-1], speed[1:]) - 0.5 * h * np.maximum(accel[:-1], accel[1:]) * 1.5
    immersion = float(min(cell.min(), speed.min()))
    injectivity = _pairwise_min(j[:, 0, :], t, h)
    proper = properness_margin(t, np.linalg.norm(j[:, 0, :], axis=-1), curve.core)
    return CurveMargins(immersion, injectivity, proper)


# ---------------------------------------------------------------- weights

@dataclass(frozen=True)
class Weight:
    """Piecewise-linear positive weight, constant beyond the breakpoints."""

    breakpoints: np.ndarray
    values: np.ndarray
    cap: float = ETA_CEILING
    certificate: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if np.any(np.asarray(self.values) <= 0):
            raise ValueError("weight must be positive")

    def __call__(self, t) -> np.ndarray:
        return np.minimum(np.interp(np.asarray(t, float), self.breakpoints, self.values), self.cap)

    def inf_on(self, lo: float, hi: float) -> float:
        inside = (self.breakpoints >= lo) & (self.breakpoints <= hi)
        vals = [float(self(lo)), float(self(hi))]
        if inside.any():
            vals.append(float(np.min(self(self.breakpoints[inside]))))
        return min(vals)

    def scaled(self, factor: float) -> "Weight":
        return Weight(self.breakpoints, self.values * factor, self.cap)

    def to_json(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist(), "cap": self.cap}

    @staticmethod
    def from_json(d: dict) -> "Weight":
        return Weight(np.array(d["breakpoints"], float), np.array(d["values"], float), float(d["cap"]))

    @staticmethod
    def constant(value: float, cap: float = ETA_CEILING) -> "Weight":
        return Weight(np.array([0.0]), np.array([float(value)]), cap)


def stability_weight(curve: JetCurve, cap: float = ETA_CEILING, near: float = 1.0,
                     safety: float = 0.5) -> Weight:
    """Weight certifying that C^1 perturbations below it stay proper embeddings.

    Certificate on the grid: (a) the perturbed derivative keeps a positive real
    projection on the unit tangent at t_i throughout the window |t - t_i| <= near
    (local injectivity and immersion); (b) for grid pairs
    farther apart, eta_i + eta_j < |lambda_i - lambda_j|; (c) |lambda| - eta keeps
    the properness proxy.
    """
    cap = min(cap, ETA_CEILING)
    t = curve.grid
    j = curve.jets(t, 1)
    val, der = j[:, 0, :], j[:, 1, :]
    speed = np.linalg.norm(der, axis=1)
    tangent = der / speed[:, None]
    m = len(t)
    eta = np.full(m, cap)
    half = int(np.ceil(near / curve.h_grid))
    for i in range(m):
        lo, hi = max(0, i - half), min(m, i + half + 1)
        proj = np.real(der[lo:hi] @ np.conj(tangent[i]))
        if np.any(proj <= 0):
            raise CurveError("tangent turns by more than 90 degrees within the near window: shrink it")
        eta[lo:hi] = np.minimum(eta[lo:hi], safety * proj)
    # far pairs
    for lo in range(0, m, 512):
        d = np.linalg.norm(val[lo : lo + 512, None, :] - val[None, :, :], axis=-1)
        gap = np.abs(t[lo : lo + 512, None] - t[None, :])
        d = np.where(gap > near, d, np.inf)
        eta[lo : lo + 512] = np.minimum(eta[lo : lo + 512], safety * d.min(axis=1))
    if np.any(eta <= 0):
        raise CurveError("no positive weight certifies at this resolution")
    proper = properness_margin(t, np.linalg.norm(val, axis=-1) - eta, curve.core)
    if proper <= 0:
        raise CurveError("weight breaks the properness proxy")
    cert = {"derivative_margin": float(np.min(speed - eta)),
            "properness_margin": proper, "near_window": near}
    return Weight(t.copy(), eta, cap, cert)


def perturbation_battery(curve: JetCurve, weight: Weight, rng: np.random.Generator, trials: int = 100,
                         modes: int = 6) -> dict:
    """Independent check of a weight: random smooth perturbations u with
    |u| < eta and |u'| < eta on the grid keep immersion, pairwise separation
    (|dt| >= h_grid) and the properness proxy."""
    t = curve.grid
    j = curve.jets(t, 1)
    eta = weight(t)
    worst = {"immersion": np.inf, "injectivity": np.inf, "properness": np.inf}
    for _ in range(trials):
        freq = rng.uniform(0.05, 1.0, modes)
        phase = rng.uniform(0, 2 * np.pi, modes)
        amp = rng.normal(size=(modes, curve.n)) + 1j * rng.normal(size=(modes, curve.n))
        u = np.einsum("mk,mn->kn", np.cos(np.outer(freq, t) + phase[:, None]), amp)
        du = np.einsum("mk,mn->kn", -freq[:, None] * np.sin(np.outer(freq, t) + phase[:, None]), amp)
        scale = np.max(np.maximum(np.linalg.norm(u, axis=1), np.linalg.norm(du, axis=1)) / eta)
        shrink = rng.uniform(0.5, 0.99) / scale
        g, dg = j[:, 0, :] + shrink * u, j[:, 1, :] + shrink * du
        worst["immersion"] = min(worst["immersion"], float(np.linalg.norm(dg, axis=1).min()))
        worst["injectivity"] = min(worst["injectivity"], _pairwise_min(g, t, curve.h_grid))
        worst["properness"] = min(worst["properness"], properness_margin(t, np.linalg.norm(g, axis=1), curve.core))
    return worst


# ---------------------------------------------------------------- cutoff

def _smoothstep_series(x0: np.ndarray, order: int) -> np.ndarray:
    """Taylor coefficients of S(x) = e(x)/(e(x)+e(1-x)), e(x) = exp(-1/x)."""
    x0 = np.asarray(x0, float)
    out = np.zeros(x0.shape + (order + 1,))
    # within 2e-3 of either end S is flat to double precision
    out[..., 0] = np.where(x0 >= 0.5, 1.0, 0.0)
    mid = (x0 > 2e-3) & (x0 < 1 - 2e-3)
    if mid.any():
        xs = ser.variable(x0[mid], order)
        a = ser.exp(-ser.reciprocal(xs))
        one_minus = -xs
        one_minus[..., 0] += 1.0
        b = ser.exp(-ser.reciprocal(one_minus))
        out[mid] = ser.div(a, a + b)
    return out


@dataclass(frozen=True)
class Cutoff:
    """chi = 1 on [-inner, inner], 0 outside [-outer, outer], smooth between."""

    inner: float
    outer: float
    r: int

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")

    @property
    def width(self) -> float:
        return self.outer - self.inner

    def derivatives(self, t, order: int | None = None) -> np.ndarray:
        order = self.r if order is None else order
        t = np.atleast_1d(np.asarray(t, float))
        x = (self.outer - np.abs(t)) / self.width
        s = ser.to_derivatives(_smoothstep_series(x, order))
        sign = np.where(t >= 0, -1.0, 1.0) / self.width
        return s * sign[:, None] ** np.arange(order + 1)

    def __call__(self, t) -> np.ndarray:
        return self.derivatives(t, 0)[:, 0]

    @property
    def constant(self) -> float:
        return cutoff_constant(self.r, self.width)


def cutoff_constant(r: int, width: float = 1.0, samples: int = 20001) -> float:
    """C_r = 1.01 * sum_s binom(r, s) max |chi^(s)| for a transition of the given width."""
    c = Cutoff(1.0, 1.0 + width, r)
    t = np.linspace(1.0, 1.0 + width, samples)
    d = np.abs(c.derivatives(t, r)).max(axis=0)
    return 1.01 * float(sum(comb(r, s) * d[s] for s in range(r + 1)))


def cr_norm(d: np.ndarray) -> float:
    """max over s of sup |h^(s)| for a derivative table (M, r+1[, n])."""
    d = np.abs(d)
    if d.ndim == 3:
        d = np.linalg.norm(np.asarray(d), axis=-1)
    return float(d.max())


# ---------------------------------------------------------------- blends

def blend(f_jets: Callable, lam: JetCurve, cutoff: Cutoff) -> JetCurve:
    """lambda_hat = chi f + (1 - chi) lambda, exact on the inner interval and
    off the outer one.  ``f_jets(t, order)`` returns (M, order+1, n)."""

    def evaluator(t, order):
        lj = lam.jets(t, order)
        out = lj.copy()
        a = np.abs(t)
        inner = a <= cutoff.inner
        mid = (a > cutoff.inner) & (a < cutoff.outer)
        if inner.any():
            out[inner] = f_jets(t[inner], order)
        if mid.any():
            fj = f_jets(t[mid], order)
            chi = cutoff.derivatives(t[mid], order)
            diff = fj - lj[mid]
            for s in range(order + 1):
                acc = lj[mid, s, :].copy()
                for q in range(s + 1):
                    acc = acc + comb(s, q) * chi[:, q, None] * diff[:, s - q, :]
                out[mid, s, :] = acc
        return out

    return lam.with_evaluator(evaluator)


def bump(t: np.ndarray, lo: float, hi: float, order: int) -> np.ndarray:
    """Smooth bump supported in [lo, hi], equal to 1 on the middle half."""
    ramp = (hi - lo) / 4
    mid = 0.5 * (lo + hi)
    c = Cutoff(ramp, 2 * ramp, order)
    return c.derivatives(np.asarray(t, float) - mid, order)


@dataclass(frozen=True)
class PushResult:
    curve: JetCurve
    margin: float
    pushed: bool
    attempts: int


def transversal_push_off(curve: JetCurve, forbidden: np.ndarray, band: list, step: float,
                         rng: np.random.Generator, tangency: list = (), v_radius: float = 0.1,
                         retries: int = 64, grid: np.ndarray | None = None) -> PushResult:
    """Push the curve off sampled forbidden points on the band intervals.

    Offsets are random complex vectors in coordinates 2..n carried by smooth
    bumps inside each band interval (minus a v_radius neighborhood of the
    tangency parameters), scaled to have C^r norm <= step.
    """
    pieces = []
    for lo, hi in band:
        cuts = sorted(p for p in tangency if lo - v_radius < p < hi + v_radius)
        edges = [lo]
        for p in cuts:
            edges += [p - v_radius, p + v_radius]
        edges.append(hi)
        for a, b in zip(edges[::2], edges[1::2]):
            if b > a:
                pieces.append((a, b))
    forbidden = np.asarray(forbidden, complex).reshape(-1, curve.n)
    if not pieces or len(forbidden) == 0:
        return PushResult(curve, np.inf, False, 0)
    base_t = grid if grid is not None else curve.grid
    t = np.concatenate([base_t[(base_t >= a) & (base_t <= b)] for a, b in pieces])
    if t.size == 0:
        return PushResult(curve, np.inf, False, 0)

    def margin(points):
        best = np.inf
        for lo in range(0, len(points), 256):
            d = np.linalg.norm(points[lo : lo + 256, None, :] - forbidden[None, :, :], axis=-1)
            best = min(best, float(d.min()))
        return best

    m0 = margin(curve(t))
    if m0 > step:
        return PushResult(curve, m0, False, 0)
    r = curve.r
    norms = [cr_norm(bump(np.linspace(a, b, 2001), a, b, r)) for a, b in pieces]
    best = (m0, None)
    for attempt in range(1, retries + 1):
        vecs = []
        for k in range(len(pieces)):
            v = np.zeros(curve.n, complex)
            v[1:] = rng.normal(size=curve.n - 1) + 1j * rng.normal(size=curve.n - 1)
            vecs.append(v / np.linalg.norm(v) * step / norms[k])

        def evaluator(tt, order, vecs=vecs):
            out = curve.jets(tt, order)
            for (a, b), v in zip(pieces, vecs):
                inside = (tt > a) & (tt < b)
                if inside.any():
                    out[inside] += bump(tt[inside], a, b, order)[:, :, None] * v
            return out

        cand = curve.with_evaluator(evaluator)
        m = margin(cand(t))
        if m > best[0]:
            best = (m, cand)
        if m >= step / 4:
            return PushResult(cand, m, True, attempt)
    raise CurveError(f"push-off failed after {retries} retries; best margin {best[0]:.3g}")


# ---------------------------------------------------------------- mollify

def mollify(curve: JetCurve, weight: Weight, width: float = 0.5, max_halvings: int = 40) -> JetCurve:
    """Smooth every piecewise-polynomial junction with a tanh blend; smooth
    descriptors are returned unchanged."""
    desc = curve.descriptor
    if desc is None:
        return curve
    kinds = {term["kind"] for terms in desc["coordinates"] for term in terms}
    if "piecewise_poly" not in kinds:
        return curve
    t = curve.grid
    ref = curve.jets(t, curve.r)
    tol = weight(t) / 4
    for _ in range(max_halvings):
        new = json.loads(json.dumps(desc))
        for terms in new["coordinates"]:
            for term in terms:
                if term["kind"] == "piecewise_poly":
                    term["kind"] = "smooth_join"
                    term["width"] = width
        cand = curve_from_descriptor(new, curve.h_grid, check=False)
        dev = np.linalg.norm(cand.jets(t, curve.r) - ref, axis=-1).max(axis=1)
        if np.all(dev < tol):
            return cand
        width /= 2
    raise CurveError("mollify did not reach weight/4")


# ---------------------------------------------------------------- seed offset

def seed_offset_expr(tangency, r: int) -> sp.Expr:
    """w(t) = prod_j s_j(t)^(r+1) / (1 + t^2) with s_j = (t - t_j) / sqrt(1 + (t - t_j)^2):
    bounded by 1, vanishing to order r+1 at each tangency parameter."""
    w = 1 / (1 + _T**2)
    for tj in tangency:
        u = _T - sp.Float(tj)
        w = w * (u / sp.sqrt(1 + u**2)) ** (r + 1)
    return w


def with_seed_offset(curve: JetCurve, tangency, gain: float, coordinate: int = 1) -> JetCurve:
    """curve + i * gain * w(t) e_coordinate, with w from ``seed_offset_expr``."""
    w = seed_offset_expr(tangency, curve.r)
    fns = [sp.lambdify(_T, sp.diff(w, _T, s), modules="numpy") for s in range(curve.r + 1)]

    def evaluator(t, order):
        out = curve.jets(t, order).copy()
        for s in range(order + 1):
            f = fns[s] if s < len(fns) else sp.lambdify(_T, sp.diff(w, _T, s), modules="numpy")
            out[:, s, coordinate] += 1j * gain * np.broadcast_to(np.asarray(f(t), float), t.shape)
        return out

    return curve.with_evaluator(evaluator)
