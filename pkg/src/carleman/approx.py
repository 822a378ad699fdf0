"""Constrained polynomial fitting and the escape target profile."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from scipy import ndimage

from . import series as ser
from .shears import ScalarFn

DEFAULT_DEGREES = (8, 16, 32, 64)


class FitError(RuntimeError):
    """Degree cap reached without meeting the tolerance; ``best`` holds the
    closest fit found."""

    def __init__(self, message: str, best: "ConstrainedPoly"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class TargetProfile:
    """Weighted samples of a scalar target h on a compact set."""

    points: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    @staticmethod
    def join(*parts: "TargetProfile") -> "TargetProfile":
        return TargetProfile(
            np.concatenate([p.points for p in parts]).astype(complex),
            np.concatenate([p.values for p in parts]).astype(complex),
            np.concatenate([p.weights for p in parts]).astype(float),
        )


@dataclass(frozen=True)
class JetConstraint:
    """g^(s)(node) = derivs[s] for s <= len(derivs) - 1."""

    node: complex
    derivs: np.ndarray


@dataclass(frozen=True)
class ConstrainedPoly:
    fn: ScalarFn
    degree: int
    error: float
    converged: bool
    history: tuple = ()


def arnoldi(x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Vandermonde-with-Arnoldi: basis Q (orthogonal columns scaled by sqrt(M))
    on the samples and the Hessenberg recurrence H."""
    m = len(x)
    q = np.zeros((m, n + 1), complex)
    h = np.zeros((n + 1, n), complex)
    q[:, 0] = 1.0
    for k in range(n):
        v = x * q[:, k]
        for j in range(k + 1):
            h[j, k] = np.vdot(q[:, j], v) / m
            v = v - h[j, k] * q[:, j]
        # one reorthogonalization pass keeps the basis clean at degree 64
        for j in range(k + 1):
            c = np.vdot(q[:, j], v) / m
            h[j, k] += c
            v = v - c * q[:, j]
        h[k + 1, k] = np.linalg.norm(v) / np.sqrt(m)
        q[:, k + 1] = v / h[k + 1, k]
    return h, q


def hermite_monomial(nodes, jets, center: complex, scale: float) -> np.ndarray:
    """Coefficients a_k of sum a_k x^k, x = (z - center)/scale, matching the
    normalized Taylor coefficients ``jets[i]`` at ``nodes[i]``."""
    rows, rhs = [], []
    total = sum(len(j) for j in jets)
    for z, jet in zip(nodes, jets):
        x = (z - center) / scale
        for s, value in enumerate(jet):
            row = np.zeros(total, complex)
            for k in range(s, total):
                row[k] = comb(k, s) * x ** (k - s) / scale**s
            rows.append(row)
            rhs.append(value)
    if not rows:
        return np.zeros(0, complex)
    return np.linalg.solve(np.array(rows), np.array(rhs, dtype=complex))


def _gauss(z, center, beta, order=0):
    w = ser.variable(np.asarray(z, complex) - center, order)
    return ser.exp(-beta * ser.mul(w, w))


def fit(profile: TargetProfile, *, tol: float, degrees=DEFAULT_DEGREES, beta: float = 0.0,
        jets: tuple = (), zeros: tuple = (), zero_order: int = 0, lawson: int = 0,
        strict: bool = True, center: complex | None = None, scale: float | None = None,
        ) -> ConstrainedPoly:
    """Least-squares fit g = exp(-beta (z-c)^2) (herm + W q) to the profile.

    ``jets`` prescribe derivatives at nodes exactly (Hermite part), ``zeros``
    are nodes where g vanishes to order ``zero_order`` (factor W).  The basis
    size of q escalates through ``degrees`` until the weighted-sample sup error
    is below ``tol``.  ``lawson`` > 0 runs iteratively reweighted least squares
    toward the minimax fit.
    """
    pts = np.asarray(profile.points, complex)
    vals = np.asarray(profile.values, complex)
    wts = np.asarray(profile.weights, float)
    if center is None:
        center = complex(0.5 * (pts.real.min() + pts.real.max()), 0.5 * (pts.imag.min() + pts.imag.max()))
    if scale is None:
        scale = float(max(np.max(np.abs(pts - center)), 1e-12))
    nodes = [complex(j.node) for j in jets] + [complex(z) for z in zeros]
    orders = [len(j.derivs) for j in jets] + [zero_order + 1] * len(zeros)
    herm_jets = []
    for j in jets:
        m = len(j.derivs) - 1
        target = ser.from_derivatives(np.asarray(j.derivs, complex))
        herm_jets.append(ser.div(target, _gauss(j.node, center, beta, m)) if beta else target)
    herm_jets += [np.zeros(zero_order + 1, complex) for _ in zeros]
    herm = hermite_monomial(nodes, herm_jets, center, scale)
    roots = np.array(nodes, complex)
    mult = np.array(orders, int)

    x = (pts - center) / scale
    with np.errstate(all="ignore"):
        g = np.exp(-beta * (pts - center) ** 2) if beta else np.ones(len(pts))
        hx = np.polyval(herm[::-1], x) if len(herm) else np.zeros(len(pts))
        w = np.ones(len(pts), complex)
        for z, k in zip(roots, mult):
            w = w * (pts - z) ** k
    resid_target = vals - g * hx
    col = g * w
    base = ScalarFn(center=center, scale=scale, beta=beta, herm=herm, roots=roots, mult=mult)

    history = []
    best = None
    for n in degrees:
        hess, q = arnoldi(x, n)
        a = col[:, None] * q
        weights = wts.copy()
        coef = None
        for it in range(max(lawson, 0) + 1):
            sw = np.sqrt(weights / weights.sum())
            coef = np.linalg.lstsq(a * sw[:, None], resid_target * sw, rcond=None)[0]
            res = np.abs(a @ coef - resid_target)
            if it < lawson:
                weights = weights * (res + 1e-300)
        fn = ScalarFn(base.center, base.scale, beta, herm, roots, mult, hess, coef)
        # measured on the returned function: replaying the recurrence can lose
        # accuracy that the sample matrix does not show
        with np.errstate(all="ignore"):
            err = float(np.max(np.abs(fn(pts) - vals) * np.minimum(1.0, np.sqrt(wts))))
        if not np.isfinite(err):
            err = np.inf
        cand = ConstrainedPoly(fn, n, err, err < tol, ())
        if best is None or err < best.error:
            best = cand
        history.append((n, best.error))
        if best.error < tol:
            break
    best = ConstrainedPoly(best.fn, best.degree, best.error, best.error < tol, tuple(history))
    if not best.converged and strict:
        raise FitError(f"degree cap {degrees[-1]} reached with error {best.error:.3g} > {tol:.3g}", best)
    return best


@dataclass(frozen=True)
class CauchyMargin:
    error: float
    distance: float
    bounds: np.ndarray
    measured: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.measured <= self.bounds))


def rectangle_boundary(half_width: float, half_height: float, density: float = 200.0) -> np.ndarray:
    nx = max(int(2 * half_width * density), 8)
    ny = max(int(2 * half_height * density), 8)
    xs = np.linspace(-half_width, half_width, nx)
    ys = np.linspace(-half_height, half_height, ny)
    return np.concatenate([xs - 1j * half_height, xs + 1j * half_height,
                           -half_width + 1j * ys, half_width + 1j * ys])


def cauchy_margin(fn: ScalarFn, half_width: float, half_height: float, interval: tuple, r: int,
                  grid: int = 801) -> CauchyMargin:
    """Cauchy bounds s! E / d^s for |g^(s)| on a real interval inside the
    rectangle |Re| <= half_width, |Im| <= half_height, where E = max |g| on the
    rectangle (sampled on its boundary, maximum principle)."""
    lo, hi = interval
    dist = min(half_width - max(abs(lo), abs(hi)), half_height)
    if dist <= 0:
        raise ValueError("interval must lie inside the rectangle")
    err = float(np.max(np.abs(fn(rectangle_boundary(half_width, half_height)))))
    bounds = np.array([factorial(s) * err / dist**s for s in range(r + 1)])
    t = np.linspace(lo, hi, grid)
    d = np.abs(fn.derivatives(t.astype(complex), r))
    return CauchyMargin(err, dist, bounds, d.max(axis=0))


def smoothstep(s: np.ndarray) -> np.ndarray:
    """C-infinity step 0 -> 1 on [0, 1] with all derivatives vanishing at the ends."""
    s = np.clip(np.asarray(s, float), 0.0, 1.0)
    with np.errstate(all="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / s), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / (1.0 - s)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class EscapePath:
    """Polyline from 0 to a point of modulus > R + 1 in a slice plane."""

    nodes: np.ndarray

    def __call__(self, s) -> np.ndarray:
        """Smoothly reparametrized position at s in [0, 1]."""
        u = smoothstep(s)
        seg = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(self.nodes)))])
        length = seg[-1]
        return np.interp(u * length, seg, self.nodes.real) + 1j * np.interp(u * length, seg, self.nodes.imag)

    @property
    def end(self) -> complex:
        return complex(self.nodes[-1])


def find_exit_path(blocked, radius: float, cell: float, clearance: float) -> EscapePath:
    """Path from 0 to |zeta| > radius avoiding ``blocked`` (predicate on complex
    arrays) dilated by ``clearance``.  Straight rays are tried first, then a
    breadth-first search on the grid."""
    extent = radius + 2 * clearance + 2 * cell
    m = int(np.ceil(extent / cell))
    axis = np.arange(-m, m + 1) * cell
    zz = axis[None, :] + 1j * axis[:, None]
    bad = blocked(zz)
    if clearance > 0 and bad.any():
        dist = ndimage.distance_transform_edt(~bad) * cell
        bad = dist <= clearance
    target = radius + 0.5 * (extent - radius)
    for angle in (0.5 * np.pi, -0.5 * np.pi, 0.0, np.pi, 0.25 * np.pi, 0.75 * np.pi, -0.25 * np.pi, -0.75 * np.pi):
        ray = np.exp(1j * angle) * np.linspace(0, target, int(target / cell) * 2 + 2)
        ix = np.rint(ray.real / cell).astype(int) + m
        iy = np.rint(ray.imag / cell).astype(int) + m
        if not bad[iy, ix].any():
            return EscapePath(np.array([0.0, ray[-1]], complex))
    if bad[m, m]:
        raise ValueError("start point is blocked")
    # breadth-first search with parent pointers
    free = ~bad
    parent = -np.ones(free.shape, dtype=np.int64)
    parent[m, m] = m * free.shape[1] + m
    frontier = [(m, m)]
    goal = None
    far = np.abs(zz) > radius
    while frontier and goal is None:
        nxt = []
        for (i, j) in frontier:
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < free.shape[0] and 0 <= b < free.shape[1] and free[a, b] and parent[a, b] < 0:
                    parent[a, b] = i * free.shape[1] + j
                    if far[a, b]:
                        goal = (a, b)
                        break
                    nxt.append((a, b))
            if goal:
                break
        frontier = nxt
    if goal is None:
        raise ValueError("no exit path: slice is blocked")
    path = [goal]
    while path[-1] != (m, m):
        i, j = path[-1]
        p = parent[i, j]
        path.append((p // free.shape[1], p % free.shape[1]))
    path.reverse()
    return EscapePath(np.array([zz[i, j] for i, j in path]))


@dataclass(frozen=True)
class EscapeProfile:
    profile: TargetProfile
    paths: tuple
    half_width: float
    half_height: float
    target: object  # callable h on reals


def escape_profile(blocked_slices, mu: tuple, rho: float, radius: float, delta: float,
                   density: float = 40.0, seg_density: float = 100.0, boundary_weight: float = 2.0,
                   cell: float | None = None) -> EscapeProfile:
    """Target profile for the escape shear.

    ``blocked_slices[j]`` is a predicate on the slice plane over mu[j].  h is 0
    on [mu1 - delta, mu2 + delta] and on the rectangle K, follows the exit
    paths over the ramps of width delta and is constant beyond.
    """
    mu1, mu2 = mu
    cell = cell or max(delta / 4, radius / 400)
    paths = tuple(find_exit_path(b, radius + 1.0, cell, 3 * delta) for b in blocked_slices)
    left, right = paths

    def h(t):
        t = np.asarray(t, float)
        out = np.zeros(t.shape, complex)
        m = (t >= mu1 - 2 * delta) & (t < mu1 - delta)
        out[m] = left((mu1 - delta - t[m]) / delta)
        out[t < mu1 - 2 * delta] = left.end
        m = (t > mu2 + delta) & (t <= mu2 + 2 * delta)
        out[m] = right((t[m] - mu2 - delta) / delta)
        out[t > mu2 + 2 * delta] = right.end
        return out

    half_w = max(abs(mu1), abs(mu2)) + delta / 2
    # rho + delta/2 keeps Delta_rho inside and matches the horizontal margin
    half_h = rho + delta / 2
    # boundary samples bound g inside K by the maximum principle
    rect = rectangle_boundary(half_w, half_h, density)
    # out to radius + 1, the extent over which the escape is certified
    seg = np.linspace(-radius - 1.0, radius + 1.0, max(int(2 * (radius + 1.0) * seg_density), 16))
    profile = TargetProfile.join(
        TargetProfile(rect, np.zeros(len(rect)), np.full(len(rect), boundary_weight)),
        TargetProfile(seg.astype(complex), h(seg), np.ones(len(seg))),
    )
    return EscapeProfile(profile, paths, half_w, half_h, h)
