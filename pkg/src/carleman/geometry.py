"""Compact scenes, hull proxies along the embedded line, clearance and
randomized generic directions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .shears import AutoWord, ScalarFn


def composite_grid(lo: float, hi: float, h: float, dense: float = 40.0, far: int = 400,
                   offset: float = 0.0) -> np.ndarray:
    """Uniform spacing h on [-dense, dense] intersected with [lo, hi], plus
    geometrically spaced points out to the ends of long intervals; ``offset``
    (a fraction of h) shifts the uniform part to build held-out grids."""
    a, b = max(lo, -dense), min(hi, dense)
    parts = [np.array([lo, hi], float)]
    if b > a:
        m = max(int(np.ceil((b - a) / h)), 1)
        u = np.linspace(a, b, m + 1)
        if offset:
            u = (u[:-1] + offset * (b - a) / m)
        parts.append(u)
    for sign, end in ((1, hi), (-1, lo)):
        start = dense if sign > 0 else -dense
        if sign * (end - start) > 0:
            g = np.geomspace(1.0, 1.0 + abs(end - start), far + 1)[1:] - 1.0
            if offset:
                g = g * (1 - 0.5 * offset / far)
            parts.append(start + sign * g)
    return np.unique(np.concatenate(parts))


def _realify(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, complex)
    return np.concatenate([z.real, z.imag], axis=-1)


def clearance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum Euclidean distance between two point clouds in C^n."""
    a = np.asarray(a, complex).reshape(-1, np.shape(a)[-1])
    b = np.asarray(b, complex).reshape(-1, np.shape(b)[-1])
    a = a[np.all(np.isfinite(a), axis=1)]
    b = b[np.all(np.isfinite(b), axis=1)]
    if len(a) == 0 or len(b) == 0:
        return np.inf
    tree = cKDTree(_realify(b))
    d, _ = tree.query(_realify(a), k=1)
    return float(np.min(d))


@dataclass(frozen=True)
class ClearanceWitness:
    distance: float
    point: np.ndarray
    witness: np.ndarray


def scene_clearance(points: np.ndarray, scene: "CompactScene") -> ClearanceWitness:
    """Min distance from points to the scene with a witness pair: exact for
    Ball primitives, sampled for the scene's sample cloud, 0 for points any
    primitive contains."""
    p = np.asarray(points, complex).reshape(-1, scene.n)
    best = ClearanceWitness(np.inf, np.full(scene.n, np.nan, complex), np.full(scene.n, np.nan, complex))
    inside = scene.contains(p)
    if inside.any():
        i = int(np.argmax(inside))
        return ClearanceWitness(0.0, p[i], p[i])
    for prim in scene.primitives:
        if isinstance(prim, Ball):
            c = np.asarray(prim.center, complex) if prim.center else np.zeros(scene.n, complex)
            off = p - c
            d = np.linalg.norm(off, axis=1)
            i = int(np.argmin(d))
            if d[i] - prim.radius < best.distance:
                best = ClearanceWitness(float(d[i] - prim.radius), p[i], c + prim.radius * off[i] / d[i])
    cloud = scene.samples()
    if len(cloud):
        tree = cKDTree(_realify(cloud))
        d, j = tree.query(_realify(p), k=1)
        i = int(np.argmin(d))
        if d[i] < best.distance:
            best = ClearanceWitness(float(d[i]), p[i], cloud[j[i]])
    return best


def nearest_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    tree = cKDTree(_realify(np.asarray(b, complex)))
    d, _ = tree.query(_realify(np.asarray(a, complex)), k=1)
    return d


def ball_samples(n: int, radius: float, count: int, rng: np.random.Generator,
                 center=None) -> np.ndarray:
    """Points on the sphere and spread through the ball (half each)."""
    g = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = np.ones(count)
    rad[count // 2 :] = rng.uniform(0, 1, count - count // 2) ** (1 / (2 * n))
    pts = radius * rad[:, None] * g
    if center is not None:
        pts = pts + np.asarray(center, complex)
    return pts


@dataclass(frozen=True)
class Ball:
    radius: float
    center: tuple = ()

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, complex)
        c = np.asarray(self.center, complex) if self.center else 0.0
        with np.errstate(invalid="ignore"):
            return np.linalg.norm(z - c, axis=-1) <= self.radius


@dataclass(frozen=True)
class WordBall:
    """Preimage {z : |W(z)| <= radius}."""

    word: AutoWord
    radius: float

    def contains(self, z: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            w = self.word.eval(z)
            return np.linalg.norm(w, axis=-1) <= self.radius


@dataclass(frozen=True)
class CompactScene:
    """Union of primitives with membership predicates and samples."""

    n: int
    primitives: tuple = ()
    sample_points: np.ndarray | None = field(default=None, compare=False)

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, complex)
        out = np.zeros(z.shape[:-1], bool)
        for p in self.primitives:
            out |= p.contains(z)
        return out

    def union(self, other: "CompactScene") -> "CompactScene":
        pts = [p for p in (self.sample_points, other.sample_points) if p is not None]
        return CompactScene(self.n, self.primitives + other.primitives,
                            np.concatenate(pts) if pts else None)

    def samples(self) -> np.ndarray:
        return np.zeros((0, self.n), complex) if self.sample_points is None else self.sample_points


def absorb_bounded(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Fill the bounded components of the complement (4-connected) of a
    boolean grid mask; returns the filled mask and the number absorbed."""
    comp, count = ndimage.label(~mask)
    border = np.unique(np.concatenate([comp[0, :], comp[-1, :], comp[:, 0], comp[:, -1]]))
    bounded = [k for k in range(1, count + 1) if k not in set(border.tolist())]
    filled = mask.copy()
    if bounded:
        filled |= np.isin(comp, bounded)
    return filled, len(bounded)


@dataclass(frozen=True)
class HullProxy:
    """Hull of B(R) U f(Delta U I0) for an embedded line f = word o iota.

    Membership of on-curve points is decided on the parameter mask; off-curve
    points are members iff they lie in the ball.
    """

    word: AutoWord
    radius: float
    xs: np.ndarray
    ys: np.ndarray
    mask: np.ndarray
    absorbed: int
    thin_warning: bool = False
    disks: tuple = ()
    intervals: tuple = ()

    @property
    def n(self) -> int:
        return self.word.n

    @property
    def cell(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def parameter_member(self, zeta: np.ndarray) -> np.ndarray:
        zeta = np.asarray(zeta, complex)
        ix = np.rint((zeta.real - self.xs[0]) / self.cell).astype(int)
        iy = np.rint((zeta.imag - self.ys[0]) / self.cell).astype(int)
        ok = (ix >= 0) & (ix < len(self.xs)) & (iy >= 0) & (iy < len(self.ys))
        out = np.zeros(zeta.shape, bool)
        out[ok] = self.mask[iy[ok], ix[ok]]
        return out

    def contains(self, z: np.ndarray, on_curve_tol: float = 1e-9) -> np.ndarray:
        z = np.asarray(z, complex)
        with np.errstate(all="ignore"):
            pre = self.word.inverse().eval(z)
            inball = np.linalg.norm(z, axis=-1) <= self.radius
        on = np.linalg.norm(pre[..., 1:], axis=-1) <= on_curve_tol * (1 + np.linalg.norm(z, axis=-1))
        out = inball.copy()
        out[on] |= self.parameter_member(pre[..., 0][on])
        return out

    def parameter_cells(self) -> np.ndarray:
        yy, xx = np.nonzero(self.mask)
        return self.xs[xx] + 1j * self.ys[yy]

    def curve_samples(self, max_points: int = 20000) -> np.ndarray:
        zeta = self.parameter_cells()
        if len(zeta) > max_points:
            zeta = zeta[np.linspace(0, len(zeta) - 1, max_points).astype(int)]
        pts = np.zeros((len(zeta), self.n), complex)
        pts[:, 0] = zeta
        with np.errstate(all="ignore"):
            return self.word.eval(pts)

    def samples(self, rng: np.random.Generator, ball_points: int = 2000) -> np.ndarray:
        cur = self.curve_samples()
        cur = cur[np.all(np.isfinite(cur), axis=1)]
        return np.concatenate([cur, ball_samples(self.n, self.radius, ball_points, rng)])

    def max_modulus(self) -> float:
        cur = self.curve_samples(200000)
        with np.errstate(invalid="ignore"):
            m = np.linalg.norm(cur, axis=1)
        m = m[np.isfinite(m)]
        return float(max(self.radius, m.max() if m.size else 0.0))

    def z1_extent(self) -> float:
        zeta = self.parameter_cells()
        return float(max(self.radius, np.abs(zeta).max() if zeta.size else 0.0))

    def mask_text(self) -> str:
        return "\n".join("".join("1" if v else "0" for v in row) for row in self.mask[::-1]) + "\n"


def hull_on_curve(word: AutoWord, radius: float, disks: tuple = (), intervals: tuple = (),
                  half_width: float | None = None, cells: int = 401, extra_mask=None) -> HullProxy:
    """Parameter-plane hull proxy: pull the ball back, add the disks |zeta|<=rho
    and real intervals, then absorb bounded complementary components."""
    reach = [radius] + list(disks) + [max(abs(a), abs(b)) for a, b in intervals]
    half_width = half_width or 1.1 * max(reach) + 1.0
    for _ in range(8):
        m = cells // 2
        cell = half_width / m
        axis = np.arange(-m, m + 1) * cell
        zeta = axis[None, :] + 1j * axis[:, None]
        pts = np.zeros(zeta.shape + (word.n,), complex)
        pts[..., 0] = zeta
        with np.errstate(all="ignore"):
            img = word.eval(pts)
            mask = np.linalg.norm(img, axis=-1) <= radius
        for rho in disks:
            mask |= np.abs(zeta) <= rho
        for a, b in intervals:
            row = (axis >= a - 0.5 * cell) & (axis <= b + 0.5 * cell)
            mask[m, row] = True
        if extra_mask is not None:
            mask |= extra_mask(zeta)
        edge = mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any()
        if not edge:
            break
        half_width *= 2
    filled, absorbed = absorb_bounded(mask)
    # complement pieces only one cell thick cannot be resolved at this grid
    comp = ~filled
    thin = bool(comp.any() and not ndimage.binary_erosion(comp, border_value=1).any())
    return HullProxy(word, radius, axis.copy(), axis.copy(), filled, absorbed, thin, tuple(disks), tuple(intervals))


def regular_radius(z1: np.ndarray, t: np.ndarray, centers, candidates, threshold: float = 1e-4) -> float:
    """First rho in ``candidates`` such that rho^2 is a regular value of
    mu_j(t) = |z1(t) - c_j|^2 on the grid: wherever mu_j crosses or comes
    within ``threshold`` of rho^2, |d mu_j / dt| >= threshold."""
    z1 = np.asarray(z1, complex)
    t = np.asarray(t, float)
    keep = np.isfinite(z1)
    z1, t = z1[keep], t[keep]
    for rho in candidates:
        ok = True
        for c in centers:
            mu = np.abs(z1 - c) ** 2
            dmu = np.gradient(mu, t)
            gap = mu - rho**2
            cross = np.nonzero(np.sign(gap[:-1]) != np.sign(gap[1:]))[0]
            near = np.concatenate([cross, cross + 1, np.nonzero(np.abs(gap) < threshold)[0]])
            if near.size and np.min(np.abs(dmu[near])) < threshold:
                ok = False
                break
        if ok:
            return float(rho)
    raise ValueError(f"no regular value among radii {list(candidates)}")


@dataclass(frozen=True)
class DirectionResult:
    alpha: np.ndarray
    clearance: float
    attempts: int


def surface_clearance(fn: ScalarFn, alpha: np.ndarray, curve_points: np.ndarray, centers, rho: float,
                      region: float = np.inf) -> float:
    """Lower bound for dist(curve points, {(z, fn(z) alpha)}) over curve points
    whose first coordinate lies outside the disks of radius rho around
    ``centers`` and within |z_1| <= region.

    For a point p with vertical gap g = |p' - fn(p_1) alpha|, any graph point
    at horizontal offset s <= g is at distance >= sqrt(s^2 + (g - L s)^2) where
    L bounds |fn' alpha| on the disk D(p_1, g); the minimum over s is
    g / sqrt(1 + L^2).  L is sampled on nine points of that disk with a 1.5
    safety factor.
    """
    p = np.asarray(curve_points, complex)
    keep = np.all(np.isfinite(p), axis=1) & (np.abs(p[:, 0]) <= region)
    for c in centers:
        keep &= np.abs(p[:, 0] - c) >= rho
    p = p[keep]
    if len(p) == 0:
        return np.inf
    a = np.linalg.norm(alpha)
    gap = np.linalg.norm(p[:, 1:] - fn(p[:, 0])[:, None] * alpha[None, :], axis=1)
    ring = np.concatenate([[0.0], np.exp(2j * np.pi * np.arange(8) / 8)])
    probe = p[:, 0][:, None] + gap[:, None] * ring[None, :]
    with np.errstate(all="ignore"):
        d1 = np.abs(fn.derivatives(probe.ravel(), 1)[:, 1]).reshape(probe.shape)
    lip = 1.5 * a * np.nan_to_num(d1, nan=np.inf).max(axis=1)
    return float(np.min(gap / np.sqrt(1 + lip**2)))


def generic_direction(fn: ScalarFn, curve_points: np.ndarray, centers, rho: float, region: float,
                      magnitude: float, rng: np.random.Generator, retries: int = 64,
                      threshold: float = 0.0) -> DirectionResult:
    """Random alpha in C^(n-1) with |alpha| from a halving schedule starting at
    ``magnitude`` such that the surface {(z, fn(z) alpha)} clears the curve."""
    n = np.shape(curve_points)[1]
    best = DirectionResult(np.zeros(n - 1, complex), -np.inf, 0)
    for k in range(retries):
        u = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
        alpha = u / np.linalg.norm(u) * magnitude * 0.5 ** (k // 8)
        c = surface_clearance(fn, alpha, curve_points, centers, rho, region)
        if c > best.clearance:
            best = DirectionResult(alpha, c, k + 1)
        if c > threshold:
            return DirectionResult(alpha, c, k + 1)
    raise RuntimeError(f"no generic direction after {retries} draws; best clearance {best.clearance:.3g}")
