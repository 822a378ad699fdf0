"""Shear automorphisms of C^n, words of shears, and their real-line jets.

A shear is z -> z + g(z_p) v with v_p = 0, so z_p is untouched and the
inverse is z -> z - g(z_p) v.  Words are stored in application order: the
first letter acts first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from . import series as ser

_CHUNK = 4096


def _cplx_to_json(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {"shape": list(a.shape), "re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()}


def _cplx_from_json(d) -> np.ndarray:
    # assign parts separately: re + 1j * im turns -0.0 into 0.0
    out = np.empty(len(d["re"]), dtype=complex)
    out.real = d["re"]
    out.imag = d["im"]
    return out.reshape(d["shape"])


@dataclass(frozen=True)
class ScalarFn:
    """Entire function exp(-beta (z-c)^2) * (herm(x) + prod (z - root_i)^mult_i * arn(x)),
    x = (z - c)/scale, with arn expanded in a Vandermonde-with-Arnoldi basis.

    ``hess`` is the (N+1) x N Hessenberg matrix of the basis and ``coef`` the
    N+1 basis coefficients.  beta = 0 gives a plain polynomial.
    """

    center: complex = 0j
    scale: float = 1.0
    beta: float = 0.0
    herm: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    roots: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    mult: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    hess: np.ndarray = field(default_factory=lambda: np.zeros((1, 0), complex))
    coef: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    @staticmethod
    def zero() -> "ScalarFn":
        return ScalarFn()

    @staticmethod
    def poly(coeffs, center: complex = 0j) -> "ScalarFn":
        """Plain polynomial sum c_j (z - center)^j."""
        return ScalarFn(center=complex(center), herm=np.asarray(coeffs, dtype=complex))

    @property
    def degree(self) -> int:
        d_h = len(self.herm) - 1
        d_a = (len(self.coef) - 1 + int(np.sum(self.mult))) if len(self.coef) else -1
        return max(d_h, d_a, 0)

    def is_zero(self) -> bool:
        return not np.any(self.herm) and not np.any(self.coef)

    def scaled(self, factor: complex) -> "ScalarFn":
        return ScalarFn(self.center, self.scale, self.beta, self.herm * factor,
                        self.roots, self.mult, self.hess, self.coef * factor)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return self.taylor(z, 0)[..., 0]

    def derivatives(self, z, order: int) -> np.ndarray:
        return ser.to_derivatives(self.taylor(np.asarray(z, dtype=complex), order))

    def taylor(self, z0, order: int) -> np.ndarray:
        """Normalized Taylor coefficients g^(j)(z0)/j!, j <= order."""
        z0 = np.asarray(z0, dtype=complex)
        flat = z0.ravel()
        out = np.zeros((flat.size, order + 1), complex)
        for lo in range(0, flat.size, _CHUNK):
            out[lo : lo + _CHUNK] = self._taylor_chunk(flat[lo : lo + _CHUNK], order)
        return out.reshape(z0.shape + (order + 1,))

    def _taylor_chunk(self, z0: np.ndarray, m: int) -> np.ndarray:
        with np.errstate(all="ignore"):
            x = ser.variable((z0 - self.center) / self.scale, m)
            if m >= 1:
                x[:, 1] = 1.0 / self.scale
            total = np.zeros((z0.size, m + 1), complex)
            if len(self.herm):
                acc = np.zeros_like(total)
                for c in self.herm[::-1]:
                    acc = ser.mul(acc, x)
                    acc[:, 0] += c
                total = total + acc
            if len(self.coef) and np.any(self.coef):
                acc = self._arnoldi_series(x) 
                for root, k in zip(self.roots, self.mult):
                    acc = ser.mul(acc, ser.power(ser.variable(z0 - root, m), int(k)))
                total = total + acc
            if self.beta != 0.0:
                w = ser.variable(z0 - self.center, m)
                g = ser.exp(-self.beta * ser.mul(w, w))
                small = g[:, 0] == 0
                total = ser.mul(total, g)
                total[small] = 0.0
        return total

    def _arnoldi_series(self, x: np.ndarray) -> np.ndarray:
        n = self.hess.shape[1]
        basis = np.zeros((x.shape[0], n + 1, x.shape[1]), complex)
        basis[:, 0, 0] = 1.0
        # recurrence entries below roundoff are skipped (real data gives a
        # numerically tridiagonal Hessenberg matrix)
        mag = np.abs(self.hess)
        for k in range(n):
            col = self.hess[: k + 1, k]
            keep = np.nonzero(mag[: k + 1, k] > 1e-15 * mag[: k + 2, k].max())[0]
            w = ser.mul(x, basis[:, k, :])
            for j in keep:
                w -= col[j] * basis[:, j, :]
            basis[:, k + 1, :] = w / self.hess[k + 1, k]
        return np.einsum("pjs,j->ps", basis, self.coef)

    def disk_max(self, radius: float, center: complex = 0j) -> float:
        """Upper estimate of max |g| on the closed disk (maximum principle on a
        dense circle sample, inflated for the gaps between samples)."""
        if self.is_zero():
            return 0.0
        eff = self.degree + 2 * self.beta * (abs(center - self.center) + radius) ** 2 + 8
        m = int(min(2e5, max(256, 8 * eff)))
        theta = 2 * np.pi * np.arange(m) / m
        with np.errstate(all="ignore"):
            vals = np.abs(self(center + radius * np.exp(1j * theta)))
        peak = float(np.max(vals)) if np.all(np.isfinite(vals)) else np.inf
        return peak / np.cos(np.pi * min(eff, m / 3) / m)

    def to_json(self) -> dict:
        return {
            "center": [self.center.real, self.center.imag],
            "scale": self.scale,
            "beta": self.beta,
            "herm": _cplx_to_json(self.herm),
            "roots": _cplx_to_json(self.roots),
            "mult": [int(k) for k in self.mult],
            "hess": _cplx_to_json(self.hess),
            "coef": _cplx_to_json(self.coef),
        }

    @staticmethod
    def from_json(d: dict) -> "ScalarFn":
        return ScalarFn(
            center=complex(d["center"][0], d["center"][1]),
            scale=float(d["scale"]),
            beta=float(d["beta"]),
            herm=_cplx_from_json(d["herm"]),
            roots=_cplx_from_json(d["roots"]),
            mult=np.array(d["mult"], dtype=int),
            hess=_cplx_from_json(d["hess"]),
            coef=_cplx_from_json(d["coef"]),
        )


@dataclass(frozen=True)
class Shear:
    """z -> z + fn(z[proj]) * direction; requires direction[proj] == 0."""

    direction: np.ndarray
    fn: ScalarFn
    proj: int = 0

    def __post_init__(self):
        v = np.asarray(self.direction, dtype=complex)
        if v[self.proj] != 0:
            raise ValueError("shear direction must be annihilated by its projection")
        object.__setattr__(self, "direction", v)

    @property
    def n(self) -> int:
        return len(self.direction)

    def apply(self, z: np.ndarray, inverse: bool = False) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        sign = -1.0 if inverse else 1.0
        with np.errstate(all="ignore"):
            return z + sign * self.fn(z[..., self.proj])[..., None] * self.direction


@dataclass(frozen=True)
class Letter:
    shear: Shear
    inverse: bool = False
    provenance: str = ""


@dataclass(frozen=True)
class RealJetTable:
    """Derivatives W^(s)(t) for s <= r at real parameters t; shape (M, r+1, n)."""

    t: np.ndarray
    jets: np.ndarray

    @property
    def r(self) -> int:
        return self.jets.shape[1] - 1

    def values(self) -> np.ndarray:
        return self.jets[:, 0, :]


@dataclass(frozen=True)
class AutoWord:
    n: int
    letters: tuple = ()

    @staticmethod
    def identity(n: int) -> "AutoWord":
        return AutoWord(n, ())

    @staticmethod
    def of(shear: Shear, provenance: str = "") -> "AutoWord":
        return AutoWord(shear.n, (Letter(shear, False, provenance),))

    def is_empty(self) -> bool:
        return len(self.letters) == 0

    def __len__(self) -> int:
        return len(self.letters)

    def then(self, other: "AutoWord") -> "AutoWord":
        """other o self (self acts first)."""
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        return AutoWord(self.n, self.letters + other.letters)

    def after(self, other: "AutoWord") -> "AutoWord":
        """self o other."""
        return other.then(self)

    def inverse(self) -> "AutoWord":
        return AutoWord(self.n, tuple(Letter(l.shear, not l.inverse, l.provenance) for l in reversed(self.letters)))

    def __call__(self, z) -> np.ndarray:
        return self.eval(z)

    def eval(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if z.shape[-1] != self.n:
            raise ValueError("point dimension does not match word")
        for letter in self.letters:
            z = letter.shear.apply(z, letter.inverse)
        return z

    def push_series(self, zs: np.ndarray) -> np.ndarray:
        """Push a curve series (M, n, m+1) through the word (exact chain rule)."""
        zs = np.array(zs, dtype=complex)
        m = zs.shape[-1] - 1
        with np.errstate(all="ignore"):
            for letter in self.letters:
                sh = letter.shear
                u = zs[:, sh.proj, :]
                g = ser.compose(sh.fn.taylor(u[:, 0], m), u)
                sign = -1.0 if letter.inverse else 1.0
                zs = zs + sign * sh.direction[None, :, None] * g[:, None, :]
        return zs

    def real_jet(self, t, r: int, init: RealJetTable | None = None) -> RealJetTable:
        """Jets of t -> W(c(t)); c is the real embedding t -> (t, 0, ..., 0)
        unless an initial jet table is supplied."""
        t = np.asarray(t, dtype=float)
        if init is None:
            zs = np.zeros((t.size, self.n, r + 1), complex)
            zs[:, 0, 0] = t
            if r >= 1:
                zs[:, 0, 1] = 1.0
        else:
            zs = ser.from_derivatives(np.swapaxes(init.jets[:, : r + 1, :], 1, 2))
        out = self.push_series(zs)
        return RealJetTable(t, np.swapaxes(ser.to_derivatives(out), 1, 2))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "letters": [
                {
                    "direction": _cplx_to_json(l.shear.direction),
                    "proj": l.shear.proj,
                    "inverse": l.inverse,
                    "provenance": l.provenance,
                    "fn": l.shear.fn.to_json(),
                }
                for l in self.letters
            ],
        }

    @staticmethod
    def from_json(d: dict) -> "AutoWord":
        letters = tuple(
            Letter(Shear(_cplx_from_json(e["direction"]), ScalarFn.from_json(e["fn"]), int(e["proj"])),
                   bool(e["inverse"]), e["provenance"])
            for e in d["letters"]
        )
        return AutoWord(int(d["n"]), letters)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @staticmethod
    def loads(text: str) -> "AutoWord":
        return AutoWord.from_json(json.loads(text))


def compose_all(n: int, words) -> AutoWord:
    """Composition in application order: words[0] acts first."""
    out = AutoWord.identity(n)
    for w in words:
        out = out.then(w)
    return out


@dataclass(frozen=True)
class AdditiveForm:
    """z -> z + sum_j g_j(z_1) v_j for a word of z_1-preserving shears."""

    n: int
    terms: tuple  # (ScalarFn, direction with sign folded in)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = z.copy()
        for fn, v in self.terms:
            out = out + fn(z[..., 0])[..., None] * v
        return out

    def as_word(self) -> AutoWord:
        return AutoWord(self.n, tuple(Letter(Shear(v, fn, 0)) for fn, v in self.terms))


def additive_form(word) -> AdditiveForm:
    if isinstance(word, AdditiveForm):
        return AdditiveForm(word.n, tuple(word.terms))
    terms = []
    for l in word.letters:
        if l.shear.proj != 0:
            raise ValueError("additive form needs every letter to preserve z_1")
        sign = -1.0 if l.inverse else 1.0
        terms.append((l.shear.fn, sign * l.shear.direction))
    return AdditiveForm(word.n, tuple(terms))


def epsilon_tail(eps, k: int, m: int) -> float:
    """sum_{j=k+1}^{m} eps_j for the 1-based tolerance list eps."""
    return float(sum(eps[k:m]))


def tail_bound(word: AutoWord, radius: float) -> float:
    """Upper bound for max |W(z) - z| over |z| <= radius.

    Each coordinate's reachable radius is tracked letter by letter, so letters
    that never move their projection coordinate keep the bound tight.
    """
    reach = np.full(word.n, float(radius))
    total = np.zeros(word.n)
    for l in word.letters:
        sh = l.shear
        m = sh.fn.disk_max(reach[sh.proj])
        step = np.abs(sh.direction) * m
        total += step
        reach += step
    return float(np.linalg.norm(total))
