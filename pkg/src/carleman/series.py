"""Truncated Taylor series arithmetic.

A series of order m is an array whose last axis holds the normalized
coefficients a_0, ..., a_m of sum a_j (x - x0)^j.  All operations broadcast
over the leading axes, which is how jets of many sample points are pushed
through a word at once.
"""
from __future__ import annotations

from math import factorial

import numpy as np


def factorials(order: int) -> np.ndarray:
    return np.array([float(factorial(j)) for j in range(order + 1)])


def from_derivatives(d: np.ndarray) -> np.ndarray:
    """Derivative table (last axis s = 0..m) to normalized coefficients."""
    d = np.asarray(d)
    return d / factorials(d.shape[-1] - 1)


def to_derivatives(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    return a * factorials(a.shape[-1] - 1)


def variable(x0, order: int) -> np.ndarray:
    """The series of the identity map around x0."""
    x0 = np.asarray(x0)
    out = np.zeros(x0.shape + (order + 1,), dtype=np.result_type(x0, float))
    out[..., 0] = x0
    if order >= 1:
        out[..., 1] = 1.0
    return out


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = a.shape[-1]
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.zeros(shape, dtype=np.result_type(a, b))
    for j in range(m):
        out[..., j:] += a[..., j : j + 1] * b[..., : m - j]
    return out


def reciprocal(a: np.ndarray) -> np.ndarray:
    m = a.shape[-1]
    out = np.zeros_like(a, dtype=np.result_type(a, float))
    out[..., 0] = 1.0 / a[..., 0]
    for j in range(1, m):
        acc = np.zeros_like(out[..., 0])
        for k in range(1, j + 1):
            acc = acc + a[..., k] * out[..., j - k]
        out[..., j] = -acc * out[..., 0]
    return out


def div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return mul(a, reciprocal(b))


def exp(a: np.ndarray) -> np.ndarray:
    m = a.shape[-1]
    out = np.zeros_like(a, dtype=np.result_type(a, float))
    out[..., 0] = np.exp(a[..., 0])
    for j in range(1, m):
        acc = np.zeros_like(out[..., 0])
        for k in range(1, j + 1):
            acc = acc + k * a[..., k] * out[..., j - k]
        out[..., j] = acc / j
    return out


def power(a: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros_like(a, dtype=np.result_type(a, float))
    out[..., 0] = 1.0
    for _ in range(p):
        out = mul(out, a)
    return out


def compose(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Series of g(u(x)) where ``outer`` is the expansion of g at u(x0).

    ``outer`` holds g^(j)(u0)/j!; only inner[..., 1:] is used.
    """
    m = inner.shape[-1]
    du = inner.copy()
    du[..., 0] = 0.0
    shape = np.broadcast_shapes(outer.shape[:-1], inner.shape[:-1]) + (m,)
    out = np.zeros(shape, dtype=np.result_type(outer, inner))
    term = np.zeros(shape, dtype=out.dtype)
    term[..., 0] = 1.0
    for j in range(min(m, outer.shape[-1])):
        out = out + outer[..., j : j + 1] * term
        term = mul(term, du)
    return out


def revert(u: np.ndarray) -> np.ndarray:
    """Compositional inverse of u - u0 (needs u1 != 0); returns sigma with
    sigma(0) = 0 and u(x0 + sigma(w)) - u0 = w."""
    m = u.shape[-1]
    du = u.copy()
    du[..., 0] = 0.0
    sigma = np.zeros_like(du)
    if m == 1:
        return sigma
    sigma[..., 1] = 1.0 / du[..., 1]
    for j in range(2, m):
        # fix coefficient j so that du(sigma(w)) has zero w^j term
        comp = compose(du, sigma)
        sigma[..., j] = -comp[..., j] / du[..., 1]
    return sigma
