"""Second-order forward-mode jets.

A :class:`Jet2` carries the value, gradient and Hessian of a scalar field
with respect to ``k`` seeded variables.  Values may be numpy arrays (batched
evaluation) or other jets, so derivatives of derivatives are obtained by
nesting: the inner jet differentiates with respect to one set of variables
while its coefficients are themselves jets over another set.

Layout convention: the tangent axes are always *trailing*.  For a jet whose
value has shape ``V``, ``grad`` has shape ``V + (k,)`` and ``hess`` has
shape ``V + (k, k)``.  Every operation below relies only on broadcasting
arithmetic and ``[..., None]`` style indexing, which both ``ndarray`` and
``Jet2`` support, hence the nesting.

Fields are written against the primitive functions of this module
(:func:`sqrt`, :func:`exp`, :func:`log`, ...), which dispatch on the
argument type.  Branching primitives (``abs``, ``max``) are deliberately
absent; sign-sector dispatch is done with :func:`where` on masks computed
from plain floats.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import JetDomainError

__all__ = [
    "Jet2",
    "jet2_eval",
    "directional_jet",
    "seed",
    "base",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "sinh",
    "cosh",
    "power",
    "where",
    "det",
    "solve",
]


def _depth(obj) -> int:
    return obj._depth if isinstance(obj, Jet2) else 0


def _shape(obj) -> tuple:
    return obj.shape if isinstance(obj, Jet2) else np.shape(obj)


def _expand(c, n: int):
    """Append ``n`` singleton axes so ``c`` broadcasts against tangent axes."""
    if not isinstance(c, Jet2):
        c = np.asarray(c, dtype=float)
    return c[(Ellipsis,) + (None,) * n]


def base(x):
    """Strip all jet layers and return the underlying float array."""
    while isinstance(x, Jet2):
        x = x.value
    return x


class Jet2:
    """Truncated Taylor expansion to second order (``hess=None`` means first order)."""

    __slots__ = ("value", "grad", "hess", "_depth")
    # keep numpy from treating a jet as an object scalar in mixed expressions
    __array_ufunc__ = None

    def __init__(self, value, grad, hess=None):
        if not isinstance(value, Jet2):
            value = np.asarray(value, dtype=float)
        self.value = value
        self.grad = grad
        self.hess = hess
        self._depth = 1 + _depth(value)

    # -- structure -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return _shape(self.value)

    @property
    def k(self) -> int:
        return _shape(self.grad)[-1]

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    def __repr__(self) -> str:
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            gidx = idx + (slice(None),)
            hidx = idx + (slice(None), slice(None))
        else:
            gidx = hidx = idx + (Ellipsis,)
        hess = None if self.hess is None else self.hess[hidx]
        return Jet2(self.value[idx], self.grad[gidx], hess)

    def sum(self, axis: int):
        """Sum over a (non-negative) axis of the value shape."""
        if axis < 0:
            raise ValueError("Jet2.sum needs a non-negative value axis")
        hess = None if self.hess is None else self.hess.sum(axis)
        return Jet2(self.value.sum(axis), self.grad.sum(axis), hess)

    def _broadcast_to(self, shape: tuple) -> "Jet2":
        if self.shape == tuple(shape):
            return self
        k = self.k
        hess = None
        if self.hess is not None:
            hess = self.hess + np.zeros(tuple(shape) + (k, k))
        return Jet2(self.value + np.zeros(shape), self.grad + np.zeros(tuple(shape) + (k,)), hess)

    # -- arithmetic ------------------------------------------------------
    def _same_level(self, other) -> bool | None:
        """True: combine as jets, False: ``other`` is a constant, None: defer."""
        d = _depth(other)
        if d == self._depth:
            return True
        if d > self._depth:
            return None
        return False

    def __neg__(self):
        hess = None if self.hess is None else -self.hess
        return Jet2(-self.value, -self.grad, hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        lvl = self._same_level(other)
        if lvl is None:
            return NotImplemented
        if lvl:
            hess = None
            if self.hess is not None and other.hess is not None:
                hess = self.hess + other.hess
            return Jet2(self.value + other.value, self.grad + other.grad, hess)
        value = self.value + other
        out = Jet2(value, self.grad, self.hess)
        shape = _shape(value)
        if shape != self.shape:
            k = self.k
            out.grad = self.grad + np.zeros(shape + (k,))
            if self.hess is not None:
                out.hess = self.hess + np.zeros(shape + (k, k))
        return out

    __radd__ = __add__

    def __sub__(self, other):
        lvl = self._same_level(other)
        if lvl is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        lvl = self._same_level(other)
        if lvl is None:
            return NotImplemented
        if not lvl:
            c1 = _expand(other, 1)
            hess = None if self.hess is None else self.hess * _expand(other, 2)
            return Jet2(self.value * other, self.grad * c1, hess)
        v1, g1, h1 = self.value, self.grad, self.hess
        v2, g2, h2 = other.value, other.grad, other.hess
        value = v1 * v2
        grad = g1 * _expand(v2, 1) + g2 * _expand(v1, 1)
        hess = None
        if h1 is not None and h2 is not None:
            hess = (
                h1 * _expand(v2, 2)
                + h2 * _expand(v1, 2)
                + g1[..., :, None] * g2[..., None, :]
                + g2[..., :, None] * g1[..., None, :]
            )
        return Jet2(value, grad, hess)

    __rmul__ = __mul__

    def __truediv__(self, other):
        lvl = self._same_level(other)
        if lvl is None:
            return NotImplemented
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet2):
            return exp(log(self) * p)
        return power(self, p)


# ---------------------------------------------------------------------------
# primitives


def _chain(x: Jet2, f0, f1, f2) -> Jet2:
    g = x.grad
    grad = g * _expand(f1, 1)
    hess = None
    if x.hess is not None:
        hess = x.hess * _expand(f1, 2) + (g[..., :, None] * g[..., None, :]) * _expand(f2, 2)
    return Jet2(f0, grad, hess)


def _check(cond, name: str, what: str) -> None:
    if not np.all(cond):
        raise JetDomainError(f"{name}: {what}")


def reciprocal(x):
    if isinstance(x, Jet2):
        r = reciprocal(x.value)
        r2 = r * r
        return _chain(x, r, -r2, 2.0 * r2 * r)
    x = np.asarray(x, dtype=float)
    _check(x != 0.0, "reciprocal", "zero divisor")
    return 1.0 / x


def sqrt(x):
    if isinstance(x, Jet2):
        _check(base(x.value) > 0.0, "sqrt", "non-positive argument (derivative undefined)")
        s = sqrt(x.value)
        r = reciprocal(s)
        return _chain(x, s, 0.5 * r, -0.25 * r * r * r)
    x = np.asarray(x, dtype=float)
    _check(x >= 0.0, "sqrt", "negative argument")
    return np.sqrt(x)


def exp(x):
    if isinstance(x, Jet2):
        e = exp(x.value)
        return _chain(x, e, e, e)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet2):
        v = x.value
        _check(base(v) > 0.0, "log", "non-positive argument")
        r = reciprocal(v)
        return _chain(x, log(v), r, -(r * r))
    x = np.asarray(x, dtype=float)
    _check(x > 0.0, "log", "non-positive argument")
    return np.log(x)


def sin(x):
    if isinstance(x, Jet2):
        s, c = sin(x.value), cos(x.value)
        return _chain(x, s, c, -s)
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet2):
        s, c = sin(x.value), cos(x.value)
        return _chain(x, c, -s, -c)
    return np.cos(x)


def sinh(x):
    if isinstance(x, Jet2):
        s, c = sinh(x.value), cosh(x.value)
        return _chain(x, s, c, s)
    return np.sinh(x)


def cosh(x):
    if isinstance(x, Jet2):
        s, c = sinh(x.value), cosh(x.value)
        return _chain(x, c, s, c)
    return np.cosh(x)


def power(x, p: float):
    """``x**p`` for a constant exponent."""
    p = float(p)
    if isinstance(x, Jet2):
        if p == 0.0:
            return Jet2(np.ones(x.shape), np.zeros(x.shape + (x.k,)))  # pragma: no cover
        if p == 1.0:
            return x
        if p == 2.0:
            return x * x
        if p == 0.5:
            return sqrt(x)
        if not p.is_integer():
            _check(base(x.value) > 0.0, "power", "non-positive base with fractional exponent")
        v = x.value
        return _chain(x, power(v, p), p * power(v, p - 1.0), p * (p - 1.0) * power(v, p - 2.0))
    x = np.asarray(x, dtype=float)
    if not p.is_integer():
        _check(x >= 0.0, "power", "negative base with fractional exponent")
    if p < 0:
        _check(x != 0.0, "power", "zero base with negative exponent")
    return x**p


def _zeros_like_jet(c, like: Jet2) -> Jet2:
    shape = _shape(c)
    k = like.k
    hess = None if like.hess is None else np.zeros(shape + (k, k))
    if _depth(like.value) > _depth(c):
        c = _zeros_like_jet(c, like.value)
    return Jet2(c, np.zeros(shape + (k,)), hess)


def where(mask, a, b):
    """Select ``a`` where ``mask`` else ``b``; ``mask`` is a plain boolean array."""
    mask = np.asarray(mask, dtype=bool)
    da, db = _depth(a), _depth(b)
    if da == 0 and db == 0:
        return np.where(mask, a, b)
    if da < db:
        a = _zeros_like_jet(np.asarray(a, dtype=float) if da == 0 else a, b)
    elif db < da:
        b = _zeros_like_jet(np.asarray(b, dtype=float) if db == 0 else b, a)
    hess = None
    if a.hess is not None and b.hess is not None:
        hess = where(mask[..., None, None], a.hess, b.hess)
    return Jet2(where(mask, a.value, b.value), where(mask[..., None], a.grad, b.grad), hess)


# ---------------------------------------------------------------------------
# seeding and evaluation


def seed(values: Sequence, order: int = 2) -> list[Jet2]:
    """Turn ``k`` (possibly jet-valued) coordinates into independent variables."""
    k = len(values)
    out = []
    for i, v in enumerate(values):
        shape = _shape(v)
        grad = np.zeros(shape + (k,))
        grad[..., i] = 1.0
        hess = np.zeros(shape + (k, k)) if order == 2 else None
        out.append(Jet2(v, grad, hess))
    return out


def _as_jet(r, shape: tuple, k: int) -> Jet2:
    if isinstance(r, Jet2):
        return r._broadcast_to(shape) if r.shape != shape else r
    r = np.broadcast_to(np.asarray(r, dtype=float), shape)
    return Jet2(r, np.zeros(shape + (k,)), np.zeros(shape + (k, k)))


def jet2_eval(f: Callable, x) -> Jet2:
    """Value, gradient and Hessian of ``f`` at ``x``.

    ``f`` receives a tuple of ``k`` coordinates and must be built from this
    module's primitives.  ``x`` has shape ``(k,)`` or ``(..., k)`` for a
    batch of points; the returned jet has value shape ``x.shape[:-1]``.

    >>> j = jet2_eval(lambda z: z[0] * z[1], [2.0, 3.0])
    >>> float(j.value), j.grad.tolist()
    (6.0, [3.0, 2.0])
    """
    x = np.asarray(x, dtype=float)
    k = x.shape[-1]
    z = seed([x[..., i] for i in range(k)], order=2)
    return _as_jet(f(tuple(z)), x.shape[:-1], k)


def directional_jet(f: Callable, x, v, order: int = 2) -> tuple:
    """``(f, Df.v)`` or ``(f, Df.v, v^T Hf v)`` at ``x``."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast_shapes(x.shape, v.shape)
    x = np.broadcast_to(x, shape)
    v = np.broadcast_to(v, shape)
    (t,) = seed([np.zeros(shape[:-1])], order=order)
    z = tuple(t * v[..., i] + x[..., i] for i in range(shape[-1]))
    r = f(z)
    if not isinstance(r, Jet2):
        r = np.broadcast_to(np.asarray(r, dtype=float), shape[:-1])
        zero = np.zeros(shape[:-1])
        return (r, zero) if order == 1 else (r, zero, zero)
    if order == 1:
        return r.value, r.grad[..., 0]
    return r.value, r.grad[..., 0], r.hess[..., 0, 0]


# ---------------------------------------------------------------------------
# small dense linear algebra on nested lists of jet-friendly scalars (n <= 3)


def det(a: Sequence[Sequence]):
    n = len(a)
    if n == 1:
        return a[0][0]
    if n == 2:
        return a[0][0] * a[1][1] - a[0][1] * a[1][0]
    if n == 3:
        return (
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        )
    raise ValueError("det supports n <= 3")


def solve(a: Sequence[Sequence], b: Sequence) -> list:
    """Cramer's rule; fine for the n <= 3 systems that appear here."""
    n = len(a)
    d = det(a)
    inv_d = reciprocal(d)
    out = []
    for i in range(n):
        ai = [[b[r] if c == i else a[r][c] for c in range(n)] for r in range(n)]
        out.append(det(ai) * inv_d)
    return out
