"""Truncated Taylor jets along an input direction.

A :class:`Jet` stores scaled Taylor coefficients ``c[k] = f^(k)(x) / k!`` of
``f(x + s*d)`` in the scalar ``s``.  With this representation the product of
two jets is the Cauchy product of their coefficients, and raw directional
derivatives are recovered with :meth:`Jet.derivatives`.

Coefficients are kept as a list of tensors that only need to broadcast against
each other.  This lets the zeroth coefficient (the plain value) be shared by
several directions stacked on a leading axis of the higher coefficients, and
lets structurally zero coefficients be stored as the Python float ``0.0`` so
that no work is spent on them.
"""

from __future__ import annotations

import math

import torch

MAX_ORDER = 3


class UnsupportedOrderError(ValueError):
    def __init__(self, order):
        super().__init__(f"derivative order {order} unsupported (max {MAX_ORDER})")
        self.order = order


def _is_zero(c):
    return isinstance(c, float) and c == 0.0


def _conv(a, b, k, start=0, weighted=False):
    acc = 0.0
    for j in range(start, k + 1):
        x, y = a[j], b[k - j]
        if _is_zero(x) or _is_zero(y):
            continue
        if isinstance(y, float) and y == 1.0:
            term = x
        else:
            term = x * y
        if weighted and j != 1:
            term = term * j
        acc = term if _is_zero(acc) else acc + term
    return acc


class Jet:
    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = [c if _is_zero(c) else torch.as_tensor(c, dtype=torch.float64) for c in coeffs]

    @classmethod
    def seed(cls, x, direction, order):
        """Jet of the identity map ``s -> x + s*direction``.

        ``direction`` may carry a leading axis of several directions; the value
        ``x`` is then shared by all of them.
        """
        if order > MAX_ORDER:
            raise UnsupportedOrderError(order)
        x = torch.as_tensor(x, dtype=torch.float64)
        if order == 0:
            return cls([x])
        d = torch.as_tensor(direction, dtype=torch.float64)
        if d.dim() == 2 and x.dim() == 2:
            d = d[:, None, :]
        return cls([x, d] + [0.0] * (order - 1))

    @classmethod
    def constant(cls, x, order):
        return cls([x] + [0.0] * order)

    @property
    def order(self):
        return len(self.c) - 1

    @property
    def value(self):
        return self.c[0]

    def derivatives(self):
        """Raw derivatives ``f, f', f'', ...`` stacked on a new leading axis."""
        tensors = [c for c in self.c if not _is_zero(c)]
        shape = torch.broadcast_shapes(*(t.shape for t in tensors))
        out = []
        for k, c in enumerate(self.c):
            if _is_zero(c):
                out.append(torch.zeros(shape, dtype=torch.float64))
            else:
                out.append((c * math.factorial(k)).expand(shape))
        return torch.stack(out)

    def differentiate(self):
        """Jet of ``f'`` along the same direction (one order lower)."""
        return Jet([k * c if not _is_zero(c) else 0.0 for k, c in enumerate(self.c)][1:])

    def truncate(self, order):
        return Jet(self.c[: order + 1])

    def map(self, fn):
        """Apply ``fn`` to every non-zero coefficient (for linear operations)."""
        return Jet([c if _is_zero(c) else fn(c) for c in self.c])

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            _same_order(self, other)
            return Jet([_add(a, b) for a, b in zip(self.c, other.c)])
        return Jet([self.c[0] + other] + self.c[1:])

    __radd__ = __add__

    def __neg__(self):
        return self.map(torch.neg)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            _same_order(self, other)
            return Jet([_conv(self.c, other.c, k) for k in range(self.order + 1)])
        return self.map(lambda c: c * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self.map(lambda c: c / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if isinstance(n, int) and n >= 1:
            out = self
            for _ in range(n - 1):
                out = out * self
            return out
        if n == 0:
            return Jet.constant(torch.ones_like(self.c[0]), self.order)
        if n == 0.5:
            return self.sqrt()
        raise ValueError(f"unsupported jet power {n!r}")

    # elementary functions ---------------------------------------------------
    # Each follows from an ODE y' = r * x' written in Taylor coefficients:
    #   k y_k = sum_{j=1}^k j x_j r_{k-j}

    def exp(self):
        x = self.c
        y = [torch.exp(x[0])]
        for k in range(1, self.order + 1):
            y.append(_scale(_conv(x, y, k, start=1, weighted=True), 1.0 / k))
        return Jet(y)

    def sincos(self):
        x = self.c
        s, c = [torch.sin(x[0])], [torch.cos(x[0])]
        for k in range(1, self.order + 1):
            s.append(_scale(_conv(x, c, k, start=1, weighted=True), 1.0 / k))
            c.append(_scale(_conv(x, s, k, start=1, weighted=True), -1.0 / k))
        return Jet(s), Jet(c)

    def sin(self):
        return self.sincos()[0]

    def cos(self):
        return self.sincos()[1]

    def tanh(self):
        # rate r = 1 - y^2; written out per coefficient to keep the op count low
        x = self.c
        y0 = torch.tanh(x[0])
        r0 = 1.0 - y0 * y0
        y = [y0]
        if self.order >= 1:
            y1 = _mul(r0, x[1])
            y.append(y1)
        if self.order >= 2:
            # y2 = r0 x2 - y0 y1 x1
            y2 = _add(_mul(r0, x[2]), _scale(_mul(_mul(y0, y1), x[1]), -1.0))
            y.append(y2)
        if self.order >= 3:
            r1 = _scale(_mul(y0, y1), -2.0)
            r2 = _scale(_add(_scale(_mul(y0, y2), 2.0), _mul(y1, y1)), -1.0)
            # y3 = (x1 r2 + 2 x2 r1 + 3 x3 r0) / 3
            acc = _add(_mul(x[1], r2), _scale(_mul(x[2], r1), 2.0))
            y.append(_add(_scale(acc, 1.0 / 3.0), _mul(x[3], r0)))
        return Jet(y)

    def sqrt(self):
        # y^2 = x  =>  y_k = (x_k - sum_{j=1}^{k-1} y_j y_{k-j}) / (2 y_0)
        x = self.c
        y = [torch.sqrt(x[0])]
        half_inv = 0.5 / y[0]
        for k in range(1, self.order + 1):
            acc = _add(x[k], _scale(_partial_conv(y, k), -1.0))
            y.append(0.0 if _is_zero(acc) else acc * half_inv)
        return Jet(y)

    def reciprocal(self):
        x = self.c
        y0 = 1.0 / x[0]
        y = [y0]
        for k in range(1, self.order + 1):
            acc = _conv(x, y, k, start=1)
            y.append(0.0 if _is_zero(acc) else -acc * y0)
        return Jet(y)

    def linear(self, weight, bias=None):
        """Affine map on the trailing axis; the bias only shifts the value."""
        wt = weight.T
        out = self.map(lambda c: c @ wt)
        if bias is not None:
            out.c[0] = out.c[0] + bias
        return out

    def __repr__(self):
        return f"Jet(order={self.order})"


def _partial_conv(y, k):
    """sum_{j=1}^{k-1} y_j y_{k-j}."""
    acc = 0.0
    for j in range(1, k):
        a, b = y[j], y[k - j]
        if _is_zero(a) or _is_zero(b):
            continue
        acc = a * b if _is_zero(acc) else acc + a * b
    return acc


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return a + b


def _scale(a, s):
    if _is_zero(a):
        return 0.0
    return a if s == 1.0 else a * s


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return a * b


def _same_order(a, b):
    if a.order != b.order:
        raise ValueError(f"jets of different order ({a.order} vs {b.order})")


def _dispatch(name):
    def fn(x):
        if isinstance(x, Jet):
            return getattr(x, name)()
        return getattr(torch, name)(torch.as_tensor(x, dtype=torch.float64))

    fn.__name__ = name
    fn.__doc__ = f"``{name}`` for tensors or jets."
    return fn


sin = _dispatch("sin")
cos = _dispatch("cos")
exp = _dispatch("exp")
tanh = _dispatch("tanh")
sqrt = _dispatch("sqrt")
