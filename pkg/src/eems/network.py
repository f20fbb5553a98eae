"""Fully connected tanh networks with Taylor-mode input derivatives.

Parameters are held in one flat float64 vector laid out layer by layer, each
layer contributing its weight matrix (row-major, shape ``(out, in)``) followed
by its bias.  Every evaluation method takes an optional ``params`` override so
that losses can be written as plain functions of the flat vector.
"""

from __future__ import annotations

import math
import os
import struct
from pathlib import Path

import numpy as np
import torch

from .jets import MAX_ORDER, Jet, UnsupportedOrderError

torch.set_default_dtype(torch.float64)
if os.environ.get("EEMS_THREADS"):
    torch.set_num_threads(max(1, int(os.environ["EEMS_THREADS"])))

_MAGIC = b"EEMSNET\x00"
_VERSION = 1


class UsageError(ValueError):
    """Raised when a network is called with inputs of the wrong shape."""


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message, point_index=None, term=None):
        super().__init__(message)
        self.point_index = point_index
        self.term = term


class DenseNetwork:
    """``widths = (l0, l1, ..., lL)``; hidden layers use tanh, the last is affine.

    If ``lower``/``upper`` are given, inputs are first mapped affinely from that
    box onto ``[-1, 1]``.  This is a fixed reparametrisation of the first layer
    and carries no trainable parameters.
    """

    def __init__(self, widths, params=None, lower=None, upper=None, seed=0, zero_last=False):
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise UsageError(f"invalid layer widths {widths}")
        self.lower = None if lower is None else torch.as_tensor(lower, dtype=torch.float64)
        self.upper = None if upper is None else torch.as_tensor(upper, dtype=torch.float64)
        if params is None:
            params = glorot_uniform(self.widths, seed, zero_last=zero_last)
        params = torch.as_tensor(params, dtype=torch.float64).detach().clone()
        if params.numel() != self.n_params:
            raise UsageError(f"expected {self.n_params} parameters, got {params.numel()}")
        self.params = params

    @property
    def in_dim(self):
        return self.widths[0]

    @property
    def out_dim(self):
        return self.widths[-1]

    @property
    def n_params(self):
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def copy(self, params=None):
        return DenseNetwork(
            self.widths,
            self.params if params is None else params,
            self.lower,
            self.upper,
        )

    def unpack(self, params=None):
        """Split the flat vector into ``[(W1, b1), ..., (WL, bL)]`` views."""
        p = self.params if params is None else params
        layers, pos = [], 0
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            W = p[pos : pos + a * b].view(b, a)
            pos += a * b
            layers.append((W, p[pos : pos + b]))
            pos += b
        return layers

    def _input_scale(self):
        if self.lower is None:
            return None, None
        scale = 2.0 / (self.upper - self.lower)
        return scale, -1.0 - self.lower * scale

    def _check(self, X):
        X = torch.as_tensor(X, dtype=torch.float64)
        if X.dim() == 1:
            X = X.unsqueeze(0)
        if X.shape[-1] != self.in_dim:
            raise UsageError(f"input dimension {X.shape[-1]} != network input width {self.in_dim}")
        return X

    def forward(self, X, params=None):
        X = self._check(X)
        scale, shift = self._input_scale()
        h = X if scale is None else X * scale + shift
        layers = self.unpack(params)
        for W, b in layers[:-1]:
            h = torch.tanh(h @ W.T + b)
        W, b = layers[-1]
        return h @ W.T + b

    __call__ = forward

    def jet(self, X, direction=None, order=1, params=None):
        """Propagate a jet through the network.

        ``X`` is either a point batch (seeded along ``direction``) or an input
        :class:`Jet` whose trailing axis has size ``l0``.
        """
        if isinstance(X, Jet):
            if X.c[0].shape[-1] != self.in_dim:
                raise UsageError("input jet has wrong trailing dimension")
            h = X
        else:
            if order > MAX_ORDER:
                raise UnsupportedOrderError(order)
            X = self._check(X)
            h = Jet.seed(X, direction, order)
        scale, shift = self._input_scale()
        if scale is not None:
            h = h * scale + shift
        layers = self.unpack(params)
        for W, b in layers[:-1]:
            h = h.linear(W, b).tanh()
        W, b = layers[-1]
        return h.linear(W, b)

    def derivs(self, X, direction, order, params=None):
        """Raw directional derivatives, shape ``(order + 1, N, out_dim)``.

        A ``(D, in_dim)`` stack of directions gives ``(order + 1, D, N, out_dim)``.
        """
        return self.jet(X, direction, order, params).derivatives()

    def save(self, path):
        save_checkpoint(self, path)


def glorot_uniform(widths, seed, zero_last=False):
    rng = np.random.default_rng(seed)
    chunks = []
    n_layers = len(widths) - 1
    for k, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        limit = math.sqrt(6.0 / (a + b))
        W = rng.uniform(-limit, limit, size=(b, a))
        if zero_last and k == n_layers - 1:
            W[:] = 0.0
        chunks += [W.ravel(), np.zeros(b)]
    return torch.from_numpy(np.concatenate(chunks))


def net_eval(net, X, params=None):
    return net.forward(X, params)


def net_directional_derivs(net, X, direction, order, params=None):
    if order < 1 or order > MAX_ORDER:
        raise UnsupportedOrderError(order)
    return net.derivs(X, direction, order, params)


def axis_direction(dim, axis):
    d = torch.zeros(dim, dtype=torch.float64)
    d[axis] = 1.0
    return d


def mixed_second(source, X, i, j, params=None, pure=None):
    """``d^2 u / dx_i dx_j`` by polarisation from three directional seconds.

    ``pure`` may carry already computed ``(u_ii, u_jj)`` to save two passes.
    """
    dim = X.shape[-1]
    if pure is None:
        u_ii = _derivs(source, X, axis_direction(dim, i), 2, params)[2]
        u_jj = _derivs(source, X, axis_direction(dim, j), 2, params)[2]
    else:
        u_ii, u_jj = pure
    diag = (axis_direction(dim, i) + axis_direction(dim, j)) / math.sqrt(2.0)
    # unit diagonal: d2 = (u_ii + 2 u_ij + u_jj) / 2
    u_dd = _derivs(source, X, diag, 2, params)[2]
    return u_dd - 0.5 * (u_ii + u_jj)


def _derivs(source, X, direction, order, params):
    if params is None:
        return source.derivs(X, direction, order)
    return source.derivs(X, direction, order, params)


def value_and_grad(loss, net, params=None):
    """Evaluate ``loss(params)`` and its gradient with respect to ``params``.

    ``loss`` must return a scalar tensor (or a plain number for a loss that does
    not depend on the parameters).  Reverse-mode is run over the jet-valued
    computation graph, so derivative-bearing losses are differentiated exactly.
    """
    p = (net.params if params is None else params).detach().clone().requires_grad_(True)
    value = loss(p)
    if not torch.is_tensor(value) or not value.requires_grad:
        v = float(value)
        if not math.isfinite(v):
            raise NonFiniteLossError(f"loss is {v}")
        return v, torch.zeros_like(p.detach())
    v = float(value.detach())
    if not math.isfinite(v):
        raise NonFiniteLossError(f"loss is {v}")
    (g,) = torch.autograd.grad(value, p, allow_unused=True)
    if g is None:
        g = torch.zeros_like(p.detach())
    return v, g.detach()


def loss_gradient(loss, net, params=None):
    """Gradient of a scalar loss w.r.t. the flat parameter vector of ``net``."""
    return value_and_grad(loss, net, params)[1]


def save_checkpoint(net, path):
    path = Path(path)
    box = net.lower is not None
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(net.widths)))
        fh.write(struct.pack(f"<{len(net.widths)}I", *net.widths))
        fh.write(struct.pack("<I", int(box)))
        if box:
            fh.write(net.lower.numpy().astype("<f8").tobytes())
            fh.write(net.upper.numpy().astype("<f8").tobytes())
        fh.write(net.params.detach().numpy().astype("<f8").tobytes())


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    pos = 8
    version, n = struct.unpack_from("<II", data, pos)
    pos += 8
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    widths = struct.unpack_from(f"<{n}I", data, pos)
    pos += 4 * n
    (box,) = struct.unpack_from("<I", data, pos)
    pos += 4
    lower = upper = None
    if box:
        lower = np.frombuffer(data, "<f8", widths[0], pos).copy()
        pos += 8 * widths[0]
        upper = np.frombuffer(data, "<f8", widths[0], pos).copy()
        pos += 8 * widths[0]
    params = np.frombuffer(data, "<f8", offset=pos).copy()
    return DenseNetwork(widths, torch.from_numpy(params), lower, upper)
