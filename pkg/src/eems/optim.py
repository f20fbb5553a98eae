"""Full-batch optimizers over a flat parameter vector.

An *objective* is a callable ``params -> (loss_tensor, terms)`` where ``terms``
maps term names to floats.  Optimizers record one history entry per executed
iteration: ``(total, terms)`` evaluated at the iterate the step started from
(Adam) or at the accepted iterate (L-BFGS).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import torch

from .network import NonFiniteLossError


@dataclass
class TrainState:
    params: torch.Tensor
    m: torch.Tensor | None = None
    v: torch.Tensor | None = None
    step: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, params):
        p = params.detach().clone()
        return cls(p, torch.zeros_like(p), torch.zeros_like(p))

    def reset_moments(self):
        self.m = torch.zeros_like(self.params)
        self.v = torch.zeros_like(self.params)
        self.step = 0


def evaluate(objective, params, need_grad=True):
    """``(loss, terms, grad)`` at ``params``; the gradient is ``None`` if not needed."""
    p = params.detach().clone().requires_grad_(need_grad)
    loss, terms = objective(p)
    value = float(loss.detach()) if torch.is_tensor(loss) else float(loss)
    if not math.isfinite(value):
        raise NonFiniteLossError(f"loss is {value}", term=_bad_term(terms))
    if not need_grad:
        return value, terms, None
    if torch.is_tensor(loss) and loss.requires_grad:
        (g,) = torch.autograd.grad(loss, p, allow_unused=True)
        g = torch.zeros_like(params) if g is None else g.detach()
    else:
        g = torch.zeros_like(params)
    if not bool(torch.isfinite(g).all()):
        raise NonFiniteLossError("non-finite gradient")
    return value, terms, g


def _bad_term(terms):
    for k, v in terms.items():
        if not math.isfinite(v):
            return k
    return None


def adam_step(state, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected adaptive-moment update, in place; returns ``state``."""
    if not bool(torch.isfinite(grad).all()):
        raise NonFiniteLossError("non-finite gradient in Adam step")
    if state.m is None:
        state.reset_moments()
    state.step += 1
    state.m.mul_(beta1).add_(grad, alpha=1 - beta1)
    state.v.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
    m_hat = state.m / (1 - beta1**state.step)
    v_hat = state.v / (1 - beta2**state.step)
    state.params = state.params - lr * m_hat / (v_hat.sqrt() + eps)
    return state


def adam_run(state, objective, budget, lr, beta1=0.9, beta2=0.999, eps=1e-8, callback=None):
    for _ in range(budget):
        value, terms, g = evaluate(objective, state.params)
        state.history.append((value, terms))
        adam_step(state, g, lr, beta1, beta2, eps)
        if callback:
            callback(state)
    return state


@dataclass(frozen=True)
class LineSearch:
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30


def _two_loop(g, pairs):
    q = g.clone()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * torch.dot(s, q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= torch.dot(s, y) / torch.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * torch.dot(y, q)
        q += (a - b) * s
    return -q


def lbfgs_run(state, objective, budget, lr=1.0, memory=10, line_search=LineSearch(), tol=0.0):
    """Limited-memory BFGS with backtracking Armijo steps.

    ``lr`` is the trial step of every line search (scaled down on the first
    iteration, before any curvature is known).  Returns ``state`` holding the
    best accepted parameters; a failed line search ends the phase.
    """
    if budget <= 0:
        return state
    if memory < 1:
        raise ValueError("L-BFGS memory must be >= 1")
    x = state.params.detach().clone()
    f, terms, g = evaluate(objective, x)
    pairs = deque(maxlen=memory)
    for _ in range(budget):
        gnorm = float(g.abs().max())
        if gnorm <= tol:
            break
        d = _two_loop(g, list(pairs))
        slope = float(torch.dot(g, d))
        if slope >= 0:
            pairs.clear()
            d = -g
            slope = float(torch.dot(g, d))
        alpha = lr if pairs else lr * min(1.0, 1.0 / float(g.abs().sum()))
        accepted = False
        for _ in range(line_search.max_backtracks):
            x_new = x + alpha * d
            try:
                f_new, terms_new, g_new = evaluate(objective, x_new)
            except NonFiniteLossError:
                alpha *= line_search.shrink
                continue
            if f_new <= f + line_search.c1 * alpha * slope:
                accepted = True
                break
            alpha *= line_search.shrink
        if not accepted:
            break
        s, y = x_new - x, g_new - g
        sy = float(torch.dot(s, y))
        if sy > 1e-12 * float(torch.dot(y, y)) and sy > 0:
            pairs.append((s, y, 1.0 / sy))
        x, f, g, terms = x_new, f_new, g_new, terms_new
        state.history.append((f, terms))
        state.step += 1
    state.params = x
    return state
