"""Energy tracking and error metrics over tensor-product grids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import median  # noqa: F401  (re-exported)

import numpy as np
import torch

from .problems import energy_density, exact_source, initial_source


class UndefinedReferenceError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Composite trapezoid rule on a tensor grid over the spatial box."""

    nodes: torch.Tensor  # (n, d)
    weights: torch.Tensor  # (n,)
    resolution: tuple
    kind: str = "trapezoid"

    @classmethod
    def trapezoid(cls, domain, resolution=None):
        d = domain.dim
        if resolution is None:
            resolution = 201 if d == 1 else 101
        if isinstance(resolution, int):
            resolution = (resolution,) * d
        axes, wts = [], []
        for a, b, n in zip(domain.lower, domain.upper, resolution):
            if n < 2:
                raise ValueError("trapezoid rule needs at least 2 nodes per axis")
            x = np.linspace(a, b, n)
            w = np.full(n, (b - a) / (n - 1))
            w[0] = w[-1] = 0.5 * (b - a) / (n - 1)
            axes.append(x)
            wts.append(w)
        grids = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], -1)
        weights = wts[0]
        for w in wts[1:]:
            weights = np.multiply.outer(weights, w)
        return cls(torch.from_numpy(nodes), torch.from_numpy(weights.ravel()), tuple(resolution))

    def at_time(self, t):
        t_col = torch.full((self.nodes.shape[0], 1), float(t), dtype=torch.float64)
        return torch.cat([self.nodes, t_col], dim=1)

    def integrate(self, values):
        return float(torch.dot(self.weights, torch.as_tensor(values, dtype=torch.float64).reshape(-1)))


def discrete_energy(problem, source, t, rule, chunk=20000):
    """Quadrature of the unshifted energy density at time ``t``."""
    X = rule.at_time(t)
    total = 0.0
    for start in range(0, X.shape[0], chunk):
        sl = slice(start, start + chunk)
        w = energy_density(problem, source, X[sl]).detach()
        total += float(torch.dot(rule.weights[sl], w))
    return total


def snapshot_times(T, count=11):
    return [T * k / (count - 1) for k in range(count)]


@dataclass
class EnergyTrace:
    times: list
    energies: list
    reference: float  # from the prescribed initial data
    flagged: bool = False

    def relative_errors(self):
        return relative_energy_error(self)


def relative_energy_error(trace):
    """``|H_d(t) - H_ref| / |H_ref|``; raises if the reference energy is zero."""
    if trace.reference == 0.0:
        raise UndefinedReferenceError(
            "reference energy is zero; report the absolute drift instead"
        )
    h0 = abs(trace.reference)
    return [abs(h - trace.reference) / h0 for h in trace.energies]


def absolute_energy_drift(trace):
    return [abs(h - trace.reference) for h in trace.energies]


def energy_trace(problem, source, rule=None, times=None, snapshots=11):
    rule = rule or QuadratureRule.trapezoid(problem.domain)
    times = times if times is not None else snapshot_times(problem.domain.T, snapshots)
    ref = discrete_energy(problem, initial_source(problem), 0.0, rule)
    energies = [discrete_energy(problem, source, t, rule) for t in times]
    return EnergyTrace(list(times), energies, ref, flagged=ref == 0.0)


def max_energy_error(trace):
    errs = relative_energy_error(trace) if trace.reference != 0.0 else absolute_energy_drift(trace)
    return max(errs) if errs else 0.0


# --------------------------------------------------------------------------
# solution error


def evaluation_grid(domain, resolution=None):
    """Uniform space-time grid; defaults 256 x 101 in 1D, 101 x 101 x 11 in 2D."""
    if resolution is None:
        resolution = (256, 101) if domain.dim == 1 else (101, 101, 11)
    lo, hi = domain.space_time_box()
    axes = [np.linspace(a, b, n) for a, b, n in zip(lo, hi, resolution)]
    grids = np.meshgrid(*axes, indexing="ij")
    return torch.from_numpy(np.stack([g.ravel() for g in grids], -1)), tuple(resolution)


def relative_l2(prediction, reference):
    """``||pred - ref|| / ||ref||`` over matching value arrays."""
    pred = torch.as_tensor(prediction, dtype=torch.float64).reshape(-1)
    ref = torch.as_tensor(reference, dtype=torch.float64).reshape(-1)
    denom = float(torch.linalg.vector_norm(ref))
    if denom == 0.0:
        raise UndefinedReferenceError("reference is identically zero on the test grid")
    return float(torch.linalg.vector_norm(pred - ref)) / denom


@dataclass
class ErrorReport:
    relative_l2: float
    max_abs: float
    grid: torch.Tensor = field(repr=False)
    exact: torch.Tensor = field(repr=False)
    predicted: torch.Tensor = field(repr=False)
    resolution: tuple = ()

    @property
    def abs_error(self):
        return (self.predicted - self.exact).abs()


def _values(source, X, chunk=20000):
    out = []
    for start in range(0, X.shape[0], chunk):
        with torch.no_grad():
            out.append(source.forward(X[start : start + chunk])[:, 0].detach())
    return torch.cat(out) if out else torch.zeros(0)


def error_report(problem, source, resolution=None, reference=None):
    grid, res = evaluation_grid(problem.domain, resolution)
    reference = reference or exact_source(problem)
    exact = _values(reference, grid)
    pred = _values(source, grid)
    return ErrorReport(
        relative_l2(pred, exact),
        float((pred - exact).abs().max()),
        grid,
        exact,
        pred,
        res,
    )
