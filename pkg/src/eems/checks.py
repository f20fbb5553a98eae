"""Self-checks runnable from the command line: derivatives, energy, mesh."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .diagnostics import QuadratureRule, discrete_energy, energy_trace, max_energy_error
from .network import DenseNetwork, loss_gradient
from .problems import PROBLEM_NAMES, Domain, exact_source, initial_source, make_problem
from .sampling import FunctionMonitor, MeshMap, train_mesh, uniform_points
from .training import pinn_loss


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    detail: str = ""

    @property
    def passed(self):
        return bool(self.value < self.tol)

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{mark} {self.name}: {self.value:.3e} < {self.tol:.0e}{extra}"


# --------------------------------------------------------------------------
# finite differences


def central_difference(f, X, d, order):
    """Directional derivative of order 1-3 of ``f`` along ``d`` by central stencils.

    All stencils are fourth-order accurate; steps balance truncation against
    cancellation for ``d`` of unit size in the network's input scaling.
    """
    with torch.no_grad():
        if order == 1:
            h = 1e-3
            return (-f(X + 2 * h * d) + 8 * f(X + h * d) - 8 * f(X - h * d) + f(X - 2 * h * d)) / (12 * h)
        if order == 2:
            h = 5e-3
            f0 = f(X)
            return (
                -f(X + 2 * h * d) + 16 * f(X + h * d) - 30 * f0 + 16 * f(X - h * d) - f(X - 2 * h * d)
            ) / (12 * h**2)
        if order == 3:
            h = 1e-2
            fp = [f(X + k * h * d) for k in (1, 2, 3)]
            fm = [f(X - k * h * d) for k in (1, 2, 3)]
            return (-fp[2] + 8 * fp[1] - 13 * fp[0] + 13 * fm[0] - 8 * fm[1] + fm[2]) / (8 * h**3)
    raise ValueError(f"order must be 1, 2 or 3, got {order}")


def _rel(a, b):
    scale = max(float(b.abs().max()), 1e-12)
    return float((a - b).abs().max()) / scale


def derivative_case(problem, seed, n_points=8, hidden=(6, 6)):
    """Worst relative error over orders 1-3 and the loss gradient for one random net."""
    g = torch.Generator().manual_seed(seed)
    lo, hi = problem.domain.space_time_box()
    lo_t, hi_t = torch.tensor(lo), torch.tensor(hi)
    net = DenseNetwork([problem.dim + 1, *hidden, problem.n_components], lower=lo, upper=hi, seed=seed)
    X = lo_t + (hi_t - lo_t) * torch.rand(n_points, problem.dim + 1, generator=g, dtype=torch.float64)
    # unit direction in the network's [-1, 1] input scaling, mapped back to physical units
    u = torch.randn(problem.dim + 1, generator=g, dtype=torch.float64)
    d = (u / u.norm()) * (hi_t - lo_t) / 2
    worst = {}
    for order in (1, 2, 3):
        ad = net.derivs(X, d, order)[order].detach()
        fd = central_difference(net.forward, X, d, order)
        worst[f"order{order}"] = _rel(ad, fd)

    pts = uniform_points(problem.domain, 12, 4, 4 * problem.dim, layout="random", seed=seed)

    def loss(p):
        return pinn_loss(problem, net, pts, params=p)[0]

    grad = loss_gradient(loss, net)
    # directional checks along the gradient itself and one random direction
    vs = [grad / grad.norm(), torch.randn(grad.shape, generator=g, dtype=torch.float64)]
    h = 1e-5
    errs = []
    with torch.no_grad():
        for v in vs:
            fd = (float(loss(net.params + h * v)) - float(loss(net.params - h * v))) / (2 * h)
            ad = float(grad @ v)
            errs.append(abs(fd - ad) / max(abs(ad), float(grad.norm()) * float(v.norm()) * 1e-3, 1e-12))
    worst["param_grad"] = max(errs)
    return worst


def grad_checks(cases=100, tol=1e-5, problems=PROBLEM_NAMES, seed=0):
    out = []
    for name in problems:
        p = make_problem(name)
        worst = {}
        for k in range(cases):
            for key, v in derivative_case(p, seed + k).items():
                worst[key] = max(worst.get(key, 0.0), v)
        for key, v in worst.items():
            out.append(CheckResult(f"{name} {key}", v, tol, f"{cases} cases"))
    return out


# --------------------------------------------------------------------------
# energy


def energy_checks(tol=1e-6):
    out = []
    wave = make_problem("wave2d")
    rule = QuadratureRule.trapezoid(wave.domain, 201)
    tr = energy_trace(wave, exact_source(wave), rule)
    out.append(CheckResult("wave2d exact relative energy drift", max_energy_error(tr), tol, "201^2 nodes, 11 snapshots"))
    err = max(abs(h - math.pi**2 / 4) for h in tr.energies)
    out.append(CheckResult("wave2d energy vs pi^2/4", err, tol))
    kdv = make_problem("kdv1d")
    h0 = discrete_energy(kdv, initial_source(kdv), 0.0, QuadratureRule.trapezoid(kdv.domain, 1001))
    out.append(CheckResult("kdv1d initial energy vs pi/2", abs(h0 - math.pi / 2), 1e-8))
    for name in ("kg1d", "sg1d"):
        p = make_problem(name)
        tr = energy_trace(p, exact_source(p), QuadratureRule.trapezoid(p.domain, 201))
        out.append(CheckResult(f"{name} exact relative energy drift", max_energy_error(tr), tol))
    return out


# --------------------------------------------------------------------------
# mesh


def linear_monitor_mesh(n_points=1000, budget=1000, seed=0):
    """Train a 1D map on [0, 1] for the monitor ``1 + x``; returns the trained mesh."""
    unit = Domain((0.0,), (1.0,), 1.0)
    mon = FunctionMonitor(unit, lambda X: 1.0 + X[:, 0]).calibrate()
    pts = uniform_points(unit, n_points, 10, 10)
    return train_mesh(MeshMap(unit, seed=seed), mon, pts, budget).mesh


def mesh_errors(mesh, n_xi=101, times=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """Max deviation from ``-1 + sqrt(1 + 3 xi)`` and the equidistribution residual over ``H0``."""
    xi = torch.linspace(0.0, 1.0, n_xi, dtype=torch.float64)
    map_err, eep_err = 0.0, 0.0
    h0 = 1.5
    for t in times:
        Z = torch.stack([xi, torch.full_like(xi, t)], 1)
        with torch.no_grad():
            x = mesh.map_point(Z)[:, 0]
        map_err = max(map_err, float((x - (-1.0 + torch.sqrt(1.0 + 3.0 * xi))).abs().max()))
        cum = x + 0.5 * x**2
        eep_err = max(eep_err, float((cum - xi * h0).abs().max()) / h0)
    return map_err, eep_err


def mesh_checks(tol=5e-2, eep_tol=1e-2, budget=1000):
    mesh = linear_monitor_mesh(budget=budget)
    map_err, eep_err = mesh_errors(mesh)
    return [
        CheckResult("1D map for monitor 1+x vs analytic", map_err, tol, "101 xi, 5 times"),
        CheckResult("equidistribution residual / H0", eep_err, eep_tol),
    ]


CHECKS = {"grad": grad_checks, "energy": energy_checks, "mesh": mesh_checks}


def run_checks(target, **kw):
    try:
        fn = CHECKS[target]
    except KeyError:
        raise ValueError(f"unknown check {target!r}; choose from {', '.join(CHECKS)}") from None
    return fn(**kw)


def summarize(results):
    return all(r.passed for r in results)
