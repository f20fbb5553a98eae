"""PINN loss assembly, two-phase training and the sampler pipelines."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import torch

from .diagnostics import energy_trace, error_report, max_energy_error
from .network import DenseNetwork, NonFiniteLossError
from .optim import LineSearch, TrainState, adam_run, adam_step, lbfgs_run  # noqa: F401
from .problems import DIRICHLET, NEUMANN, PERIODIC, residual, spatial_directions
from .sampling import (
    EmmConfig,
    EnergyMonitor,
    MeshMap,
    density_monitor_correlation,
    map_points,
    train_mesh,
    uniform_points,
    wam_resample,
)

log = logging.getLogger(__name__)


class StructuralError(ValueError):
    """A loss term has positive weight but no points to evaluate it on."""


@dataclass(frozen=True)
class LossWeights:
    pde: tuple = (1.0, 1.0)
    boundary: float = 1.0
    initial: tuple = (1.0, 1.0)

    def __post_init__(self):
        for w in (*self.pde, self.boundary, *self.initial):
            if not w > 0:
                raise ValueError("loss weights must be strictly positive")


@dataclass(frozen=True)
class OptimizerConfig:
    adam_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lbfgs_lr: float | None = None  # None: Adam for the whole budget
    memory: int = 10
    c1: float = 1e-4
    max_backtracks: int = 30
    adam_fraction: float = 0.8
    pretrain: int = 3000
    mesh: int = 3500
    retrain: int = 3500
    energy_tol: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if min(self.pretrain, self.mesh, self.retrain) < 0:
            raise ValueError("iteration budgets must be non-negative")
        if not self.adam_lr > 0 or (self.lbfgs_lr is not None and not self.lbfgs_lr > 0):
            raise ValueError("learning rates must be positive")
        if self.memory < 1:
            raise ValueError("L-BFGS memory must be >= 1")
        if not 0.0 <= self.adam_fraction <= 1.0:
            raise ValueError("adam_fraction must lie in [0, 1]")


# --------------------------------------------------------------------------
# loss


def _first_bad(t):
    bad = (~torch.isfinite(t.detach())).reshape(t.shape[0], -1).any(-1).nonzero()
    return int(bad[0]) if bad.numel() else None


def boundary_residuals(problem, net, points, params=None):
    """Stacked boundary residuals, one entry per boundary point."""
    X, faces = points.boundary, points.faces
    if X.shape[0] == 0:
        return X.new_zeros(0)
    d = problem.dim
    j = _derivs(net, X, spatial_directions(d), 1, params)  # (2, d, N, m)
    u = j[0, 0, :, 0]
    out = []
    for axis in range(d):
        lo_mask, hi_mask = faces == 2 * axis, faces == 2 * axis + 1
        for side, mask in ((0, lo_mask), (1, hi_mask)):
            face = problem.boundary.face(axis, side)
            if face.kind == DIRICHLET:
                out.append(u[mask] - face.data(X[mask]))
            elif face.kind == NEUMANN:
                out.append(j[1, axis, mask, 0] - face.data(X[mask]))
        if problem.boundary.face(axis, 0).kind == PERIODIC:
            if int(lo_mask.sum()) != int(hi_mask.sum()):
                raise StructuralError(f"periodic faces on axis {axis} have unequal point counts")
            ux = j[1, axis, :, 0]
            out.append(u[lo_mask] - u[hi_mask])
            out.append(ux[lo_mask] - ux[hi_mask])
    return torch.cat(out)


def _derivs(net, X, D, order, params):
    return net.derivs(X, D, order) if params is None else net.derivs(X, D, order, params)


def _forward(net, X, params):
    return net.forward(X) if params is None else net.forward(X, params)


def pinn_loss(problem, net, points, weights=LossWeights(), params=None):
    """Weighted mean-squared residual loss; returns ``(total, terms)``."""
    d = problem.dim
    terms, pieces = {}, {}
    wave = problem.is_wave
    if points.interior.shape[0] == 0:
        raise StructuralError("interior loss has positive weight but no interior points")
    r = residual(problem, net, points.interior, params)
    pieces["pde"] = r
    names = ("pde_1", "pde_2") if wave else ("pde",)
    for k, name in enumerate(names):
        terms[name] = (r[:, k] ** 2).mean() * weights.pde[k]
    if points.boundary.shape[0] == 0:
        raise StructuralError("boundary loss has positive weight but no boundary points")
    rb = boundary_residuals(problem, net, points, params)
    pieces["boundary"] = rb
    terms["boundary"] = (rb**2).mean() * weights.boundary
    if points.initial.shape[0] == 0:
        raise StructuralError("initial loss has positive weight but no initial points")
    Xi = points.initial
    out = _forward(net, Xi, params)
    ri = out[:, 0] - problem.u0(Xi[:, :d])
    pieces["initial_u"] = ri
    if wave:
        rv = out[:, 1] - problem.u1(Xi[:, :d])
        pieces["initial_v"] = rv
        terms["initial_u"] = (ri**2).mean() * weights.initial[0]
        terms["initial_v"] = (rv**2).mean() * weights.initial[1]
    else:
        terms["initial"] = (ri**2).mean() * weights.initial[0]
    total = sum(terms.values())
    if not bool(torch.isfinite(total.detach())):
        for name, t in pieces.items():
            idx = _first_bad(t)
            if idx is not None:
                raise NonFiniteLossError(f"non-finite {name} residual at point {idx}", idx, name)
        raise NonFiniteLossError("non-finite loss")
    return total, {k: float(v.detach()) for k, v in terms.items()}


# --------------------------------------------------------------------------
# training phases


@dataclass
class Phase:
    name: str
    kind: str  # "solution" or "mesh"
    history: list
    seconds: float = 0.0
    aborted: str | None = None

    @property
    def iterations(self):
        return len(self.history)


def train_phase(problem, net, points, weights, cfg, budget, callback=None):
    """Adam then L-BFGS on ``pinn_loss``; returns ``(trained_net, history)``.

    Moments and curvature pairs start fresh, so a warm start transfers only
    the parameters.
    """
    state = TrainState.fresh(net.params)

    def objective(p):
        return pinn_loss(problem, net, points, weights, p)

    n_adam = budget if cfg.lbfgs_lr is None else int(round(budget * cfg.adam_fraction))
    adam_run(state, objective, n_adam, cfg.adam_lr, cfg.beta1, cfg.beta2, cfg.eps, callback)
    n_lbfgs = budget - n_adam
    if n_lbfgs > 0:
        lbfgs_run(
            state,
            objective,
            n_lbfgs,
            lr=cfg.lbfgs_lr,
            memory=cfg.memory,
            line_search=LineSearch(cfg.c1, 0.5, cfg.max_backtracks),
        )
    return net.copy(state.params), state.history


# --------------------------------------------------------------------------
# pipelines


@dataclass
class RunReport:
    problem: str
    sampler: str
    seed: int
    phases: list = field(default_factory=list)
    point_sets: dict = field(default_factory=dict)
    energy: object = None
    error: object = None
    net: DenseNetwork | None = None
    meshes: list = field(default_factory=list)
    correlations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    aborted: str | None = None
    info: dict = field(default_factory=dict)

    @property
    def loss_history(self):
        """``(iteration, total, terms)`` over all solution-training phases."""
        rows, it = [], 0
        for ph in self.phases:
            if ph.kind != "solution":
                continue
            for total, terms in ph.history:
                rows.append((it, total, terms))
                it += 1
        return rows

    @property
    def relative_l2(self):
        return None if self.error is None else self.error.relative_l2

    @property
    def max_energy_error(self):
        return None if self.energy is None else max_energy_error(self.energy)


@dataclass(frozen=True)
class PipelineConfig:
    n_interior: int = 1000
    n_initial: int = 100
    n_boundary: int = 100
    hidden: tuple = (40, 40, 40, 40, 40)
    mesh_hidden: tuple = (20, 20, 20, 20)
    rounds: int = 1
    wam_rounds: int = 1
    wam_k: float = 1.0
    layout: str = "grid"
    normalizer: str = "product"
    emm: EmmConfig = EmmConfig()
    weights: LossWeights = LossWeights()
    optimizer: OptimizerConfig = OptimizerConfig()
    energy_snapshots: int = 11
    quadrature: int | None = None
    test_grid: tuple | None = None


def solution_network(problem, hidden, seed):
    lo, hi = problem.domain.space_time_box()
    return DenseNetwork([problem.dim + 1, *hidden, problem.n_components], lower=lo, upper=hi, seed=seed)


def _diagnose(report, problem, net, pc):
    from .diagnostics import QuadratureRule

    report.net = net
    rule = QuadratureRule.trapezoid(problem.domain, pc.quadrature)
    try:
        report.energy = energy_trace(problem, net, rule, snapshots=pc.energy_snapshots)
    except Exception as exc:  # pragma: no cover - diagnostics must not lose the run
        report.warnings.append(f"energy trace failed: {exc}")
    try:
        report.error = error_report(problem, net, pc.test_grid)
    except LookupError as exc:
        report.warnings.append(str(exc))


def _solution_phase(report, name, problem, net, points, pc, budget):
    t0 = time.perf_counter()
    try:
        net, hist = train_phase(problem, net, points, pc.weights, pc.optimizer, budget)
        report.phases.append(Phase(name, "solution", hist, time.perf_counter() - t0))
    except NonFiniteLossError as exc:
        report.phases.append(Phase(name, "solution", [], time.perf_counter() - t0, str(exc)))
        report.aborted = f"{name}: {exc}"
    return net


def run_uniform(problem, pc, seed=0, budget=None):
    """Plain PINN on the uniform layout for ``budget`` iterations."""
    opt = pc.optimizer
    budget = opt.pretrain + pc.rounds * opt.retrain if budget is None else budget
    report = RunReport(problem.name, "uniform", seed)
    points = uniform_points(problem.domain, pc.n_interior, pc.n_initial, pc.n_boundary, pc.layout, seed)
    report.warnings += list(points.warnings)
    report.point_sets["initial"] = points
    net = solution_network(problem, pc.hidden, seed)
    net = _solution_phase(report, "train", problem, net, points, pc, budget)
    _diagnose(report, problem, net, pc)
    return report


def run_wam(problem, pc, seed=0):
    """Pre-train, then ``wam_rounds`` rounds of resampling and warm-started training.

    The re-training budget ``rounds * retrain`` is split evenly over the
    resampling rounds so the total matches the other samplers.
    """
    opt = pc.optimizer
    report = RunReport(problem.name, "wam", seed)
    points = uniform_points(problem.domain, pc.n_interior, pc.n_initial, pc.n_boundary, pc.layout, seed)
    report.warnings += list(points.warnings)
    report.point_sets["initial"] = points
    net = solution_network(problem, pc.hidden, seed)
    net = _solution_phase(report, "pretrain", problem, net, points, pc, opt.pretrain)
    total = pc.rounds * opt.retrain
    n = max(1, pc.wam_rounds)
    for r in range(n):
        if report.aborted:
            break
        share = total // n + (1 if r < total % n else 0)
        X, info = wam_resample(net, problem.domain, pc.n_interior, pc.wam_k, seed * 1000 + r)
        report.info.setdefault("wam", []).append(info)
        points = points.with_interior(X)
        report.point_sets[f"round{r + 1}"] = points
        net = _solution_phase(report, f"retrain{r + 1}", problem, net, points, pc, share)
    _diagnose(report, problem, net, pc)
    return report


def run_eems(problem, pc, seed=0, mesh_override=None):
    """Pre-train, then alternate mesh moving and warm-started re-training.

    Stops early when the relative energy error of the current network stays
    below ``energy_tol`` at every snapshot.  ``mesh_override`` (a callable
    returning a :class:`MeshMap`) replaces mesh training, for testing.
    """
    from .diagnostics import QuadratureRule

    opt = pc.optimizer
    report = RunReport(problem.name, "eems", seed)
    base = uniform_points(problem.domain, pc.n_interior, pc.n_initial, pc.n_boundary, pc.layout, seed)
    report.warnings += list(base.warnings)
    report.point_sets["initial"] = base
    net = solution_network(problem, pc.hidden, seed)
    net = _solution_phase(report, "pretrain", problem, net, base, pc, opt.pretrain)
    rule = QuadratureRule.trapezoid(problem.domain, pc.quadrature)
    for r in range(pc.rounds):
        if report.aborted:
            break
        trace = energy_trace(problem, net, rule, snapshots=pc.energy_snapshots)
        err = max_energy_error(trace)
        report.info.setdefault("energy_checks", []).append(err)
        if err < opt.energy_tol:
            log.info("energy error %.3e below tolerance; stopping", err)
            break
        t0 = time.perf_counter()
        monitor = EnergyMonitor(problem, net.copy(), c_min=pc.emm.c_min).calibrate()
        if mesh_override is not None:
            mesh, hist = mesh_override(), []
        else:
            mesh0 = MeshMap(problem.domain, pc.mesh_hidden, pc.normalizer, seed=seed + 7919 * (r + 1))
            try:
                res = train_mesh(
                    mesh0,
                    monitor,
                    base,
                    opt.mesh,
                    lr=opt.adam_lr,
                    lbfgs_lr=opt.lbfgs_lr,
                    adam_fraction=opt.adam_fraction,
                    cfg=pc.emm,
                )
            except (NonFiniteLossError, ArithmeticError, ValueError) as exc:
                report.phases.append(Phase(f"mesh{r + 1}", "mesh", [], time.perf_counter() - t0, str(exc)))
                report.aborted = f"mesh{r + 1}: {exc}"
                break
            mesh, hist = res.mesh, res.history
        report.phases.append(Phase(f"mesh{r + 1}", "mesh", hist, time.perf_counter() - t0))
        report.meshes.append(mesh)
        points = map_points(mesh, base)
        report.point_sets[f"round{r + 1}"] = points
        try:
            report.correlations.append(density_monitor_correlation(mesh, monitor, points.interior))
        except Exception as exc:  # pragma: no cover
            report.warnings.append(f"density correlation failed: {exc}")
        net = _solution_phase(report, f"retrain{r + 1}", problem, net, points, pc, opt.retrain)
    _diagnose(report, problem, net, pc)
    return report


SAMPLERS = {"uniform": run_uniform, "wam": run_wam, "eems": run_eems}


def run_sampler(problem, pc, sampler, seed=0):
    try:
        fn = SAMPLERS[sampler]
    except KeyError:
        raise ValueError(f"unknown sampler {sampler!r}; expected one of {', '.join(SAMPLERS)}") from None
    return fn(problem, pc, seed)


def eems_pipeline(problem, pc, seed=0):
    return run_eems(problem, pc, seed)
