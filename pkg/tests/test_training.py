import math

import pytest
import torch

from eems.network import DenseNetwork, NonFiniteLossError
from eems.optim import TrainState, adam_run, adam_step, lbfgs_run
from eems.problems import PROBLEM_NAMES, exact_source, make_problem
from eems.sampling import MeshMap, uniform_points
from eems.training import (
    LossWeights,
    OptimizerConfig,
    PipelineConfig,
    StructuralError,
    pinn_loss,
    run_eems,
    solution_network,
    train_phase,
)

from fd import param_fd, rel_err

CLOSED_FORM = ["kg1d", "kg1d_forced", "sg1d", "wave2d", "sg2d"]
SIZES = {1: (400, 50, 50), 2: (1000, 100, 200)}


def points_for(problem, layout="grid", seed=0):
    return uniform_points(problem.domain, *SIZES[problem.dim], layout=layout, seed=seed)


# loss -------------------------------------------------------------------------


@pytest.mark.parametrize("name", CLOSED_FORM)
def test_exact_solution_loss_terms_vanish(name):
    p = make_problem(name)
    total, terms = pinn_loss(p, exact_source(p), points_for(p, "random", 1))
    assert all(v < 1e-10 for v in terms.values()), terms
    assert float(total.detach()) < 1e-10


def test_all_unit_residuals_give_term_count():
    p = make_problem("kdv1d")
    net = DenseNetwork([2, 1], params=torch.tensor([0.0, 1.0, 0.0]))  # u = t
    pts = uniform_points(p.domain, 16, 2, 2)
    pts = pts.__class__(
        pts.interior,
        torch.tensor([[0.0, -1.0], [math.pi, -1.0]]),  # u = -1 where sin x = 0
        pts.boundary,
        pts.faces,
    )
    # u_t = 1 so the PDE residual is 1; periodic differences are 0
    total, terms = pinn_loss(p, net, pts)
    assert terms["pde"] == pytest.approx(1.0)
    assert terms["initial"] == pytest.approx(1.0, abs=1e-14)
    assert terms["boundary"] == 0.0
    assert float(total.detach()) == pytest.approx(2.0)


def test_boundary_weight_is_linear():
    p = make_problem("kg1d")
    net = solution_network(p, (8, 8), seed=1)
    pts = points_for(p)
    _, a = pinn_loss(p, net, pts, LossWeights())
    _, b = pinn_loss(p, net, pts, LossWeights(boundary=2.0))
    assert b["boundary"] == pytest.approx(2 * a["boundary"], rel=1e-14)
    for k in a:
        if k != "boundary":
            assert a[k] == b[k]


def test_empty_category_is_structural_error():
    p = make_problem("kg1d")
    pts = uniform_points(p.domain, 100, 10, 0)
    with pytest.raises(StructuralError):
        pinn_loss(p, solution_network(p, (4,), 0), pts)


def test_weights_must_be_positive():
    with pytest.raises(ValueError):
        LossWeights(boundary=0.0)


def test_non_finite_loss_reports_point():
    p = make_problem("wave2d")
    pts = points_for(p)
    bad = pts.interior.clone()
    bad[7, 0] = float("nan")
    pts = pts.with_interior(bad)
    with pytest.raises(NonFiniteLossError) as info:
        pinn_loss(p, solution_network(p, (4,), 0), pts)
    assert info.value.point_index == 7 and info.value.term == "pde"


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_loss_gradient_matches_finite_differences(name):
    p = make_problem(name)
    net = solution_network(p, (5, 5), seed=2)
    n = {1: (20, 6, 6), 2: (27, 4, 8)}[p.dim]
    pts = uniform_points(p.domain, *n, layout="random", seed=3)

    def loss(params):
        return pinn_loss(p, net, pts, params=params)[0]

    from eems.network import loss_gradient

    ad = loss_gradient(loss, net)
    fd = param_fd(loss, net.params, h=1e-6)
    assert rel_err(ad, fd) < 1e-5


# optimizers ----------------------------------------------------------------------


def test_adam_zero_gradient_leaves_parameters():
    s = TrainState.fresh(torch.tensor([1.0, -2.0]))
    adam_step(s, torch.zeros(2), 0.1)
    assert s.params.tolist() == [1.0, -2.0]


def test_adam_first_step():
    s = TrainState.fresh(torch.tensor([1.0]))
    adam_step(s, torch.tensor([2.0]), 0.1)
    assert float(s.params) == pytest.approx(0.9, abs=1e-8)


def test_adam_rejects_non_finite_gradient():
    with pytest.raises(NonFiniteLossError):
        adam_step(TrainState.fresh(torch.zeros(1)), torch.tensor([float("inf")]), 0.1)


def test_adam_runs_are_reproducible():
    def obj(p):
        v = ((p - torch.arange(3.0)) ** 4).sum()
        return v, {"v": float(v.detach())}

    a = adam_run(TrainState.fresh(torch.zeros(3)), obj, 30, 0.05)
    b = adam_run(TrainState.fresh(torch.zeros(3)), obj, 30, 0.05)
    assert torch.equal(a.params, b.params) and a.history == b.history


def _quadratic():
    g = torch.Generator().manual_seed(0)
    M = torch.randn(10, 10, generator=g)
    A = M @ M.T + torch.eye(10)
    b = torch.randn(10, generator=g)

    def obj(p):
        v = 0.5 * p @ A @ p - b @ p
        return v, {"v": float(v.detach())}

    return A, b, obj


def test_lbfgs_solves_quadratic():
    A, b, obj = _quadratic()
    s = lbfgs_run(TrainState.fresh(torch.zeros(10)), obj, 50, lr=1.0)
    assert float((A @ s.params - b).norm()) < 1e-8
    vals = [h[0] for h in s.history]
    assert all(b2 <= a2 for a2, b2 in zip(vals, vals[1:]))


def test_lbfgs_zero_budget_and_stationary_start():
    A, b, obj = _quadratic()
    s = lbfgs_run(TrainState.fresh(torch.zeros(10)), obj, 0)
    assert s.params.tolist() == [0.0] * 10 and not s.history
    x = torch.linalg.solve(A, b)
    s = lbfgs_run(TrainState.fresh(x), lambda p: ((p * 0).sum(), {}), 10)
    assert torch.equal(s.params, x) and not s.history


# phases and pipelines ----------------------------------------------------------


def test_zero_budget_phase_is_identity():
    p = make_problem("kg1d")
    net = solution_network(p, (6,), 0)
    out, hist = train_phase(p, net, points_for(p), LossWeights(), OptimizerConfig(), 0)
    assert torch.equal(out.params, net.params) and hist == []


def test_two_phase_training_runs_both_optimisers():
    p = make_problem("kg1d_forced")
    net = solution_network(p, (8, 8), 0)
    cfg = OptimizerConfig(adam_lr=1e-3, lbfgs_lr=0.5)
    out, hist = train_phase(p, net, uniform_points(p.domain, 100, 10, 10), LossWeights(), cfg, 30)
    assert 24 < len(hist) <= 30
    lb = [h[0] for h in hist[24:]]
    assert all(b <= a for a, b in zip(lb, lb[1:]))
    assert hist[-1][0] <= hist[0][0]


def small_config(**opt):
    base = dict(pretrain=15, mesh=10, retrain=15)
    base.update(opt)
    return PipelineConfig(
        n_interior=100, n_initial=10, n_boundary=10, hidden=(8, 8), mesh_hidden=(6,),
        quadrature=51, test_grid=(32, 11), optimizer=OptimizerConfig(**base),
    )


def test_infinite_tolerance_stops_after_pretraining():
    p = make_problem("kg1d")
    r = run_eems(p, small_config(energy_tol=math.inf))
    assert [ph.name for ph in r.phases] == ["pretrain"]


def test_one_round_structure():
    p = make_problem("kg1d")
    r = run_eems(p, small_config(energy_tol=0.0))
    kinds = [ph.kind for ph in r.phases]
    assert kinds == ["solution", "mesh", "solution"]
    assert len(r.loss_history) == 30
    assert "round1" in r.point_sets


def test_frozen_identity_mesh_reproduces_uniform_points():
    p = make_problem("kg1d")
    pc = small_config(energy_tol=0.0)
    r = run_eems(p, pc, mesh_override=lambda: MeshMap(p.domain, (4,), seed=0))
    assert torch.equal(r.point_sets["round1"].interior, r.point_sets["initial"].interior)


def test_pipeline_is_deterministic():
    p = make_problem("kg1d")
    a = run_eems(p, small_config(energy_tol=0.0), seed=3)
    b = run_eems(p, small_config(energy_tol=0.0), seed=3)
    assert a.loss_history == b.loss_history
    assert torch.equal(a.net.params, b.net.params)
