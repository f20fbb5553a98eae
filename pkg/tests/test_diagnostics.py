import math

import numpy as np
import pytest
import torch

from eems.diagnostics import (
    EnergyTrace,
    QuadratureRule,
    UndefinedReferenceError,
    absolute_energy_drift,
    discrete_energy,
    energy_trace,
    error_report,
    evaluation_grid,
    max_energy_error,
    relative_energy_error,
    relative_l2,
)
from eems.problems import Domain, FunctionSource, exact_source, make_problem


@pytest.mark.parametrize("dim", [1, 2])
def test_trapezoid_is_exact_for_multilinear(dim):
    dom = Domain([-1.0] * dim, [2.0] * dim, 1.0) if dim == 2 else Domain([-1.0], [2.0], 1.0)
    rule = QuadratureRule.trapezoid(dom, 7)
    f = 3.0 + rule.nodes.sum(1) + rule.nodes.prod(1)
    exact = {1: 3 * 3 + 1.5 + 1.5, 2: 27 + 2 * 4.5 + 2.25}[dim]
    assert rule.integrate(f) == pytest.approx(exact, rel=1e-13)


def test_trapezoid_converges_at_second_order():
    dom = Domain([0.0], [1.0], 1.0)
    errs = []
    for n in (21, 41, 81):
        rule = QuadratureRule.trapezoid(dom, n)
        errs.append(abs(rule.integrate(torch.exp(rule.nodes[:, 0])) - (math.e - 1)))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(r - 2) < 0.1 for r in rates), rates


def test_too_few_nodes_rejected():
    with pytest.raises(ValueError):
        QuadratureRule.trapezoid(Domain([0.0], [1.0], 1.0), 1)


def test_relative_l2_values():
    ref = torch.randn(50, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    assert relative_l2(ref, ref) == 0.0
    assert relative_l2(1.01 * ref, ref) == pytest.approx(0.01, rel=1e-12)


def test_relative_l2_is_permutation_invariant():
    g = torch.Generator().manual_seed(1)
    a = torch.randn(40, generator=g, dtype=torch.float64)
    b = torch.randn(40, generator=g, dtype=torch.float64)
    perm = torch.randperm(40, generator=g)
    assert relative_l2(a[perm], b[perm]) == pytest.approx(relative_l2(a, b), rel=1e-14)


def test_relative_l2_zero_reference():
    with pytest.raises(UndefinedReferenceError):
        relative_l2(torch.ones(3), torch.zeros(3))


def test_energy_error_scales_with_offset():
    trace = EnergyTrace([0.0, 1.0], [2.0, 2.0 + 1e-3], 2.0)
    assert relative_energy_error(trace) == pytest.approx([0.0, 5e-4])
    trace2 = EnergyTrace([0.0, 1.0], [2.0, 2.0 + 2e-3], 2.0)
    assert max_energy_error(trace2) == pytest.approx(2 * max_energy_error(trace))


def test_zero_reference_energy():
    trace = EnergyTrace([0.0, 1.0], [0.0, 0.1], 0.0, flagged=True)
    with pytest.raises(UndefinedReferenceError):
        relative_energy_error(trace)
    assert absolute_energy_drift(trace) == [0.0, 0.1]
    assert max_energy_error(trace) == 0.1


def test_zero_problem_energy_trace_is_flagged():
    p = make_problem("wave2d")
    zero = FunctionSource([lambda X: X[:, 0] * 0.0, lambda X: X[:, 0] * 0.0], 3)
    p0 = type(p)(**{**p.__dict__, "u0": lambda X: X[:, 0] * 0.0, "params": dict(p.params)})
    tr = energy_trace(p0, zero, QuadratureRule.trapezoid(p0.domain, 11), times=[0.0, 0.5])
    assert tr.flagged and tr.energies == [0.0, 0.0]


@pytest.mark.parametrize("name", ["kg1d", "sg1d", "kdv1d", "wave2d"])
def test_exact_solutions_conserve_discrete_energy(name):
    p = make_problem(name)
    tr = energy_trace(p, exact_source(p), QuadratureRule.trapezoid(p.domain, 101 if p.dim == 2 else None), snapshots=5)
    assert max_energy_error(tr) < 1e-6


def test_wave_energy_matches_closed_form():
    p = make_problem("wave2d")
    h = discrete_energy(p, exact_source(p), 0.3, QuadratureRule.trapezoid(p.domain, 201))
    assert h == pytest.approx(math.pi**2 / 4, abs=1e-10)


def test_evaluation_grid_defaults():
    g1, r1 = evaluation_grid(make_problem("kg1d").domain)
    g2, r2 = evaluation_grid(make_problem("wave2d").domain)
    assert r1 == (256, 101) and g1.shape == (256 * 101, 2)
    assert r2 == (101, 101, 11) and g2.shape == (101 * 101 * 11, 3)


def test_error_report_of_exact_source_is_zero():
    p = make_problem("sg1d")
    rep = error_report(p, exact_source(p), resolution=(32, 5))
    assert rep.relative_l2 == 0.0 and rep.max_abs == 0.0
    assert np.allclose(rep.abs_error.numpy(), 0.0)
