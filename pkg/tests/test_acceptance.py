"""Acceptance criteria, each at its stated tolerance with one verdict line.

Criteria 6-9 train full networks and take tens of minutes on one CPU core.
"""

import math
import time
from statistics import median

import pytest
import torch

from eems import cli
from eems.checks import grad_checks, linear_monitor_mesh, mesh_errors
from eems.diagnostics import QuadratureRule, discrete_energy, energy_trace
from eems.problems import Domain, exact_source, initial_source, make_problem
from eems.sampling import NORMALIZERS, MeshMap, map_points, uniform_points
from eems.training import pinn_loss


def test_1_derivatives_match_finite_differences(verdict):
    t0 = time.perf_counter()
    results = grad_checks(cases=100, tol=1e-5)
    elapsed = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.value)
    ok = all(r.passed for r in results) and elapsed < 60
    verdict(1, ok, f"worst relative error {worst.value:.2e} ({worst.name}) over 100 cases x 6 benchmarks "
                   f"< 1e-5; {elapsed:.0f}s < 60s")
    assert ok, [r.line() for r in results if not r.passed]


def test_2_exact_solutions_zero_every_loss_term(verdict):
    worst, where = 0.0, ""
    for name in ("kg1d", "kg1d_forced", "sg1d", "wave2d", "sg2d"):
        p = make_problem(name)
        n = (1000, 100, 100) if p.dim == 1 else (1000, 100, 200)
        pts = uniform_points(p.domain, *n, layout="random", seed=11)
        _, terms = pinn_loss(p, exact_source(p), pts)
        for k, v in terms.items():
            if v >= worst:
                worst, where = v, f"{name}/{k}"
    ok = worst < 1e-10
    verdict(2, ok, f"largest exact-solution loss term {worst:.2e} ({where}) < 1e-10")
    assert ok


def test_3_energy_quadrature(verdict):
    wave = make_problem("wave2d")
    tr = energy_trace(wave, exact_source(wave), QuadratureRule.trapezoid(wave.domain, 201), snapshots=11)
    wave_err = max(abs(h - math.pi**2 / 4) for h in tr.energies)
    kdv = make_problem("kdv1d")
    h0 = discrete_energy(kdv, initial_source(kdv), 0.0, QuadratureRule.trapezoid(kdv.domain, 1001))
    kdv_err = abs(h0 - math.pi / 2)
    ok = len(tr.energies) == 11 and wave_err < 1e-6 and kdv_err < 1e-8
    verdict(3, ok, f"wave |H_d - pi^2/4| = {wave_err:.1e} < 1e-6 at 11 snapshots; "
                   f"KdV |H_0 - pi/2| = {kdv_err:.1e} < 1e-8")
    assert ok


def test_4_equidistribution_oracle(verdict):
    t0 = time.perf_counter()
    mesh = linear_monitor_mesh(n_points=1000, budget=1000, seed=0)
    map_err, eep_err = mesh_errors(mesh, n_xi=101)
    elapsed = time.perf_counter() - t0
    ok = map_err < 5e-2 and eep_err < 1e-2 and elapsed < 120
    verdict(4, ok, f"map error {map_err:.1e} < 5e-2, equidistribution residual {eep_err:.1e} H0 < 1e-2 H0; "
                   f"{elapsed:.0f}s < 120s")
    assert ok


def test_5_boundary_points_are_fixed(verdict):
    g = torch.Generator().manual_seed(5)
    trials, worst = 0, 0.0
    domains = [Domain((-10.0,), (10.0,), 12.0), Domain((-7.0, -7.0), (7.0, 7.0), 10.0)]
    for dom in domains:
        pts = uniform_points(dom, 16, 4, 1000, layout="random", seed=1)
        for kind in NORMALIZERS:
            for s in range(17):
                mesh = MeshMap(dom, (8, 8), kind, seed=s)
                mesh.net.params = 3.0 * torch.randn(mesh.net.n_params, generator=g, dtype=torch.float64)
                with torch.no_grad():
                    moved = mesh.map_point(pts.boundary)
                worst = max(worst, float((moved - pts.boundary).abs().max()))
                same = map_points(mesh, pts).boundary
                worst = max(worst, float((same - pts.boundary).abs().max()))
                trials += pts.boundary.shape[0]
    ok = worst == 0.0 and trials >= 100_000
    verdict(5, ok, f"max |map(b) - b| = {worst:.1e} over {trials} boundary trials (3 normalizers, 1D and 2D)")
    assert ok


def test_10_loss_history_is_bit_identical(verdict, tmp_path):
    args = ["run", "--problem", "kg1d", "--sampler", "eems", "--seed", "3", "--no-plots",
            "--set", "optimizer.pretrain=40", "--set", "optimizer.mesh=20", "--set", "optimizer.retrain=40",
            "--set", "optimizer.energy_tol=0.0", "--set", "network.solution=[20, 20]",
            "--set", "network.mesh=[10, 10]", "--set", "points.interior=200"]
    codes = [cli.main([*args, "--out", str(tmp_path / k)]) for k in ("a", "b")]
    a = (tmp_path / "a" / "kg1d_eems_s3" / "loss.csv").read_bytes()
    b = (tmp_path / "b" / "kg1d_eems_s3" / "loss.csv").read_bytes()
    ok = codes == [0, 0] and a == b and len(a.splitlines()) == 81
    verdict(10, ok, f"two seeded EEMS runs give identical loss CSVs ({len(a.splitlines()) - 1} rows, "
                    f"{len(a)} bytes)")
    assert ok


# --------------------------------------------------------------------------
# reproduction runs: Table 1 shapes and budgets from the bundled configs

SEEDS = (0, 1, 2, 3, 4)
CPU_BUDGET_6 = 1.1 * 30 * 60  # "about 30 minutes", read as at most 10% over


def _runs(name, samplers):
    from eems.config import bundled
    from eems.training import run_sampler

    cfg = bundled(name)
    problem, pc = cfg.build_problem(), cfg.pipeline()
    out, t0 = {s: [] for s in samplers}, time.perf_counter()
    for seed in SEEDS:
        for s in samplers:
            out[s].append(run_sampler(problem, pc, s, seed=seed))
    out["budget"] = pc.optimizer.pretrain + pc.rounds * pc.optimizer.retrain
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def kg1d_runs():
    return _runs("kg1d", ("uniform", "eems"))


def _fmt(values):
    return "[" + ", ".join(f"{v:.2e}" for v in values) + "]"


def test_6_example_one_accuracy(kg1d_runs, verdict):
    runs, elapsed = kg1d_runs
    eems = [r.relative_l2 for r in runs["eems"]]
    uni = [r.relative_l2 for r in runs["uniform"]]
    budget = runs["budget"]
    same_budget = all(len(r.loss_history) == budget for r in runs["uniform"]) and all(
        len(r.loss_history) <= budget for r in runs["eems"]
    )
    m_e, m_u = median(eems), median(uni)
    ok = m_e < 5e-2 and m_e < m_u and same_budget and elapsed <= CPU_BUDGET_6
    verdict(6, ok, f"median relative L2 EEMS {m_e:.3e} (< 5e-2) vs uniform {m_u:.3e} at a {budget}-iteration "
                   f"budget; EEMS {_fmt(eems)}, uniform {_fmt(uni)}; {elapsed / 60:.1f} min <= 33 min")
    assert not any(r.aborted for r in runs["eems"] + runs["uniform"])
    assert ok


def test_7_example_one_energy(kg1d_runs, verdict):
    runs, _ = kg1d_runs
    eems = [r.max_energy_error for r in runs["eems"]]
    uni = [r.max_energy_error for r in runs["uniform"]]
    ok = median(eems) <= median(uni)
    verdict(7, ok, f"median max relative energy error EEMS {median(eems):.3e} <= uniform {median(uni):.3e}; "
                   f"EEMS {_fmt(eems)}, uniform {_fmt(uni)}")
    assert ok


def test_8_points_concentrate_where_energy_is_high(kg1d_runs, verdict):
    runs, _ = kg1d_runs
    rho = [r.correlations[0] for r in runs["eems"] if r.correlations]
    ok = len(rho) == len(SEEDS) and median(rho) > 0.3
    verdict(8, ok, f"median density-monitor Spearman correlation {median(rho):.3f} > 0.3; "
                   f"per seed [{', '.join(f'{v:.3f}' for v in rho)}]")
    assert ok


def test_9_forced_example_robustness(verdict):
    runs, elapsed = _runs("kg1d_forced", ("eems",))
    l2 = [r.relative_l2 for r in runs["eems"]]
    aborted = [r.aborted for r in runs["eems"] if r.aborted]
    ok = not aborted and median(l2) < 5e-2
    verdict(9, ok, f"EEMS completed {len(l2) - len(aborted)}/5 runs, median relative L2 {median(l2):.3e} < 5e-2; "
                   f"{_fmt(l2)}; {elapsed / 60:.1f} min")
    assert ok
