import csv
import json
from dataclasses import replace

import pytest

from eems import cli
from eems.config import ConfigError, ExperimentConfig, bundled, load, parse
from eems.problems import PROBLEM_NAMES
from eems.report import write_report
from eems.training import RunReport

TINY = [
    "--set", "points.interior=64",
    "--set", "points.initial=8",
    "--set", "points.boundary=8",
    "--set", "network.solution=[6, 6]",
    "--set", "network.mesh=[4]",
    "--set", "diagnostics.quadrature=21",
    "--set", "diagnostics.test_grid=[16, 5]",
]


# configuration -------------------------------------------------------------


TABLE_SHAPES = {
    "kg1d": ((40,) * 5, (20,) * 4),
    "kg1d_forced": ((20,) * 5, (20,) * 4),
    "sg1d": ((50,) * 5, (20,) * 4),
    "kdv1d": ((80,) * 8, (30,) * 4),
    "wave2d": ((50,) * 6, (40,) * 4),
    "sg2d": ((40,) * 5, (20,) * 4),
}


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_bundled_configs_have_table_shapes(name):
    cfg = bundled(name)
    assert cfg.problem.name == name
    assert (cfg.network.solution, cfg.network.mesh) == TABLE_SHAPES[name]


def test_example_one_budgets():
    o = bundled("kg1d").optimizer
    assert (o.pretrain, o.mesh, o.retrain, o.adam_lr, o.lbfgs_lr) == (3000, 3500, 3500, 1e-3, 0.0)


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_config_round_trip(name, tmp_path):
    cfg = bundled(name).with_overrides({"run.seed": 5, "problem.params.T": 0.5} if name == "kdv1d" else {"run.seed": 5})
    path = tmp_path / "c.toml"
    cfg.save(path)
    again = load(path)
    assert again == cfg
    assert parse(again.dumps()).to_dict() == cfg.to_dict()


def test_defaults_are_valid():
    ExperimentConfig().validate()
    assert parse("") == ExperimentConfig()


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[optimizer]\nlearning_rate = 1.0\n", "learning_rate"),
        ("[nonsense]\n", "nonsense"),
        ('[run]\nsampler = "magic"\n', "run.sampler"),
        ("[points]\ninterior = 1.5\n", "points.interior"),
        ("[optimizer]\npretrain = -1\n", "non-negative"),
        ('[problem]\nname = "kg1d"\n[problem.params]\nc = 0.05\n', "c^2 - alpha^2"),
        ("[network]\nsolution = []\n", "network.solution"),
        ("[diagnostics]\ntest_grid = [10, 10, 10]\n", "test_grid"),
        ("not toml ===", "invalid TOML"),
    ],
)
def test_invalid_configs_name_the_problem(text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("^", r"\^")):
        parse(text)


def test_pipeline_mapping():
    pc = bundled("kg1d_forced").pipeline()
    assert pc.hidden == (20,) * 5 and pc.optimizer.lbfgs_lr == 0.5
    assert bundled("kg1d").pipeline().optimizer.lbfgs_lr is None


# report ----------------------------------------------------------------------


def test_empty_report_writes_header_only_csvs(tmp_path):
    paths = write_report(RunReport("kg1d", "uniform", 0), tmp_path, plots=False)
    for key, header in (("loss", "iter,total"), ("energy", "t,H_d,dH_rel"), ("error", "x1,t,u_exact,u_pred,abs_err")):
        assert paths[key].read_text().splitlines() == [header]
    assert not list(tmp_path.glob("*.png"))


def test_report_to_unwritable_location_names_path(tmp_path):
    from eems.report import ReportError

    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ReportError, match="file"):
        write_report(RunReport("kg1d", "uniform", 0), blocker / "sub", plots=False)


# commands ------------------------------------------------------------------------


def test_run_zero_iterations_writes_initial_diagnostics(tmp_path, capsys):
    code = cli.main(["run", "--problem", "kg1d", "--sampler", "uniform", "--iters", "0", "--out", str(tmp_path), *TINY])
    assert code == 0
    run = tmp_path / "kg1d_uniform_s0"
    assert (run / "loss.csv").read_text().splitlines() == ["iter,total"]
    rows = list(csv.reader(open(run / "energy.csv")))
    assert rows[0] == ["t", "H_d", "dH_rel"] and len(rows) == 12
    assert len(list(csv.reader(open(run / "error.csv")))) == 1 + 16 * 5
    assert json.loads((run / "summary.json").read_text())["iterations"] == 0
    assert list(run.glob("*.png"))


def test_run_eems_with_plots_disabled(tmp_path):
    code = cli.main(["run", "--problem", "kg1d", "--sampler", "eems", "--seed", "7", "--iters", "3",
                     "--out", str(tmp_path), "--no-plots", "--set", "optimizer.energy_tol=0.0", *TINY])
    assert code == 0
    run = tmp_path / "kg1d_eems_s7"
    for f in ("loss.csv", "energy.csv", "error.csv", "points_round1.csv", "mesh_round1.csv", "config.toml"):
        assert (run / f).exists(), f
    assert not list(run.glob("*.png"))
    assert len((run / "loss.csv").read_text().splitlines()) == 1 + 6
    assert load(run / "config.toml").run.seed == 7


def test_unknown_key_exits_with_config_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[optimizer]\nwarp_speed = 9\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "warp_speed" in capsys.readouterr().err


def test_bad_arguments_exit_with_config_code(capsys):
    assert cli.main(["run", "--sampler", "nope"]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_runtime_abort_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(cli, "run_sampler", boom)
    assert cli.main(["run", "--iters", "0", "--out", str(tmp_path), *TINY]) == 3


def test_loss_csv_is_deterministic(tmp_path):
    args = ["run", "--problem", "sg1d", "--sampler", "eems", "--iters", "4", "--no-plots",
            "--set", "optimizer.energy_tol=0.0", *TINY]
    assert cli.main([*args, "--out", str(tmp_path / "a")]) == 0
    assert cli.main([*args, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "sg1d_eems_s0" / "loss.csv").read_bytes()
    b = (tmp_path / "b" / "sg1d_eems_s0" / "loss.csv").read_bytes()
    assert a == b and len(a.splitlines()) == 9


def test_compare_table_structure(tmp_path, capsys):
    code = cli.main(["compare", "--problem", "kg1d", "--samplers", "uniform,eems", "--seeds", "0,1,2",
                     "--iters", "2", "--out", str(tmp_path), "--no-plots", *TINY])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "compare_kg1d.csv")))
    assert len(rows) == 8
    med = [r for r in rows if r["seed"] == "median"]
    assert [r["sampler"] for r in med] == ["uniform", "eems"]
    uni = sorted(float(r["relative_l2"]) for r in rows if r["sampler"] == "uniform" and r["seed"] != "median")
    assert float(med[0]["relative_l2"]) == uni[1]


def test_comparison_rows_single_run_and_seed_order():
    one = cli.comparison_rows([("eems", 0, 0.1, 0.2, None)], 1000)
    assert one[-1][3:5] == [0.1, 0.2]
    runs = [("u", s, v, v, None) for s, v in enumerate([0.3, 0.1, 0.2])]
    a = cli.comparison_rows(runs, 10)[-1]
    b = cli.comparison_rows(list(reversed(runs)), 10)[-1]
    assert a == b


def test_check_energy_passes(capsys):
    assert cli.main(["check", "energy"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 4


def test_check_grad_small(capsys):
    assert cli.main(["check", "grad", "--cases", "2"]) == 0


def test_mesh_only_from_checkpoint(tmp_path):
    assert cli.main(["run", "--problem", "kg1d", "--sampler", "uniform", "--iters", "5", "--out", str(tmp_path),
                     "--no-plots", *TINY]) == 0
    ckpt = tmp_path / "kg1d_uniform_s0" / "solution.ckpt"
    code = cli.main(["mesh-only", "--problem", "kg1d", "--checkpoint", str(ckpt), "--iters", "5",
                     "--out", str(tmp_path), *TINY])
    assert code == 0
    assert (tmp_path / "kg1d_mesh_s0" / "points_mapped.csv").exists()


def test_mesh_only_rejects_mismatched_checkpoint(tmp_path):
    assert cli.main(["run", "--problem", "kg1d", "--sampler", "uniform", "--iters", "0", "--out", str(tmp_path),
                     "--no-plots", *TINY]) == 0
    ckpt = tmp_path / "kg1d_uniform_s0" / "solution.ckpt"
    assert cli.main(["mesh-only", "--problem", "wave2d", "--checkpoint", str(ckpt), "--out", str(tmp_path)]) == 2
