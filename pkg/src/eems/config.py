"""Typed experiment configuration stored as TOML.

A configuration file has the sections ``problem``, ``network``, ``points``,
``loss``, ``optimizer``, ``mesh``, ``run`` and ``diagnostics``.  Every key has
a default; unknown keys are rejected by name.  Bundled defaults for each
benchmark live in ``eems/configs/<name>.toml``.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .problems import PROBLEM_NAMES, ProblemError, make_problem
from .sampling import NORMALIZERS, EmmConfig
from .training import SAMPLERS, LossWeights, OptimizerConfig, PipelineConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSection:
    name: str = "kg1d"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NetworkSection:
    solution: tuple = (40, 40, 40, 40, 40)
    mesh: tuple = (20, 20, 20, 20)


@dataclass(frozen=True)
class PointsSection:
    interior: int = 1000
    initial: int = 100
    boundary: int = 100
    layout: str = "grid"


@dataclass(frozen=True)
class LossSection:
    pde: tuple = (1.0, 1.0)
    boundary: float = 1.0
    initial: tuple = (1.0, 1.0)


@dataclass(frozen=True)
class OptimizerSection:
    adam_lr: float = 1e-3
    lbfgs_lr: float = 0.0  # 0 disables L-BFGS
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    memory: int = 10
    adam_fraction: float = 0.8
    pretrain: int = 3000
    mesh: int = 3500
    retrain: int = 3500
    energy_tol: float = 1e-3


@dataclass(frozen=True)
class MeshSection:
    tau: float = 0.1
    mode: str = "location"
    delta: float = 1e-6
    c_min: float = 1e-3
    fd_step: float = 1e-4
    normalizer: str = "product"


@dataclass(frozen=True)
class RunSection:
    sampler: str = "eems"
    rounds: int = 1
    wam_rounds: int = 1
    wam_k: float = 1.0
    seed: int = 0
    out: str = "runs"


@dataclass(frozen=True)
class DiagnosticsSection:
    quadrature: int = 0  # 0: 201 nodes per axis in 1D, 101 in 2D
    test_grid: tuple = ()  # empty: 256 x 101 in 1D, 101 x 101 x 11 in 2D
    energy_snapshots: int = 11


SECTIONS = {
    "problem": ProblemSection,
    "network": NetworkSection,
    "points": PointsSection,
    "loss": LossSection,
    "optimizer": OptimizerSection,
    "mesh": MeshSection,
    "run": RunSection,
    "diagnostics": DiagnosticsSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSection = ProblemSection()
    network: NetworkSection = NetworkSection()
    points: PointsSection = PointsSection()
    loss: LossSection = LossSection()
    optimizer: OptimizerSection = OptimizerSection()
    mesh: MeshSection = MeshSection()
    run: RunSection = RunSection()
    diagnostics: DiagnosticsSection = DiagnosticsSection()

    # ----------------------------------------------------------------- io

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a table")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section {sorted(unknown)[0]!r}")
        parts = {name: _section(name, SECTIONS[name], data.get(name, {})) for name in SECTIONS}
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    def to_dict(self):
        out = {}
        for name in SECTIONS:
            sec = getattr(self, name)
            out[name] = {f.name: _plain(getattr(sec, f.name)) for f in fields(sec)}
        return out

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    def save(self, path):
        Path(path).write_text(self.dumps())

    def with_overrides(self, overrides):
        """Apply ``{"section.key": value}`` overrides; returns a validated copy."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            sec, _, key = dotted.partition(".")
            if sec not in SECTIONS or not key:
                raise ConfigError(f"unknown key {dotted!r}")
            if sec == "problem" and key.startswith("params."):
                data["problem"]["params"][key[len("params.") :]] = value
                continue
            if key not in {f.name for f in fields(SECTIONS[sec])}:
                raise ConfigError(f"unknown key {dotted!r}")
            data[sec][key] = value
        return ExperimentConfig.from_dict(data)

    # ---------------------------------------------------------- validation

    def validate(self):
        try:
            self.build_problem()
        except ProblemError as exc:
            raise ConfigError(f"problem: {exc}") from exc
        for name, sizes in (("network.solution", self.network.solution), ("network.mesh", self.network.mesh)):
            if not sizes or any(w < 1 for w in sizes):
                raise ConfigError(f"{name} must list positive layer widths")
        p = self.points
        if p.interior < 1 or p.initial < 0 or p.boundary < 0:
            raise ConfigError("points: interior must be positive and other counts non-negative")
        if p.layout not in ("grid", "random"):
            raise ConfigError(f"points.layout must be 'grid' or 'random', got {p.layout!r}")
        if self.run.sampler not in SAMPLERS:
            raise ConfigError(f"run.sampler must be one of {sorted(SAMPLERS)}, got {self.run.sampler!r}")
        if self.run.rounds < 0 or self.run.wam_rounds < 1:
            raise ConfigError("run.rounds must be >= 0 and run.wam_rounds >= 1")
        if not self.run.wam_k >= 1:
            raise ConfigError("run.wam_k must be >= 1")
        if self.mesh.normalizer not in NORMALIZERS:
            raise ConfigError(f"mesh.normalizer must be one of {sorted(NORMALIZERS)}")
        if self.optimizer.lbfgs_lr < 0:
            raise ConfigError("optimizer.lbfgs_lr must be >= 0 (0 disables L-BFGS)")
        d = self.diagnostics
        if d.quadrature < 0 or d.quadrature == 1:
            raise ConfigError("diagnostics.quadrature must be 0 (default) or >= 2")
        if d.energy_snapshots < 1:
            raise ConfigError("diagnostics.energy_snapshots must be >= 1")
        try:
            self.pipeline()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if d.test_grid and len(d.test_grid) != self.build_problem().dim + 1:
            raise ConfigError("diagnostics.test_grid needs one entry per space-time axis")

    # ------------------------------------------------------------ mapping

    def build_problem(self):
        return make_problem(self.problem.name, **self.problem.params)

    def pipeline(self):
        o, m = self.optimizer, self.mesh
        return PipelineConfig(
            n_interior=self.points.interior,
            n_initial=self.points.initial,
            n_boundary=self.points.boundary,
            hidden=tuple(self.network.solution),
            mesh_hidden=tuple(self.network.mesh),
            rounds=self.run.rounds,
            wam_rounds=self.run.wam_rounds,
            wam_k=self.run.wam_k,
            layout=self.points.layout,
            normalizer=m.normalizer,
            emm=EmmConfig(m.tau, m.mode, m.delta, m.c_min, m.fd_step),
            weights=LossWeights(tuple(self.loss.pde), self.loss.boundary, tuple(self.loss.initial)),
            optimizer=OptimizerConfig(
                adam_lr=o.adam_lr,
                beta1=o.beta1,
                beta2=o.beta2,
                eps=o.eps,
                lbfgs_lr=o.lbfgs_lr or None,
                memory=o.memory,
                adam_fraction=o.adam_fraction,
                pretrain=o.pretrain,
                mesh=o.mesh,
                retrain=o.retrain,
                energy_tol=o.energy_tol,
                seed=self.run.seed,
            ),
            energy_snapshots=self.diagnostics.energy_snapshots,
            quadrature=self.diagnostics.quadrature or None,
            test_grid=tuple(self.diagnostics.test_grid) or None,
        )


def _plain(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, dict):
        return dict(v)
    return v


def _coerce(section, key, default, value):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        value = float(value)
        if math.isnan(value):
            raise ConfigError(f"{where} must not be NaN")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be an array, got {value!r}")
        kind = type(default[0]) if default else int
        out = []
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"{where} entries must be numbers, got {item!r}")
            if kind is int and not isinstance(item, int):
                raise ConfigError(f"{where} entries must be integers, got {item!r}")
            out.append(kind(item))
        return tuple(out)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be a table")
        for k, v in value.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{where}.{k} must be a number, got {v!r}")
        return {k: float(v) for k, v in value.items()}
    raise ConfigError(f"{where}: unsupported type")  # pragma: no cover


def _section(name, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = [k for k in data if k not in known]
    if unknown:
        raise ConfigError(f"unknown key {name}.{unknown[0]!r}")
    values = {}
    for k, v in data.items():
        f = known[k]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        values[k] = _coerce(name, k, default, v)
    return cls(**values)


def parse(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def load(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse(text)


def bundled(name):
    """Bundled default configuration for benchmark ``name``."""
    if name not in PROBLEM_NAMES:
        raise ConfigError(f"no bundled configuration for {name!r}; choose from {', '.join(PROBLEM_NAMES)}")
    text = resources.files("eems").joinpath("configs").joinpath(f"{name}.toml").read_text()
    return parse(text)


def with_sampler(cfg, sampler):
    return replace(cfg, run=replace(cfg.run, sampler=sampler))
