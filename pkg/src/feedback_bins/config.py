"""Experiment configuration: a YAML file with a strict schema.

Layout (every key optional except ``model.alpha`` and ``model.sequence``)::

    model:
      alpha: 2.0                 # feedback exponent, >= 1
      T0: 1                      # initial balls in bin 1, 0 < T0 < tau0
      kernel: independent_binomial   # or bulk_placement
      sequence:                  # family name + parameters, tau0 included
        name: constant
        sigma: 1
        tau0: 2
    run:
      horizon: 1000              # steps per replication
      reps: 100
      master_seed: 0
      bit_budget: 1000000        # bits of tau kept exact before switching to logs
      max_steps: null            # cap on reps * horizon; excess reps are dropped
      threads: null              # null = all cores
      sampler:
        exact_cutoff: 1000000    # binomial sizes up to this are sampled exactly
        poisson_cutoff: 1000.0   # Poisson below this mean, Gaussian above
    analysis:
      delta_grid: [0.1, 0.01, 0.001, 1.0e-6]
      confidence_eps: 0.001
      tail_horizon: null         # null = run horizon
      strict: false              # classify only from analytic asymptotics
    output:
      dir: out
      formats: [json, csv]
      dump_trajectories: false
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .dynamics import Kernel, ModelParams, SamplerConfig
from .montecarlo import DEFAULT_DELTA_GRID, RunOptions, default_threads
from .sequences import DEFAULT_BIT_BUDGET, Family, GrowthSequence, make_sequence


class ConfigError(ValueError):
    pass


def _take(section: str, data, cls):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    return data


def _num(section: str, key: str, value, kind=float, *, allow_none=False):
    if value is None:
        if allow_none:
            return None
        raise ConfigError(f"{section}.{key} is required")
    if isinstance(value, bool):
        raise ConfigError(f"{section}.{key} must be a number")
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}") from None
    if kind is int and out != float(value):
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
    return out


@dataclass
class ModelSection:
    alpha: float
    sequence: dict
    T0: int = 1
    kernel: Kernel = Kernel.INDEPENDENT_BINOMIAL

    @classmethod
    def from_dict(cls, data) -> "ModelSection":
        data = _take("model", data, cls)
        seq = data.get("sequence")
        if not isinstance(seq, dict) or "name" not in seq:
            raise ConfigError("model.sequence must be a mapping with a 'name'")
        try:
            Family(seq["name"])
        except ValueError:
            raise ConfigError(f"model.sequence.name: unknown family {seq['name']!r}") from None
        alpha = _num("model", "alpha", data.get("alpha"))
        if alpha < 1:
            raise ConfigError("model.alpha must be >= 1")
        T0 = _num("model", "T0", data.get("T0", 1), int)
        try:
            kernel = Kernel(data.get("kernel", Kernel.INDEPENDENT_BINOMIAL.value))
        except ValueError:
            raise ConfigError(f"model.kernel: unknown kernel {data.get('kernel')!r}") from None
        return cls(alpha, dict(seq), T0, kernel)


@dataclass
class RunSection:
    horizon: int = 1000
    reps: int = 100
    master_seed: int = 0
    bit_budget: int = DEFAULT_BIT_BUDGET
    max_steps: int | None = None
    threads: int | None = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    @classmethod
    def from_dict(cls, data) -> "RunSection":
        data = _take("run", data, cls)
        d = cls()
        out = cls(
            horizon=_num("run", "horizon", data.get("horizon", d.horizon), int),
            reps=_num("run", "reps", data.get("reps", d.reps), int),
            master_seed=_num("run", "master_seed", data.get("master_seed", d.master_seed), int),
            bit_budget=_num("run", "bit_budget", data.get("bit_budget", d.bit_budget), int),
            max_steps=_num("run", "max_steps", data.get("max_steps"), int, allow_none=True),
            threads=_num("run", "threads", data.get("threads"), int, allow_none=True),
        )
        sampler = _take("run.sampler", data.get("sampler"), SamplerConfig)
        out.sampler = SamplerConfig(
            exact_cutoff=_num("run.sampler", "exact_cutoff",
                              sampler.get("exact_cutoff", d.sampler.exact_cutoff), int),
            poisson_cutoff=_num("run.sampler", "poisson_cutoff",
                                sampler.get("poisson_cutoff", d.sampler.poisson_cutoff)),
        )
        if out.horizon < 1 or out.reps < 1:
            raise ConfigError("run.horizon and run.reps must be >= 1")
        if out.master_seed < 0:
            raise ConfigError("run.master_seed must be >= 0")
        if out.threads is not None and out.threads < 1:
            raise ConfigError("run.threads must be >= 1")
        if out.max_steps is not None and out.max_steps < out.horizon:
            raise ConfigError("run.max_steps must allow at least one full trajectory")
        return out


@dataclass
class AnalysisSection:
    delta_grid: tuple[float, ...] = DEFAULT_DELTA_GRID
    confidence_eps: float = 1e-3
    tail_horizon: int | None = None
    strict: bool = False

    @classmethod
    def from_dict(cls, data) -> "AnalysisSection":
        data = _take("analysis", data, cls)
        grid = data.get("delta_grid", list(DEFAULT_DELTA_GRID))
        if not isinstance(grid, list) or not grid:
            raise ConfigError("analysis.delta_grid must be a non-empty list")
        grid = tuple(_num("analysis", "delta_grid", g) for g in grid)
        if any(not 0 < g < 1 for g in grid):
            raise ConfigError("analysis.delta_grid entries must lie in (0, 1)")
        eps = _num("analysis", "confidence_eps", data.get("confidence_eps", 1e-3))
        if not 0 < eps < 1:
            raise ConfigError("analysis.confidence_eps must lie in (0, 1)")
        strict = data.get("strict", False)
        if not isinstance(strict, bool):
            raise ConfigError("analysis.strict must be true or false")
        return cls(grid, eps, _num("analysis", "tail_horizon", data.get("tail_horizon"), int,
                                   allow_none=True), strict)


@dataclass
class OutputSection:
    dir: str = "out"
    formats: tuple[str, ...] = ("json", "csv")
    dump_trajectories: bool = False

    @classmethod
    def from_dict(cls, data) -> "OutputSection":
        data = _take("output", data, cls)
        formats = tuple(data.get("formats", ["json", "csv"]))
        bad = set(formats) - {"json", "csv"}
        if bad:
            raise ConfigError(f"output.formats: unsupported {sorted(bad)}")
        dump = data.get("dump_trajectories", False)
        if not isinstance(dump, bool):
            raise ConfigError("output.dump_trajectories must be true or false")
        return cls(str(data.get("dir", "out")), formats, dump)


@dataclass
class ExperimentConfig:
    model: ModelSection
    run: RunSection = field(default_factory=RunSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - {"model", "run", "analysis", "output"}
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        cfg = cls(
            ModelSection.from_dict(data.get("model")),
            RunSection.from_dict(data.get("run")),
            AnalysisSection.from_dict(data.get("analysis")),
            OutputSection.from_dict(data.get("output")),
        )
        cfg.model_params()  # surfaces sequence and T0 errors at load time
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """Read a config file; a relative custom-sequence ``file`` is resolved against it."""
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
        model = data.get("model") if isinstance(data, dict) else None
        seq = model.get("sequence") if isinstance(model, dict) else None
        if isinstance(seq, dict) and isinstance(seq.get("file"), str):
            f = Path(seq["file"])
            if not f.is_absolute():
                seq["file"] = str(path.parent / f)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {
            "model": {
                "alpha": self.model.alpha,
                "T0": self.model.T0,
                "kernel": self.model.kernel.value,
                "sequence": dict(self.model.sequence),
            },
            "run": asdict(self.run),
            "analysis": asdict(self.analysis),
            "output": asdict(self.output),
        }
        out["analysis"]["delta_grid"] = list(self.analysis.delta_grid)
        out["output"]["formats"] = list(self.output.formats)
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def sequence(self) -> GrowthSequence:
        try:
            return make_sequence(self.model.sequence, self.model.alpha,
                                 bit_budget=self.run.bit_budget,
                                 horizon=max(self.run.horizon, 1) + 1)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"model.sequence: {exc}") from None

    def model_params(self) -> ModelParams:
        try:
            return ModelParams(self.model.alpha, self.model.T0, self.sequence(), self.model.kernel)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None

    def run_options(self, threads: int | None = None, dump: bool | None = None) -> RunOptions:
        return RunOptions(
            delta_grid=self.analysis.delta_grid,
            confidence_eps=self.analysis.confidence_eps,
            tail_horizon=self.analysis.tail_horizon,
            sampler=self.run.sampler,
            max_steps=self.run.max_steps,
            threads=threads or self.run.threads or default_threads(),
            dump_trajectories=self.output.dump_trajectories if dump is None else dump,
        )
