"""Run configuration files: nested JSON with validation and a stable hash."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from .network import ScenarioConfig
from .pilots import PilotKind
from .power_control import StepSchedule

OUT_DIR_ENV = "MIMOPOWER_OUT_DIR"
METHOD_NAMES = {"deterministic": "D", "stochastic": "S", "equal": "E", "d": "D", "s": "S", "e": "E"}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class PilotSettings:
    kind: str = "nonorthogonal"
    length: int = 16
    path: str = None
    seed: int = None  # defaults to the scenario seed


@dataclass(frozen=True)
class SolverSettings:
    eps1: float = 1e-4
    max_iter1: int = 100
    eps2: float = 1e-4
    max_iter2: int = 20000
    tau: float = 1.0
    kappa_alpha: float = 0.6
    kappa_beta: float = 0.7


@dataclass(frozen=True)
class EvalSettings:
    draws: int = 1000
    num_seeds: int = 50
    labels: tuple = ("D-N", "D-O", "S-O", "E-O")
    cdf_over: str = "cell"  # "cell" or "user"
    antennas: tuple = (32, 64, 96, 128)
    threads: int = 1


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    pilots: PilotSettings = field(default_factory=PilotSettings)
    method: str = "deterministic"
    solver: SolverSettings = field(default_factory=SolverSettings)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    out_dir: str = None
    master_seed: int = 0

    @property
    def method_letter(self):
        return METHOD_NAMES[self.method.lower()]

    @property
    def pilot_kind(self):
        return PilotKind.parse(self.pilots.kind)

    @property
    def schedule(self):
        return StepSchedule(self.solver.kappa_alpha, self.solver.kappa_beta)

    def to_dict(self):
        d = asdict(self)
        d["scenario"]["users_per_cell"] = list(self.scenario.users_per_cell)
        d["evaluation"]["labels"] = list(self.evaluation.labels)
        d["evaluation"]["antennas"] = list(self.evaluation.antennas)
        return d

    def canonical_json(self):
        # where results go and how many threads compute them do not change
        # what they are, so neither enters the hash
        d = self.to_dict()
        d.pop("out_dir")
        d["evaluation"].pop("threads")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def output_dir(self):
        return Path(self.out_dir or os.environ.get(OUT_DIR_ENV) or "results")

    def validate(self):
        try:
            self.scenario.validate()
        except ValueError as e:
            raise ConfigError(f"scenario: {e}") from None
        try:
            kind = PilotKind.parse(self.pilots.kind)
        except ValueError:
            raise ConfigError(f"pilots.kind: unknown pilot kind {self.pilots.kind!r}") from None
        if int(self.pilots.length) < 1:
            raise ConfigError("pilots.length must be >= 1")
        if kind is PilotKind.ORTHOGONAL and self.pilots.length < max(self.scenario.users_per_cell):
            raise ConfigError("pilots.length must be >= users per cell for orthogonal pilots")
        if kind is PilotKind.EXTERNAL:
            if not self.pilots.path:
                raise ConfigError("pilots.path is required for external pilots")
            if not Path(self.pilots.path).is_file():
                raise ConfigError(f"pilots.path: file not found: {self.pilots.path}")
        if self.method.lower() not in METHOD_NAMES:
            raise ConfigError(f"method: must be deterministic, stochastic or equal, got {self.method!r}")
        s = self.solver
        for name in ("eps1", "tau"):
            if not getattr(s, name) > 0:
                raise ConfigError(f"solver.{name} must be > 0")
        if not s.eps2 >= 0:
            raise ConfigError("solver.eps2 must be >= 0")
        for name in ("max_iter1", "max_iter2"):
            if int(getattr(s, name)) < 1:
                raise ConfigError(f"solver.{name} must be >= 1")
        bad = self.schedule.violations()
        if bad:
            raise ConfigError("solver schedule: " + "; ".join(bad))
        e = self.evaluation
        if int(e.draws) < 1:
            raise ConfigError("evaluation.draws must be >= 1")
        if int(e.num_seeds) < 1:
            raise ConfigError("evaluation.num_seeds must be >= 1")
        if int(e.threads) < 1:
            raise ConfigError("evaluation.threads must be >= 1")
        if e.cdf_over not in ("cell", "user"):
            raise ConfigError("evaluation.cdf_over must be 'cell' or 'user'")
        ants = list(e.antennas)
        if not ants or any(b <= a for a, b in zip(ants, ants[1:])) or ants[0] < 1:
            raise ConfigError("evaluation.antennas must be a nonempty ascending list of positive integers")
        for lab in e.labels:
            parts = str(lab).split("-")
            if len(parts) != 2 or parts[0].upper() not in "DSE" or not parts[0]:
                raise ConfigError(f"evaluation.labels: bad label {lab!r} (expected e.g. 'D-N')")
            try:
                PilotKind.parse(parts[1])
            except ValueError:
                raise ConfigError(f"evaluation.labels: bad pilot kind in {lab!r}") from None
        if not 0 <= int(self.master_seed) < 2**63:
            raise ConfigError("master_seed must be a nonnegative 63-bit integer")
        return self


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{name}: unknown field(s) {sorted(extra)}")
    data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from None


def from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("config: expected a JSON object at top level")
    top = {f.name for f in fields(RunConfig)}
    extra = set(d) - top
    if extra:
        raise ConfigError(f"config: unknown field(s) {sorted(extra)}")
    cfg = RunConfig(
        scenario=_section(ScenarioConfig, d.get("scenario"), "scenario"),
        pilots=_section(PilotSettings, d.get("pilots"), "pilots"),
        method=str(d.get("method", "deterministic")),
        solver=_section(SolverSettings, d.get("solver"), "solver"),
        evaluation=_section(EvalSettings, d.get("evaluation"), "evaluation"),
        out_dir=d.get("out_dir"),
        master_seed=d.get("master_seed", 0),
    )
    return cfg.validate()


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON in {path}: {e}") from None
    return from_dict(d)


def default_config():
    """The shipped full-scale configuration."""
    text = resources.files("mimopower.data").joinpath("default.json").read_text()
    return from_dict(json.loads(text))


def with_overrides(cfg, **kw):
    """Apply command-line overrides; ``None`` values are ignored."""
    kw = {k: v for k, v in kw.items() if v is not None}
    top = {}
    if "seed" in kw:
        top["scenario"] = replace(cfg.scenario, seed=int(kw.pop("seed")))
    if "method" in kw:
        top["method"] = kw.pop("method")
    if "pilots" in kw:
        top["pilots"] = replace(cfg.pilots, kind=kw.pop("pilots"))
    if "out_dir" in kw:
        top["out_dir"] = str(kw.pop("out_dir"))
    if "master_seed" in kw:
        top["master_seed"] = int(kw.pop("master_seed"))
    ev = {k: kw.pop(k) for k in ("draws", "threads", "num_seeds", "antennas", "labels") if k in kw}
    if ev:
        ev = {k: tuple(v) if isinstance(v, list) else v for k, v in ev.items()}
        top["evaluation"] = replace(cfg.evaluation, **ev)
    if "max_iter" in kw:
        m = int(kw.pop("max_iter"))
        top["solver"] = replace(cfg.solver, max_iter1=m, max_iter2=m)
    if kw:
        raise ConfigError(f"unknown override(s) {sorted(kw)}")
    return replace(cfg, **top).validate()
