"""Run configuration: YAML schema, cross-field checks and resource estimates."""

from __future__ import annotations

import difflib
import hashlib
import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .hamiltonians import ERROR_MODELS
from .lattice import KINDS, InvalidSpecError, LatticeSpec
from .spectral import DENSE_LIMIT
from .trajectories import UNRAVELINGS

SCHEMA_VERSION = 1
EXPERIMENTS = ("decay-curve", "pt-statistics", "single-error-response", "sample-complexity",
               "greedy-fit", "scan", "mps-model", "failure-case")
ESTIMATORS = ("F", "F_d", "F_hat_d", "F_c", "F_XEB", "F_e", "F_id_d", "F_XEB_d", "F_d_PH")
DEFAULT_MEMORY_GB = 4.0


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TimeGrid(Strict):
    start: float = 0.0
    stop: float
    step: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.stop < self.start or self.start < 0:
            raise ValueError("need 0 <= start <= stop")
        return self

    def values(self) -> list[float]:
        n = int(round((self.stop - self.start) / self.step))
        return [self.start + k * self.step for k in range(n + 1)]


class ModelBlock(Strict):
    kind: Literal[KINDS]
    shape: list[int]
    n_bosons: int = 0
    n_up: int = 0
    n_down: int = 0
    periodic: bool = False
    coupling: float | list[float] = 1.0
    interaction: float = 0.0
    onsite: list[float] | None = None
    hz_tilde: float = 0.7
    alpha: float = 1.0
    fields: list[float] | None = None
    detuning: float = 0.0

    def lattice(self) -> LatticeSpec:
        return LatticeSpec(self.kind, tuple(self.shape), self.n_bosons, self.n_up, self.n_down, self.periodic)

    def couplings(self) -> dict:
        return self.model_dump(include={"coupling", "interaction", "onsite", "hz_tilde", "alpha", "fields", "detuning"})

    def model_hash(self) -> str:
        return _digest(self.model_dump())[:16]


class GibbsBlock(Strict):
    temperature: float = Field(gt=0)
    model: ModelBlock | None = None
    cutoff: float = Field(1e-10, gt=0, lt=1)


class InitialStateBlock(Strict):
    """Exactly one of: a product configuration, a Gibbs ensemble, an amplitude file."""

    product: str | None = None
    gibbs: GibbsBlock | None = None
    amplitudes_file: str | None = None

    @model_validator(mode="after")
    def _one_choice(self):
        chosen = [k for k in ("product", "gibbs", "amplitudes_file") if getattr(self, k) is not None]
        if len(chosen) != 1:
            raise ValueError(f"choose exactly one initial state selector, got {chosen or 'none'}")
        return self


class QuenchBlock(Strict):
    times: TimeGrid | list[float]
    window: float | None = Field(None, gt=0)
    dt: float | None = Field(None, gt=0)
    krylov_tol: float = Field(1e-10, gt=0)

    @field_validator("times", mode="before")
    @classmethod
    def _times_ok(cls, v):
        if isinstance(v, dict):
            try:
                return TimeGrid.model_validate(v)
            except ValidationError as exc:
                raise ValueError("; ".join(f"{_loc(e)}: {e['msg']}" for e in exc.errors())) from None
        if not isinstance(v, list) or not v:
            raise ValueError("times is a {start, stop, step} grid or a non-empty list")
        if any(not isinstance(t, (int, float)) or t < 0 for t in v) or any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("times must be ascending non-negative numbers")
        return v

    @model_validator(mode="after")
    def _window_pair(self):
        if (self.window is None) != (self.dt is None):
            raise ValueError("window and dt are given together")
        return self

    def time_list(self) -> list[float]:
        return self.times.values() if isinstance(self.times, TimeGrid) else list(self.times)


class NoiseBlock(Strict):
    rate: float = Field(ge=0)
    error_model: Literal[ERROR_MODELS] | None = None
    unraveling: Literal[UNRAVELINGS] = "uniform-poisson"
    per_site_rate: bool = False
    trajectories: int = Field(gt=0)
    seed: int


class EstimatorBlock(Strict):
    names: list[str]
    M: int | None = Field(None, gt=1)
    seed: int | None = None
    write_snapshots: bool = False


class ResponseBlock(Strict):
    error_times: list[float]
    tau: TimeGrid
    operators: list[int] | None = None


class ComplexityBlock(Strict):
    """Mixtures w * ideal + (1 - w) * error; the error part is one n_j kick or, without a site, the dephased state."""

    time: float = Field(ge=0)
    ideal_weights: list[float]
    error_site: int | None = Field(None, ge=0)
    error_time: float | None = Field(None, ge=0)
    replicates: int = Field(gt=1)

    @model_validator(mode="after")
    def _error_pair(self):
        if (self.error_site is None) != (self.error_time is None):
            raise ValueError("error_site and error_time are given together")
        if any(not 0 <= w <= 1 for w in self.ideal_weights):
            raise ValueError("ideal weights lie in [0, 1]")
        return self


class FitParameter(Strict):
    target: str
    lower: float
    upper: float
    truth: float

    @field_validator("target")
    @classmethod
    def _target_form(cls, v):
        name, _, rest = v.partition("[")
        if name not in ("onsite", "fields", "interaction", "coupling", "detuning") or (rest and not rest.endswith("]")):
            raise ValueError(f"fit target {v!r} is not one of onsite[j], fields[j], interaction, coupling, detuning")
        return v

    @model_validator(mode="after")
    def _interval(self):
        if self.upper <= self.lower:
            raise ValueError(f"empty interval for {self.target}")
        return self


class FitBlock(Strict):
    parameters: list[FitParameter]
    time: float = Field(gt=0)
    refine: bool = True
    starts: int = Field(1, gt=0)
    seed: int


class ScanBlock(Strict):
    family: Literal["rotated"] = "rotated"
    phis: list[float]
    phi_star: float
    time: float = Field(gt=0)


class MpsBlock(Strict):
    d: int = Field(ge=2)
    chi: int = Field(ge=1)
    N: int = Field(ge=1)
    n_a: list[int]
    k: int = Field(1, ge=1)
    theta: float = 0.0
    samples: int = Field(gt=1)
    seed: int


class FailureBlock(Strict):
    check: Literal["particle-hole", "non-interacting"]
    resonance_tol: float = Field(1e-8, gt=0)
    error_site: int | None = None
    error_time: float | None = None


class RunConfig(Strict):
    schema_version: Literal[SCHEMA_VERSION]
    experiment: Literal[EXPERIMENTS]
    model: ModelBlock | None = None
    initial_state: InitialStateBlock | None = None
    quench: QuenchBlock | None = None
    noise: NoiseBlock | None = None
    estimators: EstimatorBlock | None = None
    response: ResponseBlock | None = None
    complexity: ComplexityBlock | None = None
    fit: FitBlock | None = None
    scan: ScanBlock | None = None
    mps: MpsBlock | None = None
    failure: FailureBlock | None = None
    memory_gb: float = Field(DEFAULT_MEMORY_GB, gt=0)

    def config_hash(self) -> str:
        return _digest(self.model_dump())[:16]


# blocks each experiment needs besides schema_version/experiment
REQUIRED = {
    "decay-curve": ("model", "initial_state", "quench", "noise", "estimators"),
    "pt-statistics": ("model", "initial_state", "quench"),
    "single-error-response": ("model", "initial_state", "response"),
    "sample-complexity": ("model", "initial_state", "complexity", "estimators"),
    "greedy-fit": ("model", "initial_state", "fit", "estimators"),
    "scan": ("model", "scan", "estimators"),
    "mps-model": ("mps",),
    "failure-case": ("model", "initial_state", "quench", "failure"),
}
NEEDS_RECORD = ("decay-curve", "sample-complexity", "greedy-fit", "scan")


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _loc(err) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def parse_config(text: str, base_dir: Path | None = None) -> tuple[RunConfig | None, list[str]]:
    """Parse YAML text; return the config (None if the schema fails) and every problem found."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        return None, [f"YAML syntax: {exc}"]
    if not isinstance(raw, dict):
        return None, ["config must be a mapping at top level"]
    problems = []
    est = raw.get("estimators")
    if isinstance(est, dict) and isinstance(est.get("names"), list):
        for name in est["names"]:
            if name not in ESTIMATORS:
                hint = difflib.get_close_matches(str(name), ESTIMATORS, n=3, cutoff=0.4)
                problems.append(f"estimators.names: unknown estimator {name!r}; did you mean {hint or list(ESTIMATORS)}?")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems += [f"{_loc(e)}: {e['msg']}" for e in exc.errors()]
        return None, problems
    problems += cross_checks(cfg, base_dir)
    return cfg, problems


def load_config(path, override_seed: int | None = None) -> tuple[RunConfig | None, list[str]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        return None, [f"cannot read config: {exc}"]
    cfg, problems = parse_config(text, path.parent)
    if cfg is not None and override_seed is not None:
        cfg = with_seed(cfg, override_seed)
    return cfg, problems


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """Replace every seed in the config by ``seed``."""
    updates = {}
    for block in ("noise", "estimators", "fit", "mps"):
        sub = getattr(cfg, block)
        if sub is not None and "seed" in type(sub).model_fields:
            updates[block] = sub.model_copy(update={"seed": seed})
    return cfg.model_copy(update=updates)


def hilbert_dimension(spec: LatticeSpec) -> int:
    known = spec.expected_dimension()
    if known is not None:
        return known
    from .lattice import enumerate_basis

    return enumerate_basis(spec).dimension


def memory_estimate(dimension: int) -> int:
    """Bytes of the dense D x D complex overlap table."""
    return 16 * dimension * dimension


def cross_checks(cfg: RunConfig, base_dir: Path | None = None) -> list[str]:
    problems = []
    for block in REQUIRED[cfg.experiment]:
        if getattr(cfg, block) is None:
            problems.append(f"{block}: required for experiment {cfg.experiment}")
    if cfg.experiment in NEEDS_RECORD and cfg.estimators is not None:
        if cfg.estimators.M is None:
            problems.append("estimators.M: required to sample measurement records")
        if cfg.estimators.seed is None:
            problems.append("estimators.seed: every random consumer needs an explicit seed")
    if cfg.model is not None:
        try:
            spec = cfg.model.lattice()
        except InvalidSpecError as exc:
            return problems + [f"model: {exc}"]
        problems += _model_checks(cfg, spec)
        if cfg.initial_state is not None:
            problems += _state_checks(cfg, spec, base_dir)
    if cfg.mps is not None:
        m = cfg.mps
        if any(not 1 <= n <= m.N for n in m.n_a) or not m.n_a:
            problems.append(f"mps.n_a: block sizes must lie in [1, {m.N}]")
        elif m.k + max(m.n_a) - 1 > m.N:
            problems.append("mps.k: error block runs past the chain end")
        if m.d ** m.N > 2**14:
            problems.append(f"mps: d^N = {m.d ** m.N} exceeds the Monte Carlo limit 2^14")
    if cfg.experiment == "failure-case" and cfg.failure is not None:
        f = cfg.failure
        if (f.error_site is None) != (f.error_time is None):
            problems.append("failure: error_site and error_time are given together")
    return problems


def _model_checks(cfg: RunConfig, spec: LatticeSpec) -> list[str]:
    problems = []
    D = hilbert_dimension(spec)
    need = memory_estimate(D)
    budget = cfg.memory_gb * 2**30
    if D > DENSE_LIMIT or need > budget:
        problems.append(f"model: dimension {D} needs {need / 2**30:.1f} GiB for the dense overlap table "
                        f"(budget {cfg.memory_gb:g} GiB, dense limit D <= {DENSE_LIMIT}); reduce the lattice")
    L = spec.n_sites
    m = cfg.model
    for name in ("onsite", "fields"):
        vals = getattr(m, name)
        if vals is not None and len(vals) != L:
            problems.append(f"model.{name}: needs {L} entries, got {len(vals)}")
    if cfg.noise is not None and cfg.noise.error_model is not None:
        allowed = {"bose-hubbard": ("occupation",), "fermi-hubbard": ("occupation",),
                   "spin-chain": ("pauli-xz", "pauli-z", "pauli-x"), "pxp-1d": ("pauli-z",), "pxp-2d": ("pauli-z",)}
        if cfg.noise.error_model not in allowed[spec.kind]:
            problems.append(f"noise.error_model: {cfg.noise.error_model} does not apply to {spec.kind}")
    sites = []
    if cfg.complexity is not None and cfg.complexity.error_site is not None:
        sites.append(("complexity.error_site", cfg.complexity.error_site))
    if cfg.failure is not None and cfg.failure.error_site is not None:
        sites.append(("failure.error_site", cfg.failure.error_site))
    if cfg.response is not None and cfg.response.operators:
        sites += [("response.operators", j) for j in cfg.response.operators]
    for where, j in sites:
        if not 0 <= j < L:
            problems.append(f"{where}: site {j} outside 0..{L - 1}")
    if cfg.fit is not None:
        for p in cfg.fit.parameters:
            _, _, rest = p.target.partition("[")
            if rest and not 0 <= int(rest[:-1]) < L:
                problems.append(f"fit.parameters: {p.target} indexes outside 0..{L - 1}")
    if cfg.scan is not None and spec.kind not in ("bose-hubbard", "fermi-hubbard", "spin-chain"):
        problems.append(f"scan: no rotated family for {spec.kind}")
    return problems


def _state_checks(cfg: RunConfig, spec: LatticeSpec, base_dir: Path | None) -> list[str]:
    s = cfg.initial_state
    if s.product is not None:
        try:
            z = [int(tok) for tok in s.product.split(",")]
        except ValueError:
            return [f"initial_state.product: {s.product!r} is not a comma-separated configuration"]
        if len(z) != spec.n_modes:
            return [f"initial_state.product: needs {spec.n_modes} entries, got {len(z)}"]
    if s.gibbs is not None and cfg.experiment != "decay-curve":
        return ["initial_state.gibbs: a mixed preparation is only supported by decay-curve"]
    if s.amplitudes_file is not None:
        path = Path(s.amplitudes_file)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            return [f"initial_state.amplitudes_file: {path} does not exist"]
    if s.gibbs is not None and s.gibbs.model is not None:
        try:
            if s.gibbs.model.lattice() != spec:
                return ["initial_state.gibbs.model: preparation lattice differs from the quench lattice"]
        except InvalidSpecError as exc:
            return [f"initial_state.gibbs.model: {exc}"]
    return []
