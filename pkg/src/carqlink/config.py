"""YAML scenario and sweep files. Every SNR or power in a file is in dB."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Tuple

import yaml

from .amc import db_to_linear, load_mode_table
from .analytic import DEFAULT_OMEGA, OMEGA_VARIANTS, Scenario
from .errors import CarqError, ConfigParseError, ValidationError
from .optimizer import OptimizerConfig
from .simulator import SimConfig

SCHEMES = ("adaptive-power-carq", "const-power-carq", "direct-transmission")
SWEEP_VARIABLES = ("p_bar_db", "mu_db", "p_t1")

_SCENARIO_KEYS = {
    "p_bar_db",
    "mu_db",
    "p_loss",
    "alpha",
    "mode_table",
    "relay_mode_table",
    "p_bar_s_db",
    "p_bar_r_db",
    "source_mean_snr_db",
    "relay_mean_snr_db",
    "scheme",
    "omega_variant",
    "optimizer",
    "simulate",
}
_OPTIMIZER_KEYS = {f.name for f in fields(OptimizerConfig)} - {"user_thresholds", "omega_variant"}
_SIM_KEYS = {f.name for f in fields(SimConfig)}
_SWEEP_KEYS = {"scenario", "variable", "grid", "schemes", "simulate", "n_jobs"}


@dataclass
class ScenarioSpec:
    """A parsed scenario file: the problem plus how to solve and check it."""

    scenario: Scenario
    scheme: str = "adaptive-power-carq"
    omega_variant: str = DEFAULT_OMEGA
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    simulate: Optional[SimConfig] = None
    source: str = "<memory>"


@dataclass
class SweepSpec:
    base: ScenarioSpec
    variable: str
    grid: Tuple[float, ...]
    schemes: Tuple[str, ...]
    simulate: Optional[SimConfig] = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValidationError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if not self.grid:
            raise ValidationError("sweep grid is empty")
        if list(self.grid) != sorted(self.grid):
            raise ValidationError("sweep grid must be sorted ascending")
        if not self.schemes:
            raise ValidationError("sweep needs at least one scheme")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValidationError(f"unknown scheme(s) {bad}; choose from {SCHEMES}")
        if self.n_jobs < 1:
            raise ValidationError("n_jobs must be >= 1")


def _load_yaml(source, what: str):
    """Parse a path or YAML text; returns (document, label, base directory)."""
    if isinstance(source, dict):
        return source, "<dict>", Path.cwd()
    if isinstance(source, Path) or "\n" not in str(source):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigParseError(f"{what}: cannot read {path}: {exc}") from exc
        label, base = str(path), path.resolve().parent
    else:
        text, label, base = str(source), "<text>", Path.cwd()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{label}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigParseError(f"{label}: expected a mapping at top level")
    return doc, label, base


def _check_keys(doc: dict, allowed: set, where: str):
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigParseError(f"{where}: unknown key(s) {', '.join(map(str, extra))}")


def _table(ref, base: Path):
    if ref is None or ref == "default":
        return load_mode_table()
    if isinstance(ref, dict):
        return load_mode_table(ref)
    path = Path(ref)
    return load_mode_table(path if path.is_absolute() else base / path)


def _number(doc, key, where, default=None):
    v = doc.get(key, default)
    if v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"{where}: '{key}' must be a number, got {v!r}") from exc


def _sim_config(raw, where: str, alpha: float) -> Optional[SimConfig]:
    if raw in (None, False):
        return None
    if raw is True:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{where}: 'simulate' must be a mapping")
    raw = dict(raw)
    if not raw.pop("enabled", True):
        return None
    _check_keys(raw, _SIM_KEYS, f"{where}: simulate")
    raw.setdefault("alpha", alpha)
    if "packet_budget" in raw:
        raw["packet_budget"] = int(float(raw["packet_budget"]))
    try:
        return SimConfig(**raw)
    except TypeError as exc:
        raise ConfigParseError(f"{where}: simulate: {exc}") from exc


def _optimizer_config(raw, where: str, variant: str) -> OptimizerConfig:
    if not isinstance(raw, (dict, type(None))):
        raise ConfigParseError(f"{where}: 'optimizer' must be a mapping")
    raw = dict(raw or {})
    _check_keys(raw, _OPTIMIZER_KEYS | {"user_thresholds_db"}, f"{where}: optimizer")
    user = raw.pop("user_thresholds_db", None)
    for key in ("lambda_bracket", "pt1_interval", "random_db_range"):
        if key in raw and raw[key] is not None:
            raw[key] = tuple(float(x) for x in raw[key])
    if user is not None:
        raw["user_thresholds"] = (db_to_linear(user["source"]), db_to_linear(user["relay"]))
        raw.setdefault("initial_thresholds", "user")
    return OptimizerConfig(omega_variant=variant, **raw)


def scenario_from_dict(doc: dict, label: str = "<dict>", base: Optional[Path] = None) -> ScenarioSpec:
    base = base or Path.cwd()
    _check_keys(doc, _SCENARIO_KEYS, label)
    variant = doc.get("omega_variant", DEFAULT_OMEGA)
    if variant not in OMEGA_VARIANTS:
        raise ValidationError(f"{label}: omega_variant must be one of {OMEGA_VARIANTS}, got {variant!r}")
    scheme = doc.get("scheme", "adaptive-power-carq")
    if scheme not in SCHEMES:
        raise ValidationError(f"{label}: scheme must be one of {SCHEMES}, got {scheme!r}")
    try:
        table = _table(doc.get("mode_table"), base)
        relay_table = _table(doc["relay_mode_table"], base) if doc.get("relay_mode_table") else None
        alpha = _number(doc, "alpha", label, 0.5)
        scenario = Scenario.from_db(
            p_bar_db=_number(doc, "p_bar_db", label, 10.0),
            mu_db=_number(doc, "mu_db", label, 0.0),
            p_loss=_number(doc, "p_loss", label, 1e-3),
            alpha=alpha,
            table=table,
            p_bar_s_db=_number(doc, "p_bar_s_db", label),
            p_bar_r_db=_number(doc, "p_bar_r_db", label),
            source_mean_snr_db=_number(doc, "source_mean_snr_db", label),
            relay_mean_snr_db=_number(doc, "relay_mean_snr_db", label),
            relay_table=relay_table,
        )
        optimizer = _optimizer_config(doc.get("optimizer"), label, variant)
        sim = _sim_config(doc.get("simulate"), label, alpha)
    except CarqError as exc:
        if label in str(exc):
            raise
        raise type(exc)(f"{label}: {exc}") from exc
    return ScenarioSpec(scenario, scheme, variant, optimizer, sim, label)


def load_scenario(source) -> ScenarioSpec:
    doc, label, base = _load_yaml(source, "scenario")
    return scenario_from_dict(doc, label, base)


def load_sweep(source) -> SweepSpec:
    doc, label, base = _load_yaml(source, "sweep")
    _check_keys(doc, _SWEEP_KEYS, label)
    scen = doc.get("scenario", {})
    if isinstance(scen, str):
        path = Path(scen)
        spec = load_scenario(path if path.is_absolute() else base / path)
    elif isinstance(scen, dict):
        spec = scenario_from_dict(scen, f"{label}: scenario", base)
    else:
        raise ConfigParseError(f"{label}: 'scenario' must be a mapping or a file path")
    if "variable" not in doc or "grid" not in doc:
        raise ConfigParseError(f"{label}: sweep needs 'variable' and 'grid'")
    try:
        grid = tuple(float(x) for x in doc["grid"])
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"{label}: grid must be a list of numbers") from exc
    schemes = doc.get("schemes", list(SCHEMES))
    if not isinstance(schemes, list):
        raise ConfigParseError(f"{label}: 'schemes' must be a list")
    try:
        return SweepSpec(
            base=spec,
            variable=doc["variable"],
            grid=grid,
            schemes=tuple(schemes),
            simulate=_sim_config(doc.get("simulate"), label, spec.scenario.alpha),
            n_jobs=int(doc.get("n_jobs", 1)),
        )
    except ValidationError as exc:
        raise ValidationError(f"{label}: {exc}") from exc
