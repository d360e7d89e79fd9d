"""Experiment configuration: strict key=value sections with line-numbered
errors, merged over preset defaults."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from ..access_pipeline import ScenarioConfig


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


PRESETS = (
    "recover-snr", "recover-cols", "recover-blocks", "convergence",
    "power-sweep", "access-vs-U", "access-vs-antennas", "access-vs-active",
)

# keys accepted in the [scenario] section, mapped onto ScenarioConfig
_SCENARIO_KEYS = {f.name for f in fields(ScenarioConfig)}

# keys accepted in the [solver] section
_SOLVER_KEYS = {
    "eta", "gamma_shape", "gamma_scale", "max_iter", "tol", "damping",
    "em_damping", "threshold_rough", "threshold_accurate", "rough_max_iter",
}

# keys accepted in the [run] section
_RUN_KEYS = {"preset", "trials", "seed", "sweep", "out", "workers",
             "full_scale"}

# keys accepted in the [benchmark] section (solver recovery presets)
_BENCH_KEYS = {"i_dim", "l_dim", "j_dim", "n_blocks", "block_rows",
               "block_cols", "snr_db"}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a preset plus overrides, trials and seeding."""

    preset: str
    trials: int = 10
    seed: int = 0
    sweep: tuple | None = None        # overrides the preset's sweep values
    out: str | None = None
    workers: int = 1
    full_scale: bool = False
    scenario: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; "
                              f"choose from {', '.join(PRESETS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        unknown = set(self.scenario) - _SCENARIO_KEYS
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        unknown = set(self.solver) - _SOLVER_KEYS
        if unknown:
            raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
        unknown = set(self.benchmark) - _BENCH_KEYS
        if unknown:
            raise ConfigError(f"unknown benchmark keys: {sorted(unknown)}")


def _parse_scalar(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_value(text):
    if "," in text:
        return tuple(_parse_scalar(p) for p in text.split(",") if p.strip())
    return _parse_scalar(text)


def parse_config_text(text, source="<config>"):
    """Parse the section/key=value document into nested dicts.

    Unknown sections or keys raise ConfigError with the offending line
    number; values are typed as bool/int/float/str, commas make tuples.
    """
    sections = {"run": {}, "scenario": {}, "solver": {}, "benchmark": {}}
    allowed = {"run": _RUN_KEYS, "scenario": _SCENARIO_KEYS,
               "solver": _SOLVER_KEYS, "benchmark": _BENCH_KEYS}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in sections:
                raise ConfigError(
                    f"{source}:{lineno}: unknown section [{name}]")
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        if current is None:
            raise ConfigError(
                f"{source}:{lineno}: key outside of any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in allowed[current]:
            raise ConfigError(
                f"{source}:{lineno}: unknown key {key!r} in [{current}]")
        sections[current][key] = _parse_value(value)
    return sections


def read_config(path) -> ExperimentConfig:
    """Load an ExperimentConfig from a config file."""
    with open(path, "r", encoding="utf-8") as fh:
        sections = parse_config_text(fh.read(), source=str(path))
    run = sections["run"]
    if "preset" not in run:
        raise ConfigError(f"{path}: [run] must name a preset")
    sweep = run.get("sweep")
    if sweep is not None and not isinstance(sweep, tuple):
        sweep = (sweep,)
    return ExperimentConfig(
        preset=str(run["preset"]),
        trials=int(run.get("trials", 10)),
        seed=int(run.get("seed", 0)),
        sweep=sweep,
        out=run.get("out"),
        workers=int(run.get("workers", 1)),
        full_scale=bool(run.get("full_scale", False)),
        scenario=sections["scenario"],
        solver=sections["solver"],
        benchmark=sections["benchmark"])


def serialize_config(cfg: ExperimentConfig) -> str:
    """Round-trippable text form of an ExperimentConfig."""
    lines = ["[run]", f"preset = {cfg.preset}", f"trials = {cfg.trials}",
             f"seed = {cfg.seed}", f"workers = {cfg.workers}",
             f"full_scale = {str(cfg.full_scale).lower()}"]
    if cfg.sweep is not None:
        lines.append("sweep = " + ", ".join(str(v) for v in cfg.sweep))
    if cfg.out is not None:
        lines.append(f"out = {cfg.out}")
    for section in ("scenario", "solver", "benchmark"):
        payload = getattr(cfg, section)
        if payload:
            lines.append(f"[{section}]")
            for key in sorted(payload):
                val = payload[key]
                if isinstance(val, tuple):
                    lines.append(f"{key} = " + ", ".join(str(v) for v in val))
                elif isinstance(val, bool):
                    lines.append(f"{key} = {str(val).lower()}")
                else:
                    lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def scenario_from_config(cfg: ExperimentConfig, **extra) -> ScenarioConfig:
    """ScenarioConfig with desk defaults, file overrides, then ``extra``."""
    base = full_scale_scenario() if cfg.full_scale else ScenarioConfig()
    merged = {**cfg.scenario, **extra}
    return replace(base, **merged)


def full_scale_scenario() -> ScenarioConfig:
    """Paper-scale dimensions (not exercised by the CI-scale acceptance)."""
    return ScenarioConfig(
        n_doppler=128, m_delay=512, n_rough=64, m_rough=4,
        k_p=30, l_p=40, kp_dim=20, lp_dim=20,
        tau_max_bins=19.2, nu_max_bins=9.48,
        n_ue=1000, n_active=30, n_ap=4, upa_y=8, upa_z=8, n_paths=9,
        tx_power_dbm=10.0)
