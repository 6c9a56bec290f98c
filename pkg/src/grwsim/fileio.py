"""Config parsing and stable output formats.

Scenario configs are flat ``key = value`` text; every key maps one-to-one
onto a ScenarioConfig or GrwParams field and unknown keys are hard errors
with line numbers (typos must not become silent defaults).

Outputs: collapse events as JSON Lines, flashes and matter-density
snapshots as flat CSV, ensemble summaries as a six-column CSV plus a richer
JSON twin.  All files are written atomically (temp + rename).
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Callable, Iterable

from .dynamics import GrwParams, Hamiltonian, TrajectoryRecord
from .ensemble import EnsembleSummary, StatRecord
from .errors import ConfigError
from .ontology import Flash, MatterDensityField
from .scenarios import History, Ontology, ScenarioConfig, ScenarioKind
from .state import Region


def _parse_times(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(tok) for tok in raw.split(","))


_SCHEMA: dict[str, Callable[[str], object]] = {
    # scenario fields
    "kind": lambda s: ScenarioKind(s.strip().lower()),
    "c1_sq": float,
    "n_marbles": int,
    "box_lower": float,
    "box_upper": float,
    "ontology": lambda s: Ontology(s.strip().lower()),
    "history": lambda s: History(s.strip().lower()),
    "theta_m": float,
    "theta_f": float,
    "window": float,
    "window_flashes": int,
    "backend": lambda s: s.strip().lower(),
    "inside_anchor": float,
    "outside_anchor": float,
    "packet_width": float,
    "grid_points": int,
    "x_min": float,
    "x_max": float,
    "snapshot_times": _parse_times,
    "density_times": _parse_times,
    # process parameters
    "lambda_eff": float,
    "sigma": float,
    "total_time": float,
    "hamiltonian": lambda s: s.strip().lower(),
    "mass": float,
}


def parse_scenario_text(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse flat key=value scenario text into a validated ScenarioConfig."""
    values: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip().lower()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _SCHEMA[key](raw_value.strip())
        except (ValueError, KeyError) as exc:
            raise ConfigError(
                f"{source}:{lineno}: bad value for {key!r}: {raw_value.strip()!r} ({exc})"
            ) from exc

    ham_kind = values.pop("hamiltonian", "zero")
    if ham_kind not in ("zero", "free"):
        raise ConfigError(f"{source}: hamiltonian must be 'zero' or 'free', got {ham_kind!r}")
    hamiltonian = Hamiltonian(str(ham_kind), float(values.pop("mass", 1.0)))
    params = GrwParams(
        lambda_eff=float(values.pop("lambda_eff", 1.0)),
        sigma=float(values.pop("sigma", 1.0)),
        total_time=float(values.pop("total_time", 10.0)),
        hamiltonian=hamiltonian,
    )
    box = Region(float(values.pop("box_lower", -10.0)), float(values.pop("box_upper", 10.0)))
    return ScenarioConfig(params=params, box=box, **values)  # type: ignore[arg-type]


def parse_scenario_file(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_scenario_text(text, source=str(path))


# ---------------------------------------------------------------------------
# writers

def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp~")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_summary_csv(path: str | Path, records: Iterable[StatRecord]) -> None:
    lines = ["statistic,estimate,se,target,z,pass"]
    for r in records:
        lines.append(
            f"{r.name},{_fmt(r.estimate)},{_fmt(r.se)},{_fmt(r.target)},{_fmt(r.z)},"
            f"{'true' if r.passed else 'false'}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def config_to_dict(config: ScenarioConfig) -> dict:
    return {
        "kind": config.kind.value,
        "c1_sq": config.c1_sq,
        "n_marbles": config.n_marbles,
        "box": [config.box.lower, config.box.upper],
        "ontology": config.ontology.value,
        "history": config.history.value,
        "theta_m": config.theta_m,
        "theta_f": config.theta_f,
        "window": config.window,
        "window_flashes": config.window_flashes,
        "backend": config.backend,
        "inside_anchor": config.inside_anchor,
        "outside_anchor": config.outside_anchor,
        "packet_width": config.packet_width,
        "grid_points": config.grid_points,
        "x_min": config.x_min,
        "x_max": config.x_max,
        "snapshot_times": list(config.snapshot_times),
        "density_times": list(config.density_times),
        "lambda_eff": config.params.lambda_eff,
        "sigma": config.params.sigma,
        "total_time": config.params.total_time,
        "hamiltonian": config.params.hamiltonian.kind,
        "mass": config.params.hamiltonian.mass,
    }


def _jsonable(x: float | None):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return x


def write_summary_json(path: str | Path, summary: EnsembleSummary) -> None:
    payload = {
        "config": config_to_dict(summary.config),
        "n_trajectories": summary.n_trajectories,
        "master_seed": summary.master_seed,
        "failures": summary.failures,
        "diagnostics": summary.diagnostics,
        "records": [
            {
                "statistic": r.name,
                "estimate": _jsonable(r.estimate),
                "se": _jsonable(r.se),
                "target": _jsonable(r.target),
                "z": _jsonable(r.z),
                "p_value": _jsonable(r.p_value),
                "pass": r.passed,
                "provenance": r.provenance,
            }
            for r in summary.records
        ],
        "histograms": summary.histograms,
    }
    atomic_write_text(path, json.dumps(payload, indent=1) + "\n")


def write_events_jsonl(path: str | Path, record: TrajectoryRecord) -> None:
    """One JSON object per collapse event: {t, particle, center, pre_weights, post_weights}."""
    lines = []
    for e in record.events:
        lines.append(
            json.dumps(
                {
                    "t": e.time,
                    "particle": e.particle,
                    "center": e.center,
                    "pre_weights": list(e.pre_weights),
                    "post_weights": list(e.post_weights),
                },
                separators=(",", ":"),
            )
        )
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def write_flashes_csv(path: str | Path, flashes: Iterable[Flash]) -> None:
    lines = ["time,position,particle"]
    for f in flashes:
        lines.append(f"{_fmt(f.time)},{_fmt(f.position)},{f.particle}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_density_csv(path: str | Path, field: MatterDensityField) -> None:
    lines = ["x,m"]
    for x, m in zip(field.grid, field.values):
        lines.append(f"{_fmt(x)},{_fmt(m)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_summary_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read summary {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed summary {path}: {exc}") from exc
