"""Run configuration: layered TOML files plus ``section.key=value`` overrides.

Schema (every key optional; defaults shown)::

    [paths]                     # relative paths resolve against the file that sets them
    feed_dir = ""               # GTFS-style folder: stops, trips, stop_times[, routes]
    grid_nodes = ""             # grid override tables (both or neither)
    grid_branches = ""
    zone_file = ""              # route_id,link_index,zone_id,weight rows
    zone_polygons = ""          # or zone_id,vertices rows for the midpoint helper
    output_dir = "busgrid-out"

    [selection]
    distance_threshold_ft = 40000.0
    common_stop_min_routes = 3
    routes = []                 # route filter; empty = every route in the feed
    shape_dist_units = "ft"

    [routes]
    coach = {}                  # route id -> "40ft" | "60ft"; default 40ft
    dwell_hours = 0.2

    [grid]                      # synthesis settings, ignored with an override
    cluster_threshold_km = 2.0
    anchors = []                # explicit anchor stop ids instead of clustering
    r_per_mile_pu = 0.0019
    x_per_mile_pu = 0.0038
    default_current_sq_limit_pu = 4.0
    default_load_pu = 0.05
    vmin_pu = 0.9
    vmax_pu = 1.1
    base_mva = 10.0
    base_kv = 110.0
    coupling_k = 3

    [economics]
    station_cost = 200000.0
    pile_cost = 25000.0
    line_cost_per_mile = 390000.0
    loss_hours_per_day = 15.0
    planning_days = 3650.0
    electricity_price = 0.20

    [battery]
    soc_init = 0.1
    soc_min = 0.1
    soc_max = 0.9
    big_m = 45

    [fairness]
    enabled = false
    eta = 0.0
    i_max = 5
    zones = 0                   # expected H, checked against the zone data when > 0
    budget = "exact"            # or "at_most"

    [sweep]
    soc_init = [0.1, 0.2, 0.3, 0.4]
    eta = [0.0, 0.9, 0.95, 0.99]

    [solver]
    rel_gap_tol = 1e-4
    integrality_tol = 1e-6
    node_limit = 200000
    time_limit_seconds = 3600.0
    implied_integrality = true
    backend = "clarabel"        # or "dense-barrier" for tiny programs

    [run]
    workers = 1                 # sweep rows solved in parallel; env BUSGRID_WORKERS overrides
"""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import BatteryPolicy, EconomicParams, ValidationError
from .gridsynth import GridSynthConfig
from .ingest import SelectionConfig
from .solver import BnBConfig

WORKERS_ENV = "BUSGRID_WORKERS"

DEFAULTS: dict[str, dict[str, Any]] = {
    "paths": {"feed_dir": "", "grid_nodes": "", "grid_branches": "", "zone_file": "", "zone_polygons": "",
              "output_dir": "busgrid-out"},
    "selection": {"distance_threshold_ft": 40000.0, "common_stop_min_routes": 3, "routes": [],
                  "shape_dist_units": "ft"},
    "routes": {"coach": {}, "dwell_hours": 0.2},
    "grid": {"cluster_threshold_km": 2.0, "anchors": [], "r_per_mile_pu": 0.0019, "x_per_mile_pu": 0.0038,
             "default_current_sq_limit_pu": 4.0, "default_load_pu": 0.05, "vmin_pu": 0.9, "vmax_pu": 1.1,
             "base_mva": 10.0, "base_kv": 110.0, "coupling_k": 3},
    "economics": {f.name: f.default for f in fields(EconomicParams)},
    "battery": {f.name: f.default for f in fields(BatteryPolicy)},
    "fairness": {"enabled": False, "eta": 0.0, "i_max": 5, "zones": 0, "budget": "exact"},
    "sweep": {"soc_init": [0.1, 0.2, 0.3, 0.4], "eta": [0.0, 0.9, 0.95, 0.99]},
    "solver": {"rel_gap_tol": 1e-4, "integrality_tol": 1e-6, "node_limit": 200000, "time_limit_seconds": 3600.0,
               "implied_integrality": True, "backend": "clarabel"},
    "run": {"workers": 1},
}

PATH_KEYS = ("feed_dir", "grid_nodes", "grid_branches", "zone_file", "zone_polygons", "output_dir")
BACKENDS = ("clarabel", "dense-barrier")


class ConfigError(ValidationError):
    pass


def _merge(base: dict, layer: Mapping, where: str, root: Path | None) -> None:
    for section, values in layer.items():
        if section not in base:
            raise ConfigError(f"{where}: unknown section [{section}]")
        if not isinstance(values, Mapping):
            raise ConfigError(f"{where}: [{section}] must be a table")
        for key, val in values.items():
            if key not in base[section]:
                raise ConfigError(f"{where}: unknown key {section}.{key}")
            if section == "paths" and val and root is not None:
                val = str((root / val).resolve()) if not Path(val).is_absolute() else val
            base[section][key] = val


def parse_override(item: str) -> tuple[str, str, Any]:
    """``section.key=value`` with ``value`` read as a TOML literal (bare words become strings)."""
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    lhs, raw = item.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return section, key, value


@dataclass
class RunConfig:
    data: dict[str, dict[str, Any]] = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, files: Iterable[str | Path] = (), overrides: Iterable[str] = (),
             check_paths: bool = True) -> "RunConfig":
        cfg = cls()
        for f in files:
            path = Path(f)
            with path.open("rb") as fh:
                layer = tomllib.load(fh)
            _merge(cfg.data, layer, str(path), path.parent.resolve())
        for item in overrides:
            section, key, value = parse_override(item)
            layer = {section: {key: value}}
            _merge(cfg.data, layer, "override", Path.cwd())
        cfg.validate(check_paths)
        return cfg

    def with_values(self, **sections: Mapping[str, Any]) -> "RunConfig":
        out = RunConfig(copy.deepcopy(self.data))
        _merge(out.data, sections, "update", None)
        out.validate(check_paths=False)
        return out

    # typed views -----------------------------------------------------------------------------

    @property
    def paths(self) -> dict[str, str]:
        return self.data["paths"]

    def path(self, key: str) -> Path | None:
        val = self.paths[key]
        return Path(val) if val else None

    @property
    def selection(self) -> SelectionConfig:
        s = self.data["selection"]
        return SelectionConfig(float(s["distance_threshold_ft"]), int(s["common_stop_min_routes"]),
                               tuple(str(r) for r in s["routes"]) or None, s["shape_dist_units"])

    @property
    def coach_classes(self) -> dict[str, str]:
        return {str(k): str(v) for k, v in self.data["routes"]["coach"].items()}

    @property
    def dwell_hours(self) -> float:
        return float(self.data["routes"]["dwell_hours"])

    @property
    def gridsynth(self) -> GridSynthConfig:
        g = {k: v for k, v in self.data["grid"].items() if k != "anchors"}
        return GridSynthConfig(**g)

    @property
    def anchors(self) -> list[str] | None:
        a = [str(x) for x in self.data["grid"]["anchors"]]
        return a or None

    @property
    def economics(self) -> EconomicParams:
        return EconomicParams(**{k: float(v) for k, v in self.data["economics"].items()})

    @property
    def battery(self) -> BatteryPolicy:
        b = self.data["battery"]
        return BatteryPolicy(float(b["soc_init"]), float(b["soc_min"]), float(b["soc_max"]), int(b["big_m"]))

    @property
    def fairness(self) -> dict[str, Any]:
        return self.data["fairness"]

    @property
    def bnb(self) -> BnBConfig:
        s = self.data["solver"]
        return BnBConfig(float(s["rel_gap_tol"]), float(s["integrality_tol"]), int(s["node_limit"]),
                         float(s["time_limit_seconds"]))

    @property
    def implied_integrality(self) -> bool:
        return bool(self.data["solver"]["implied_integrality"])

    @property
    def backend(self) -> str:
        return self.data["solver"]["backend"]

    @property
    def workers(self) -> int:
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        return max(1, int(self.data["run"]["workers"]))

    def sweep_values(self, dimension: str) -> list[float]:
        key = {"theta0": "soc_init", "soc_init": "soc_init", "eta": "eta"}.get(dimension)
        if key is None:
            raise ConfigError(f"unknown sweep dimension {dimension!r}")
        vals = sorted(float(v) for v in self.data["sweep"][key])
        if not vals:
            raise ConfigError(f"sweep list {key} is empty")
        return vals

    def validate(self, check_paths: bool = True) -> None:
        # constructing the typed views runs every dataclass invariant
        try:
            self.selection, self.gridsynth, self.economics, self.battery, self.bnb
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.backend not in BACKENDS:
            raise ConfigError(f"solver.backend must be one of {BACKENDS}")
        f = self.fairness
        if f["budget"] not in ("exact", "at_most"):
            raise ConfigError("fairness.budget must be 'exact' or 'at_most'")
        if int(f["i_max"]) < 1:
            raise ConfigError("fairness.i_max must be >= 1")
        b = self.battery
        for v in self.data["sweep"]["soc_init"]:
            if not b.soc_min <= float(v) <= b.soc_max:
                raise ConfigError(f"sweep soc_init value {v} outside [{b.soc_min}, {b.soc_max}]")
        H = int(f["zones"])
        for v in list(self.data["sweep"]["eta"]) + [f["eta"]]:
            v = float(v)
            if v != 0 and not 0 < v <= 1:
                raise ConfigError(f"fairness level {v} out of range")
            if H and v != 0 and v < 1.0 / H - 1e-12:
                raise ConfigError(f"fairness level {v} out of range for {H} zones")
        if bool(self.paths["grid_nodes"]) != bool(self.paths["grid_branches"]):
            raise ConfigError("grid override needs both grid_nodes and grid_branches")
        if check_paths:
            for key in PATH_KEYS:
                if key == "output_dir" or not self.paths[key]:
                    continue
                if not Path(self.paths[key]).exists():
                    raise ConfigError(f"paths.{key} does not exist: {self.paths[key]}")

    def to_toml(self) -> str:
        """Flat TOML rendering of the effective configuration, paths made absolute."""
        def lit(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, (int, float)):
                return repr(v)
            if isinstance(v, str):
                return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
            if isinstance(v, Mapping):
                return "{ " + ", ".join(f'"{k}" = {lit(x)}' for k, x in v.items()) + " }"
            return "[" + ", ".join(lit(x) for x in v) + "]"

        lines = []
        for section, values in self.data.items():
            if section == "paths":
                # absolute, so the rendering means the same wherever it is saved
                values = {k: str(Path(v).resolve()) if v else v for k, v in values.items()}
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {lit(v)}" for k, v in values.items())
            lines.append("")
        return "\n".join(lines)
