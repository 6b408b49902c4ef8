"""Scenario configuration files.

A scenario is a YAML mapping::

    name: short_hop_sat
    topology: {kind: short_hop, n_per_region: 4}
    traffic: {mode: saturated}
    variants: [baseline_csma, fixed_reservation, ftkn_crm]
    params: {th_res: 0.8}
    duration_s: 5
    seeds: [0, 1, 2, 3, 4]
    sweep: {params.fixed_offset_us: [4000, 8000, 16000]}

Every section except ``topology`` is optional. Unknown keys are rejected
and every error names the offending field path.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Any

import yaml

from .core import FrameTiming, InvalidParams, ProtocolParams, default_params, default_timing
from .mac import VARIANTS
from .simulator import RunSpec
from .topology import TrafficSpec, make_chain, make_cross, make_random, make_short_hop


class ParseError(ValueError):
    def __init__(self, line: int | None, message: str):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line
        self.message = message


class ValidationError(ValueError):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path
        self.message = message


TOPOLOGY_KINDS = ("short_hop", "chain", "cross", "random")

# keys each generator accepts, with defaults
TOPOLOGY_KEYS: dict[str, dict[str, Any]] = {
    "short_hop": {"n_per_region": 4, "spacing_m": 500.0},
    "chain": {"regions": 5, "n_per_region": 3, "spacing_m": 500.0},
    "cross": {"arm_regions": 2, "n_per_region": 3, "spacing_m": 500.0},
    "random": {"n_nodes": 20, "area_m": 2000.0, "max_link_m": 500.0},
}
COMMON_TOPOLOGY_KEYS = {"tx_range_m": 750.0}

# traffic each generator uses unless the config says otherwise
DEFAULT_TRAFFIC = {
    "short_hop": {"mode": "saturated", "flow_rule": "region_pair"},
    "chain": {"mode": "offered_load", "offered_rate_bits_per_s": 1e6, "flow_rule": "region_pair"},
    "cross": {"mode": "saturated", "flow_rule": "region_pair"},
    "random": {"mode": "offered_load", "offered_rate_bits_per_s": 5e5, "flow_rule": "k_hop", "k": 2},
}

TRAFFIC_KEYS = [f.name for f in dataclasses.fields(TrafficSpec)]
TOP_KEYS = ("name", "topology", "traffic", "variant", "variants", "params", "timing", "duration_s", "seeds",
            "sweep", "rts_cts", "output_dir")


@dataclass
class ScenarioConfig:
    topology: dict[str, Any]
    name: str = "scenario"
    traffic: dict[str, Any] = field(default_factory=dict)
    variants: list[str] = field(default_factory=lambda: list(VARIANTS))
    params: dict[str, Any] = field(default_factory=dict)
    timing: dict[str, Any] = field(default_factory=dict)
    duration_s: float = 5.0
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    sweep: dict[str, list] = field(default_factory=dict)
    rts_cts: bool = True
    output_dir: str | None = None

    def __post_init__(self):
        validate(self)

    @property
    def kind(self) -> str:
        return self.topology["kind"]

    def protocol_params(self, overrides: dict | None = None) -> ProtocolParams:
        merged = {**self.params, **(overrides or {})}
        return default_params(**merged)

    def frame_timing(self) -> FrameTiming:
        return default_timing(**self.timing)

    def traffic_spec(self) -> TrafficSpec:
        return TrafficSpec(**{**DEFAULT_TRAFFIC[self.kind], **self.traffic})

    def sweep_points(self) -> list[dict[str, Any]]:
        """Every combination of swept values; [{}] when nothing is swept."""
        if not self.sweep:
            return [{}]
        keys = sorted(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]

    def at_point(self, point: dict[str, Any]) -> "ScenarioConfig":
        """Copy with the swept values written into their sections."""
        sections = {"topology": dict(self.topology), "traffic": dict(self.traffic),
                    "params": dict(self.params), "timing": dict(self.timing)}
        for path, value in point.items():
            section, key = path.split(".", 1)
            sections[section][key] = value
        return dataclasses.replace(self, sweep={}, **sections)

    def build(self, seed: int, variant: str | None = None) -> RunSpec:
        topo_args = {**COMMON_TOPOLOGY_KEYS, **TOPOLOGY_KEYS[self.kind]}
        topo_args.update({k: v for k, v in self.topology.items() if k != "kind"})
        kind = self.kind
        if kind == "short_hop":
            topo, _ = make_short_hop(seed=seed, **topo_args)
        elif kind == "chain":
            topo, _ = make_chain(seed=seed, **topo_args)
        elif kind == "cross":
            topo, _ = make_cross(seed=seed, **topo_args)
        else:
            topo = make_random(seed=seed, **topo_args)
        return RunSpec(topo, self.traffic_spec(), variant or self.variants[0], self.protocol_params(),
                       self.frame_timing(), int(round(self.duration_s * 1e6)), self.rts_cts)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "topology": dict(self.topology)}
        for key in ("traffic", "params", "timing", "sweep"):
            value = getattr(self, key)
            if value:
                out[key] = {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in value.items()}
        out["variants"] = list(self.variants)
        out["duration_s"] = self.duration_s
        out["seeds"] = list(self.seeds)
        out["rts_cts"] = self.rts_cts
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        return out


def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ValidationError(path, "expected a mapping")
    return value


def _check_keys(mapping: dict, allowed, path: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}" if path else str(key), "unknown key")


def _resolve_sweep_key(key: str, kind: str) -> str:
    """Full ``section.field`` path for a sweep key; bare names are looked up."""
    if "." in key:
        section, name = key.split(".", 1)
        allowed = {
            "params": ProtocolParams.field_names(),
            "timing": [f.name for f in dataclasses.fields(FrameTiming)],
            "traffic": TRAFFIC_KEYS,
            "topology": [*TOPOLOGY_KEYS[kind], *COMMON_TOPOLOGY_KEYS],
        }.get(section)
        if allowed is None or name not in allowed:
            raise ValidationError(f"sweep.{key}", "unknown sweep target")
        return key
    hits = []
    for candidate in (key, f"{key}_us", f"{key}_bits_per_s"):
        if candidate in ProtocolParams.field_names():
            hits.append(f"params.{candidate}")
        if candidate in TRAFFIC_KEYS:
            hits.append(f"traffic.{candidate}")
        if candidate in TOPOLOGY_KEYS[kind]:
            hits.append(f"topology.{candidate}")
    if len(hits) != 1:
        raise ValidationError(f"sweep.{key}", "unknown or ambiguous sweep target" if not hits
                              else f"ambiguous sweep target, one of {hits}")
    return hits[0]


def validate(cfg: ScenarioConfig) -> None:
    topo = _require_mapping(cfg.topology, "topology")
    kind = topo.get("kind")
    if kind not in TOPOLOGY_KINDS:
        raise ValidationError("topology.kind", f"must be one of {TOPOLOGY_KINDS}")
    _check_keys(topo, {"kind", *TOPOLOGY_KEYS[kind], *COMMON_TOPOLOGY_KEYS}, "topology")
    for key, value in topo.items():
        if key == "kind":
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            raise ValidationError(f"topology.{key}", "must be a positive number")
        if key in ("n_per_region", "regions", "arm_regions", "n_nodes") and not isinstance(value, int):
            raise ValidationError(f"topology.{key}", "must be an integer")
    if kind == "random" and topo.get("n_nodes", 2) < 2:
        raise ValidationError("topology.n_nodes", "must be at least 2")
    if kind == "chain" and topo.get("regions", 5) < 2:
        raise ValidationError("topology.regions", "must be at least 2")

    _check_keys(_require_mapping(cfg.traffic, "traffic"), TRAFFIC_KEYS, "traffic")
    if kind == "random" and cfg.traffic.get("flow_rule", "k_hop") == "region_pair":
        raise ValidationError("traffic.flow_rule", "random topologies have no region pairs")
    try:
        cfg.traffic_spec()
    except (TypeError, ValueError) as exc:
        raise ValidationError("traffic", str(exc)) from None

    if not isinstance(cfg.variants, list) or not cfg.variants:
        raise ValidationError("variants", "must be a non-empty list")
    for i, v in enumerate(cfg.variants):
        if v not in VARIANTS:
            raise ValidationError(f"variants[{i}]", f"unknown variant {v!r}; expected one of {VARIANTS}")

    _check_keys(_require_mapping(cfg.params, "params"), ProtocolParams.field_names(), "params")
    try:
        cfg.protocol_params()
    except InvalidParams as exc:
        raise ValidationError(f"params.{exc.field}", exc.message) from None
    except TypeError as exc:
        raise ValidationError("params", str(exc)) from None

    _check_keys(_require_mapping(cfg.timing, "timing"), [f.name for f in dataclasses.fields(FrameTiming)],
                "timing")
    for key, value in cfg.timing.items():
        if value is not None and (isinstance(value, bool) or not isinstance(value, int) or value < 0):
            raise ValidationError(f"timing.{key}", "must be a non-negative integer")

    if isinstance(cfg.duration_s, bool) or not isinstance(cfg.duration_s, (int, float)) or cfg.duration_s <= 0:
        raise ValidationError("duration_s", "must be a positive number")
    if not isinstance(cfg.seeds, list) or not cfg.seeds:
        raise ValidationError("seeds", "must be a non-empty list of integers")
    for i, s in enumerate(cfg.seeds):
        if isinstance(s, bool) or not isinstance(s, int):
            raise ValidationError(f"seeds[{i}]", "must be an integer")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ValidationError("seeds", "must not repeat")
    if not isinstance(cfg.rts_cts, bool):
        raise ValidationError("rts_cts", "must be true or false")
    if cfg.output_dir is not None and not isinstance(cfg.output_dir, str):
        raise ValidationError("output_dir", "must be a path string")

    resolved = {}
    for key, values in _require_mapping(cfg.sweep, "sweep").items():
        path = _resolve_sweep_key(str(key), kind)
        if not isinstance(values, list) or not values:
            raise ValidationError(f"sweep.{key}", "must be a non-empty list")
        resolved[path] = values
    cfg.sweep = resolved
    for point in cfg.sweep_points():
        for path in point:
            try:
                sub = cfg.at_point({path: point[path]})
                if path.startswith("params."):
                    sub.protocol_params()
                elif path.startswith("traffic."):
                    sub.traffic_spec()
            except (InvalidParams, ValueError, TypeError) as exc:
                raise ValidationError(f"sweep.{path}", str(exc)) from None


def from_dict(data: Any) -> ScenarioConfig:
    data = _require_mapping(data, "<root>")
    _check_keys(data, TOP_KEYS, "")
    if "topology" not in data:
        raise ValidationError("topology", "required")
    kwargs = dict(data)
    if "variant" in kwargs:
        if "variants" in kwargs:
            raise ValidationError("variant", "give either variant or variants, not both")
        kwargs["variants"] = kwargs.pop("variant")
    if "variants" in kwargs and isinstance(kwargs["variants"], str):
        kwargs["variants"] = [kwargs["variants"]]
    for key in ("traffic", "params", "timing", "sweep"):
        if kwargs.get(key) is None:
            kwargs.pop(key, None)
    return ScenarioConfig(**kwargs)


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ParseError(mark.line + 1 if mark else None, exc.problem or str(exc)) from None
    except yaml.YAMLError as exc:
        raise ParseError(None, str(exc)) from None
    if data is None:
        raise ParseError(1, "empty document")
    return from_dict(data)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
