from __future__ import annotations

import json
import math
from dataclasses import fields
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Sequence

from .errors import InputError
from .model import (
    Link,
    NetworkPlan,
    OracleLimits,
    Session,
    SolverConfig,
    SolverMode,
    SubgradientConfig,
    Topology,
    UtilityFunction,
    UtilityKind,
    check_sessions,
)

if TYPE_CHECKING:
    from .controller import EpochTrace


def _read_json(json_path: Path | str) -> Any:
    path = Path(json_path)
    try:
        with path.open("r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise InputError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _expect(value: Any, kind: type, field: str) -> Any:
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        raise InputError(f"expected {kind.__name__}, got {type(value).__name__}", field=field)
    return value


def _number(value: Any, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"expected a number, got {value!r}", field=field)
    if not math.isfinite(value):
        raise InputError(f"expected a finite number, got {value!r}", field=field)
    return float(value)


def _integer(value: Any, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InputError(f"expected an integer, got {value!r}", field=field)
    return value


def _require(entry: Mapping[str, Any], key: str, field: str) -> Any:
    if key not in entry:
        raise InputError("missing required field", field=f"{field}.{key}")
    return entry[key]


def topology_from_dict(data: Any) -> Topology:
    _expect(data, dict, "topology")
    nodes = _expect(_require(data, "nodes", "topology"), list, "nodes")
    if not nodes:
        raise InputError("empty topology", field="nodes")
    for index, node in enumerate(nodes):
        _expect(node, str, f"nodes[{index}]")
    undirected = _expect(data.get("undirected", False), bool, "undirected")

    known = set(nodes)
    links: List[Link] = []
    for index, entry in enumerate(_expect(data.get("links", []), list, "links")):
        where = f"links[{index}]"
        _expect(entry, dict, where)
        src = _expect(_require(entry, "from", where), str, f"{where}.from")
        dst = _expect(_require(entry, "to", where), str, f"{where}.to")
        for key, node in (("from", src), ("to", dst)):
            if node not in known:
                raise InputError(f"unknown node {node!r}", field=f"{where}.{key}")
        capacity = _number(_require(entry, "capacity", where), f"{where}.capacity")
        energy = _number(_require(entry, "energy", where), f"{where}.energy")
        try:
            links.append(Link(src=src, dst=dst, capacity=capacity, energy=energy))
            if undirected:
                links.append(Link(src=dst, dst=src, capacity=capacity, energy=energy))
        except InputError as exc:
            raise exc.under(where) from None

    return Topology(nodes=tuple(nodes), links=tuple(links))


def load_topology(json_path: Path | str) -> Topology:
    """Load a topology; link index is the position in the ``links`` array."""
    return topology_from_dict(_read_json(json_path))


def topology_to_dict(topology: Topology) -> Dict[str, Any]:
    return {
        "nodes": list(topology.nodes),
        "links": [
            {"from": link.src, "to": link.dst, "capacity": link.capacity, "energy": link.energy}
            for link in topology.links
        ],
    }


def utility_from_json(value: Any, field: str) -> UtilityFunction:
    try:
        if isinstance(value, str):
            return UtilityFunction(kind=UtilityKind(value))
        _expect(value, dict, field)
        unknown = set(value) - {"kind", "scale", "reference"}
        if unknown:
            raise InputError(f"unknown fields {sorted(unknown)}", field=field)
        reference = value.get("reference")
        return UtilityFunction(
            kind=UtilityKind(_expect(_require(value, "kind", field), str, f"{field}.kind")),
            scale=_number(value.get("scale", 1.0), f"{field}.scale"),
            reference=None if reference is None else _number(reference, f"{field}.reference"),
        )
    except InputError as exc:
        if exc.field and exc.field.startswith(field):
            raise
        raise exc.under(field) from None
    except ValueError:
        raise InputError(f"unknown utility kind {value!r}", field=field) from None


def utility_to_json(session: Session) -> Any:
    utility = session.utility
    reference = utility.reference
    if utility.kind is UtilityKind.NORMALIZED_LADDER and reference == session.max_rate:
        reference = None
    if utility.scale == 1.0 and reference is None:
        return utility.kind.value
    payload: Dict[str, Any] = {"kind": utility.kind.value, "scale": utility.scale}
    if reference is not None:
        payload["reference"] = reference
    return payload


def session_from_dict(entry: Any, where: str) -> Session:
    _expect(entry, dict, where)
    rates = _expect(_require(entry, "rates", where), list, f"{where}.rates")
    try:
        return Session(
            id=_expect(_require(entry, "id", where), str, f"{where}.id"),
            source=_expect(_require(entry, "source", where), str, f"{where}.source"),
            destination=_expect(_require(entry, "destination", where), str, f"{where}.destination"),
            rates=tuple(_number(r, f"{where}.rates[{i}]") for i, r in enumerate(rates)),
            utility=utility_from_json(entry.get("utility", "log1p"), f"{where}.utility"),
        )
    except InputError as exc:
        if exc.field and exc.field.startswith(where):
            raise
        raise exc.under(where) from None


def session_to_dict(session: Session) -> Dict[str, Any]:
    return {
        "id": session.id,
        "source": session.source,
        "destination": session.destination,
        "rates": list(session.rates),
        "utility": utility_to_json(session),
    }


def demand_from_dict(data: Any, topology: Optional[Topology] = None) -> List[Session]:
    _expect(data, dict, "demand")
    entries = _expect(_require(data, "sessions", "demand"), list, "sessions")
    sessions = [session_from_dict(entry, f"sessions[{i}]") for i, entry in enumerate(entries)]
    if topology is not None:
        check_sessions(topology, sessions)
    return sessions


def load_demand(json_path: Path | str, topology: Optional[Topology] = None) -> List[Session]:
    return demand_from_dict(_read_json(json_path), topology)


def demand_to_dict(sessions: Sequence[Session]) -> Dict[str, Any]:
    return {"sessions": [session_to_dict(s) for s in sessions]}


def _reject_unknown(entry: Mapping[str, Any], cls: type, field: str) -> None:
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(entry) - allowed)
    if unknown:
        prefix = f"{field}." if field else ""
        raise InputError(f"unknown field {unknown[0]!r}", field=f"{prefix}{unknown[0]}")


def _subgradient_from_dict(entry: Any) -> SubgradientConfig:
    _expect(entry, dict, "subgradient")
    _reject_unknown(entry, SubgradientConfig, "subgradient")
    kwargs: Dict[str, Any] = {}
    for key in ("theta0", "stall_tolerance"):
        if key in entry:
            kwargs[key] = _number(entry[key], f"subgradient.{key}")
    for key in ("max_iters", "stall_window"):
        if key in entry:
            kwargs[key] = _integer(entry[key], f"subgradient.{key}")
    if entry.get("lambda_init") is not None:
        kwargs["lambda_init"] = _number(entry["lambda_init"], "subgradient.lambda_init")
    for key in ("exact_subproblem", "relaxed_rates"):
        if key in entry:
            kwargs[key] = _expect(entry[key], bool, f"subgradient.{key}")
    return SubgradientConfig(**kwargs)


def _limits_from_dict(entry: Any) -> OracleLimits:
    _expect(entry, dict, "limits")
    _reject_unknown(entry, OracleLimits, "limits")
    kwargs: Dict[str, Any] = {}
    for key in ("max_links", "max_rate_combos"):
        if key in entry:
            kwargs[key] = _integer(entry[key], f"limits.{key}")
    if "splittable" in entry:
        kwargs["splittable"] = _expect(entry["splittable"], bool, "limits.splittable")
    return OracleLimits(**kwargs)


def config_from_dict(data: Any) -> SolverConfig:
    _expect(data, dict, "config")
    _reject_unknown(data, SolverConfig, "")
    kwargs: Dict[str, Any] = {}
    if "mode" in data:
        mode = _expect(data["mode"], str, "mode")
        try:
            kwargs["mode"] = SolverMode(mode)
        except ValueError:
            raise InputError(f"unknown mode {mode!r}", field="mode") from None
    for key in ("alpha", "beta", "u_floor", "min_rate"):
        if key in data:
            kwargs[key] = _number(data[key], key)
    if "allow_drop" in data:
        kwargs["allow_drop"] = _expect(data["allow_drop"], bool, "allow_drop")
    if "seed" in data:
        kwargs["seed"] = _integer(data["seed"], "seed")
    if "subgradient" in data:
        kwargs["subgradient"] = _subgradient_from_dict(data["subgradient"])
    if "limits" in data:
        kwargs["limits"] = _limits_from_dict(data["limits"])
    return SolverConfig(**kwargs)


def load_config(json_path: Path | str) -> SolverConfig:
    return config_from_dict(_read_json(json_path))


def config_to_dict(cfg: SolverConfig) -> Dict[str, Any]:
    sub = cfg.subgradient
    return {
        "mode": cfg.mode.value,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "u_floor": cfg.u_floor,
        "allow_drop": cfg.allow_drop,
        "min_rate": cfg.min_rate,
        "seed": cfg.seed,
        "subgradient": {
            "theta0": sub.theta0,
            "max_iters": sub.max_iters,
            "stall_tolerance": sub.stall_tolerance,
            "stall_window": sub.stall_window,
            "lambda_init": sub.lambda_init,
            "exact_subproblem": sub.exact_subproblem,
            "relaxed_rates": sub.relaxed_rates,
        },
        "limits": {
            "max_links": cfg.limits.max_links,
            "max_rate_combos": cfg.limits.max_rate_combos,
            "splittable": cfg.limits.splittable,
        },
    }


def plan_to_dict(plan: NetworkPlan) -> Dict[str, Any]:
    payload: Dict[str, Any] = {
        "active_links": sorted(plan.active_links),
        "sessions": [
            {"id": sid, "rate": plan.rates[sid], "route": list(plan.routes.get(sid, ()))}
            for sid in sorted(plan.rates)
        ],
        "flows": [
            {"link": link, "session": sid, "value": value}
            for (link, sid), value in sorted(plan.flows.flows.items())
        ],
    }
    if plan.breakdown is not None:
        payload["objective"] = {
            "utility_sum": plan.breakdown.utility_sum,
            "energy_sum": plan.breakdown.energy_sum,
            "combined": plan.breakdown.combined,
        }
    return payload


def trace_from_dict(data: Any, topology: Topology) -> "EpochTrace":
    from .controller import Epoch, EpochTrace

    _expect(data, dict, "trace")
    epochs = []
    for index, entry in enumerate(_expect(_require(data, "epochs", "trace"), list, "epochs")):
        where = f"epochs[{index}]"
        _expect(entry, dict, where)
        arrivals = _expect(entry.get("arrivals", []), list, f"{where}.arrivals")
        departures = _expect(entry.get("departures", []), list, f"{where}.departures")
        epochs.append(
            Epoch(
                index=_integer(entry.get("epoch", index), f"{where}.epoch"),
                duration=_number(_require(entry, "duration", where), f"{where}.duration"),
                arrivals=tuple(session_from_dict(a, f"{where}.arrivals[{i}]") for i, a in enumerate(arrivals)),
                departures=tuple(_expect(d, str, f"{where}.departures[{i}]") for i, d in enumerate(departures)),
            )
        )
    trace = EpochTrace(epochs=tuple(epochs))
    trace.check(topology)
    return trace


def load_trace(json_path: Path | str, topology: Topology) -> "EpochTrace":
    return trace_from_dict(_read_json(json_path), topology)


def trace_to_dict(trace: "EpochTrace") -> Dict[str, Any]:
    return {
        "epochs": [
            {
                "epoch": epoch.index,
                "duration": epoch.duration,
                "arrivals": [session_to_dict(s) for s in epoch.arrivals],
                "departures": list(epoch.departures),
            }
            for epoch in trace.epochs
        ]
    }
