from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from .controller import EpochResult, ProvisioningOrder
from .lagrangian import IterationRecord
from .model import NetworkPlan
from .plan_validator import Violation

FLOAT_FORMAT = "%.12g"

COMPARE_COLUMNS = ["instance_id", "oracle_value", "heuristic_value", "gap"]
TIMING_COLUMNS = ["oracle_seconds", "heuristic_seconds"]
ITERATION_COLUMNS = ["t", "dual_estimate", "best_primal", "grad_norm"]
TELEMETRY_COLUMNS = [
    "epoch",
    "duration_s",
    "energy_total",
    "utility_total",
    "links_on_count",
    "session_id",
    "rate",
    "utility",
]


@dataclass
class CompareRow:
    instance_id: int
    oracle_value: float
    heuristic_value: float
    oracle_seconds: float = 0.0
    heuristic_seconds: float = 0.0

    @property
    def gap(self) -> Optional[float]:
        """None when neither solver found a plan."""
        if math.isinf(self.oracle_value) and math.isinf(self.heuristic_value):
            return None
        return self.heuristic_value - self.oracle_value


@dataclass
class CompareSummary:
    instances: int
    mean_gap: float
    max_gap: float
    heuristic_failures: int


def compare_frame(rows: Sequence[CompareRow], timings: bool = False) -> pd.DataFrame:
    columns = COMPARE_COLUMNS + (TIMING_COLUMNS if timings else [])
    records = []
    for row in rows:
        record: Dict[str, Any] = {
            "instance_id": row.instance_id,
            "oracle_value": row.oracle_value,
            "heuristic_value": row.heuristic_value,
            "gap": row.gap,
        }
        if timings:
            record.update(oracle_seconds=row.oracle_seconds, heuristic_seconds=row.heuristic_seconds)
        records.append(record)
    return pd.DataFrame(records, columns=columns)


def summarize_compare(rows: Sequence[CompareRow]) -> CompareSummary:
    gaps = [gap for gap in (row.gap for row in rows) if gap is not None and math.isfinite(gap)]
    return CompareSummary(
        instances=len(rows),
        mean_gap=math.fsum(gaps) / len(gaps) if gaps else 0.0,
        max_gap=max(gaps) if gaps else 0.0,
        heuristic_failures=sum(1 for row in rows if math.isinf(row.heuristic_value)),
    )


def iterations_frame(history: Sequence[IterationRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(record) for record in history], columns=ITERATION_COLUMNS)


def telemetry_frame(results: Sequence[EpochResult]) -> pd.DataFrame:
    """Long format: one row per (epoch, session); session fields empty for idle epochs."""
    records: List[Dict[str, Any]] = []
    for result in results:
        report = result.telemetry
        epoch_fields = {
            "epoch": report.epoch,
            "duration_s": report.duration,
            "energy_total": report.energy_total,
            "utility_total": report.utility_total,
            "links_on_count": report.links_on_count,
        }
        if not report.sessions:
            records.append({**epoch_fields, "session_id": None, "rate": None, "utility": None})
        for session in report.sessions:
            records.append(
                {**epoch_fields, "session_id": session.session_id, "rate": session.rate, "utility": session.utility}
            )
    return pd.DataFrame(records, columns=TELEMETRY_COLUMNS)


def order_to_dict(order: ProvisioningOrder) -> Dict[str, Any]:
    return {
        "epoch": order.epoch,
        "retained": order.retained,
        "links_on": sorted(order.links_on),
        "links_off": sorted(order.links_off),
        "routing_tables": {
            node: {sid: {"next_hop": hop.node, "link": hop.link} for sid, hop in sorted(entries.items())}
            for node, entries in sorted(order.routing_tables.items())
        },
        "rates": {sid: order.rates[sid] for sid in sorted(order.rates)},
    }


def orders_to_list(results: Sequence[EpochResult]) -> List[Dict[str, Any]]:
    return [{**order_to_dict(r.order), "flagged": r.flagged} for r in results]


def objective_to_dict(plan: NetworkPlan, value: Optional[float]) -> Dict[str, Any]:
    breakdown = plan.breakdown
    return {
        "value": value,
        "utility_sum": breakdown.utility_sum if breakdown else None,
        "energy_sum": breakdown.energy_sum if breakdown else plan.energy_sum,
        "active_links": len(plan.active_links),
    }


def validation_to_dict(violations: Sequence[Violation]) -> Dict[str, Any]:
    return {
        "valid": not violations,
        "violations": [
            {
                "kind": v.kind.value,
                "message": v.message,
                "link": v.link,
                "node": v.node,
                "session": v.session,
            }
            for v in violations
        ],
    }


def write_json(payload: Any, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
