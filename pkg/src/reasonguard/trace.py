"""Line-delimited trace records: the audit log wire format.

One JSON object per step with a fixed key order and no timestamps, so
repeated runs of a deterministic session are byte-identical.
"""

from __future__ import annotations

import json
from typing import Optional

from .governor import EpisodeRecord, Feedback, GuardVerdict, TheoryRevision
from .reasons import Justification, PermissibleSet

SCHEMA_VERSION = 1


def _justification_payload(j: Justification) -> dict:
    return {
        "triggered": [
            {
                "source": g.source_id,
                "substitution": {v: c for v, c in g.substitution},
                "conclusion": str(g.conclusion),
            }
            for g in j.triggered
        ],
        "conflicts": [list(pair) for pair in sorted(j.conflicts)],
        "defeats": [list(pair) for pair in sorted(j.defeats)],
    }


def _phi_payload(phi: PermissibleSet) -> dict:
    return {"kind": phi.kind, "mats": [str(m) for m in phi.mats]}


def _verdict_payload(v: GuardVerdict) -> dict:
    if v.kind == "accept":
        return {"kind": "accept", "action": v.action}
    return {"kind": "reject", "reason": v.reason}


def _feedback_payload(fb: Optional[Feedback]) -> Optional[dict]:
    if fb is None:
        return None
    return {
        "step": fb.step,
        "criticized_action": fb.criticized_action,
        "expected_mat": str(fb.expected_mat),
        "reason": str(fb.reason),
    }


def _revision_payload(rev: Optional[TheoryRevision]) -> Optional[dict]:
    if rev is None:
        return None
    return {
        "blame": rev.blame,
        "added_default": str(rev.added_default) if rev.added_default else None,
        "added_priorities": [list(p) for p in rev.added_priorities],
        "forwarded": rev.forwarded,
    }


def record_payload(record: EpisodeRecord) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "step": record.step,
        "observation": record.observation,
        "facts": sorted(str(a) for a in record.facts.facts),
        "phi_perm": _phi_payload(record.phi_perm),
        "justification": _justification_payload(record.justification),
        "proposals": [
            {
                "action": p.action,
                "declared_target": str(p.declared_target) if p.declared_target else None,
                "confidence": p.confidence,
            }
            for p in record.proposals
        ],
        "verdicts": [_verdict_payload(v) for v in record.verdicts],
        "executed": record.executed,
        "labels": sorted(str(p) for p in record.labels),
        "feedback": _feedback_payload(record.feedback),
        "revision": _revision_payload(record.revision),
    }


def record_line(record: EpisodeRecord) -> str:
    return json.dumps(record_payload(record), separators=(", ", ": "))


def write_trace(records, path: str) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(record_line(record) + "\n")


def read_trace(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
