"""JSON, JSONL and CSV persistence.

Complex numbers are ``[re, im]`` pairs. Floats are written by ``json`` in
shortest round-trip form, so matrices survive a write/read cycle exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..formalism.povm import Povm
from .config import FORMAT_VERSION, ConfigError, check_version


def to_jsonable(x):
    """Recursively convert numpy values, tuples and complex numbers to JSON types."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return encode_array(x) if np.iscomplexobj(x) else to_jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def encode_array(a: np.ndarray):
    """Nested lists with ``[re, im]`` leaves."""
    a = np.asarray(a, dtype=np.complex128)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_array(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    if arr.shape[-1] != 2:
        raise ValueError("complex arrays need [re, im] leaves")
    return arr[..., 0] + 1j * arr[..., 1]


def _outcome_from_json(o):
    return tuple(_outcome_from_json(v) for v in o) if isinstance(o, list) else o


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def povm_to_dict(povm: Povm) -> dict:
    return {"format_version": FORMAT_VERSION, "kind": "povm", "dim": povm.dim,
            "outcomes": to_jsonable(list(povm.outcomes)), "effects": encode_array(povm.effects),
            "meta": to_jsonable(povm.meta)}


def povm_from_dict(doc: dict) -> Povm:
    check_version(doc.get("format_version"))
    if doc.get("kind") != "povm":
        raise ConfigError([("/kind", "not a POVM document")])
    outcomes = [_outcome_from_json(o) for o in doc["outcomes"]]
    return Povm(outcomes, decode_array(doc["effects"]), dict(doc.get("meta", {})))


def write_povm(povm: Povm, path: str | Path) -> None:
    write_json(povm_to_dict(povm), path)


def read_povm(path: str | Path) -> Povm:
    return povm_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_report(report, path: str | Path) -> None:
    """Write a report object (anything with ``to_dict``) as JSON with a format version."""
    doc = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    write_json({"format_version": FORMAT_VERSION, **doc}, path)


def read_report(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    check_version(doc.get("format_version"))
    return doc


def csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).write_text(csv_text(columns, rows), encoding="utf-8")


# ---- trajectory records ----

def state_digest(psi: np.ndarray) -> str:
    """SHA-256 of the little-endian complex128 bytes of a state."""
    return hashlib.sha256(np.ascontiguousarray(psi, dtype="<c16").tobytes()).hexdigest()


def trajectory_record(ens, k: int, traj_id: int) -> dict:
    """JSON-ready record of trajectory ``k`` of an ensemble."""
    a, b = int(ens.offsets[k]), int(ens.offsets[k + 1])
    flashes = [[float(t), int(x), int(i)] for t, x, i in zip(ens.times[a:b], ens.sites[a:b], ens.labels[a:b])]
    cps = []
    if ens.checkpoint_states is not None:
        cps = [{"t": float(t), "digest": state_digest(ens.checkpoint_states[k, j])}
               for j, t in enumerate(ens.checkpoint_times)]
    return {"format_version": FORMAT_VERSION, "id": int(traj_id), "seed": int(ens.seed),
            "stream": int(ens.streams[k]), "window": [float(ens.start), float(ens.end)],
            "flashes": flashes, "checkpoints": cps, "final_state_hash": state_digest(ens.final_states[k])}


def record_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"


def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(record_line(r))


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            if not line.strip():
                continue
            rec = json.loads(line)
            check_version(rec.get("format_version"), f"line {n + 1}/format_version")
            out.append(rec)
    return out
