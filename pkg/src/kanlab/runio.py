"""Run artifacts on disk.

Datasets and checkpoints are flat little-endian float64 binaries plus a
JSON manifest carrying shapes and sha256 checksums. Metric streams go to
a wide CSV, one row per logged iteration, blank where a metric was not
recorded at that iteration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diag import MetricLog
from .diffcore import DTYPE, ParamStore

MANIFEST = "manifest.json"

_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def sha256_bytes(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# array bundles
# ---------------------------------------------------------------------------

def write_arrays(out_dir, arrays: dict, *, meta: dict | None = None) -> dict:
    """Write each named array as <name>.bin (row-major <f8) and a manifest
    recording shapes and checksums. Returns the manifest dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, arr in arrays.items():
        if not _NAME.match(name):
            raise ValueError(f"unusable array name {name!r}")
        arr = np.asarray(arr, dtype=DTYPE)
        payload = arr.astype("<f8").tobytes(order="C")
        fn = f"{name}.bin"
        (out / fn).write_bytes(payload)
        entries[name] = {"file": fn, "shape": list(arr.shape),
                         "sha256": sha256_bytes(payload)}
    manifest = {"arrays": entries, "meta": meta or {}}
    with open(out / MANIFEST, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return manifest


def read_arrays(in_dir, *, verify: bool = True):
    """Load a bundle written by write_arrays; returns (arrays, meta).
    Checksum or shape disagreement raises."""
    root = Path(in_dir)
    with open(root / MANIFEST) as f:
        manifest = json.load(f)
    arrays = {}
    for name, ent in manifest["arrays"].items():
        payload = (root / ent["file"]).read_bytes()
        if verify and sha256_bytes(payload) != ent["sha256"]:
            raise RuntimeError(f"checksum mismatch for array {name!r}")
        shape = tuple(ent["shape"])
        arr = np.frombuffer(payload, dtype="<f8").astype(DTYPE)
        if arr.size != int(np.prod(shape)):
            raise RuntimeError(f"size mismatch for array {name!r}")
        arrays[name] = arr.reshape(shape)
    return arrays, manifest.get("meta", {})


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    params: dict
    config: dict
    stage: str
    done: bool
    trainer_state: dict | None = None
    extra: dict = field(default_factory=dict)


def save_checkpoint(out_dir, store: ParamStore, *, config: dict | None = None,
                    trainer_state: dict | None = None, stage: str = "main",
                    done: bool = False, extra: dict | None = None) -> None:
    arrays = {f"param.{s}": store.view(s) for s in store.segments}
    meta = {"kind": "checkpoint", "stage": stage, "done": bool(done),
            "config": config or {}, "segments": list(store.segments)}
    if trainer_state is not None:
        st = dict(trainer_state)
        arrays["opt.adam_m"] = st.pop("adam_m")
        arrays["opt.adam_v"] = st.pop("adam_v")
        for name, lam in st.pop("lam", {}).items():
            arrays[f"opt.lam.{name}"] = lam
        meta["trainer"] = st
    for name, arr in (extra or {}).items():
        arrays[f"extra.{name}"] = arr
    write_arrays(out_dir, arrays, meta=meta)


def load_checkpoint(in_dir) -> Checkpoint:
    arrays, meta = read_arrays(in_dir)
    if meta.get("kind") != "checkpoint":
        raise RuntimeError(f"{in_dir} is not a checkpoint")
    params = {n[len("param."):]: a for n, a in arrays.items()
              if n.startswith("param.")}
    extra = {n[len("extra."):]: a for n, a in arrays.items()
             if n.startswith("extra.")}
    state = None
    if "trainer" in meta:
        state = dict(meta["trainer"])
        state["adam_m"] = arrays["opt.adam_m"]
        state["adam_v"] = arrays["opt.adam_v"]
        state["lam"] = {n[len("opt.lam."):]: a for n, a in arrays.items()
                        if n.startswith("opt.lam.")}
    return Checkpoint(params=params, config=meta.get("config", {}),
                      stage=meta.get("stage", "main"),
                      done=bool(meta.get("done", False)),
                      trainer_state=state, extra=extra)


def restore_params(store: ParamStore, params: dict) -> None:
    """Copy checkpoint segments into an initialized store of the same
    architecture; any missing or misshapen segment raises."""
    for name in store.segments:
        if name not in params:
            raise ValueError(f"checkpoint is missing segment {name!r}")
        arr = np.asarray(params[name], dtype=DTYPE)
        dst = store.view(name)
        if arr.shape != dst.shape:
            raise ValueError(f"segment {name!r} has shape {arr.shape}, "
                             f"expected {dst.shape}")
        dst[:] = arr


# ---------------------------------------------------------------------------
# metrics CSV
# ---------------------------------------------------------------------------

def _column_rank(name: str):
    if name.startswith("loss_"):
        return (0, name)
    if name == "rel_l2":
        return (1, name)
    if name == "snr":
        return (2, name)
    if name == "gc":
        return (3, name)
    if name.startswith("mean_abs_r_"):
        return (7, name)
    if name.startswith("m_"):
        return (4, name)
    if name == "lr":
        return (5, name)
    if name == "lam_max":
        return (6, name)
    return (8, name)


def _log_rows(log: MetricLog) -> dict[int, dict[str, str]]:
    rows: dict[int, dict[str, str]] = {}
    for rec in log.records:
        row = rows.setdefault(rec.iteration, {})
        row[rec.name] = format(rec.value, ".17g")
        row["wall"] = format(rec.wall, ".3f")
    return rows


def write_metrics_csv(log: MetricLog, path, *, merge: bool = False) -> list[str]:
    """Pivot a metric log into one wide CSV row per iteration. With merge,
    rows already in the file are kept and the column set is unioned (used
    when a resumed run extends an earlier stream). Returns the columns."""
    path = Path(path)
    rows = _log_rows(log)
    if merge and path.exists():
        with open(path, newline="") as f:
            for old in csv.DictReader(f):
                it = int(float(old["iteration"]))
                merged = {k: v for k, v in old.items()
                          if k != "iteration" and v not in ("", None)}
                merged.update(rows.get(it, {}))
                rows[it] = merged
    names = sorted({n for row in rows.values() for n in row} - {"wall"},
                   key=_column_rank)
    columns = ["iteration"] + names + ["wall"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for it in sorted(rows):
            row = rows[it]
            w.writerow([it] + [row.get(n, "") for n in names]
                       + [row.get("wall", "")])
    return columns


def read_metrics_csv(path):
    """Returns (columns, dict of float arrays); blanks come back as nan."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        columns = next(reader)
        raw = list(reader)
    data = {}
    for j, name in enumerate(columns):
        data[name] = np.array([float(r[j]) if r[j] != "" else np.nan
                               for r in raw], dtype=DTYPE)
    return columns, data


# ---------------------------------------------------------------------------
# run manifest
# ---------------------------------------------------------------------------

def code_hash() -> str:
    """Content hash over this package's source files."""
    pkg = Path(__file__).parent
    h = hashlib.sha256()
    for p in sorted(pkg.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


def write_run_manifest(run_dir, *, config: dict, seed: int, started: str,
                       finished: str, status: str = "complete") -> dict:
    """List every artifact under the run directory with its checksum."""
    root = Path(run_dir)
    files = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p != root / MANIFEST:
            files[p.relative_to(root).as_posix()] = sha256_file(p)
    manifest = {"kind": "run", "config": config, "seed": int(seed),
                "code": code_hash(), "started": started, "finished": finished,
                "status": status, "files": files}
    with open(root / MANIFEST, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return manifest
