"""Model, gain and trace file formats."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ncsmodel import ContinuousMode, GainSchedule, PlantMode, SwitchedPlant, discretize
from .sim import SimTrace


class FileFormatError(ValueError):
    """A file did not match its schema; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class ModelFile:
    sample_period: float
    n_drop: int
    continuous: list[ContinuousMode] | None = None
    discrete: list[PlantMode] | None = None
    x0: list[float] | None = None

    def plant(self, h: float | None = None, n_drop: int | None = None) -> SwitchedPlant:
        h = self.sample_period if h is None else h
        n_drop = self.n_drop if n_drop is None else n_drop
        if self.continuous is not None:
            modes = tuple(discretize(m, h) for m in self.continuous)
        else:
            modes = tuple(self.discrete)
        return SwitchedPlant(modes, h, n_drop)


def fingerprint(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def _matrix(value, field: str) -> np.ndarray:
    try:
        m = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise FileFormatError(field, "expected a nested list of numbers") from None
    if m.ndim != 2 or m.size == 0:
        raise FileFormatError(field, f"expected a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise FileFormatError(field, "non-finite entry")
    return m


def parse_model(text: str) -> ModelFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError("<document>", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FileFormatError("<document>", "expected a JSON object")
    h = doc.get("sample_period")
    if not isinstance(h, (int, float)) or isinstance(h, bool) or not h > 0:
        raise FileFormatError("sample_period", "must be a positive number")
    n_drop = doc.get("n_drop")
    if not isinstance(n_drop, int) or isinstance(n_drop, bool) or n_drop < 1:
        raise FileFormatError("n_drop", "must be an integer >= 1")
    has_c = "continuous_modes" in doc
    has_d = "discrete_modes" in doc
    if has_c == has_d:
        raise FileFormatError(
            "continuous_modes/discrete_modes", "exactly one of the two lists must be present"
        )
    key = "continuous_modes" if has_c else "discrete_modes"
    entries = doc[key]
    if not isinstance(entries, list) or not entries:
        raise FileFormatError(key, "must be a non-empty list")
    first, second = ("a", "b") if has_c else ("f", "g")
    modes = []
    for i, entry in enumerate(entries):
        where = f"{key}[{i}]"
        if not isinstance(entry, dict):
            raise FileFormatError(where, "expected an object")
        for name in (first, second):
            if name not in entry:
                raise FileFormatError(f"{where}.{name}", "missing")
        x = _matrix(entry[first], f"{where}.{first}")
        y = _matrix(entry[second], f"{where}.{second}")
        if x.shape[0] != x.shape[1]:
            raise FileFormatError(f"{where}.{first}", f"must be square, got {x.shape}")
        if y.shape[0] != x.shape[0]:
            raise FileFormatError(f"{where}.{second}", f"needs {x.shape[0]} rows, got {y.shape[0]}")
        label = str(entry.get("label", f"mode{i + 1}"))
        cls = ContinuousMode if has_c else PlantMode
        modes.append(cls(x, y, label))
    shapes = {(m_.__dict__[first].shape, m_.__dict__[second].shape) for m_ in modes}
    if len(shapes) != 1:
        raise FileFormatError(key, "modes disagree on state/input dimensions")
    x0 = doc.get("x0")
    if x0 is not None:
        try:
            x0 = [float(v) for v in x0]
        except (TypeError, ValueError):
            raise FileFormatError("x0", "expected a list of numbers") from None
        n = modes[0].__dict__[first].shape[0]
        if len(x0) != n or not all(math.isfinite(v) for v in x0):
            raise FileFormatError("x0", f"expected {n} finite numbers")
    if has_c:
        return ModelFile(float(h), n_drop, continuous=modes, x0=x0)
    return ModelFile(float(h), n_drop, discrete=modes, x0=x0)


def load_model(path) -> tuple[ModelFile, str]:
    """Parse a model file; also returns its content fingerprint."""
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise FileFormatError("<document>", "not UTF-8 text") from None
    return parse_model(text), fingerprint(data)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def model_json(
    sample_period: float,
    n_drop: int,
    continuous: list[ContinuousMode] | None = None,
    discrete: list[PlantMode] | None = None,
    x0: list[float] | None = None,
) -> str:
    doc: dict = {"sample_period": sample_period, "n_drop": n_drop}
    if x0 is not None:
        doc["x0"] = [float(v) for v in x0]
    if continuous is not None:
        doc["continuous_modes"] = [
            {"label": m.label, "a": m.a.tolist(), "b": m.b.tolist()} for m in continuous
        ]
    else:
        doc["discrete_modes"] = [
            {"label": m.label, "f": m.f.tolist(), "g": m.g.tolist()} for m in discrete
        ]
    return _dump(doc)


def _finite_or_none(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


def gain_json(
    gains: GainSchedule | None,
    status: str,
    p: np.ndarray | None = None,
    q: np.ndarray | None = None,
    history: list[dict] | None = None,
    settings: dict | None = None,
    plant_fingerprint: str | None = None,
    extra: dict | None = None,
) -> str:
    doc = {
        "status": status,
        "gains": None if gains is None else [k.tolist() for k in gains.gains],
        "p": None if p is None else p.tolist(),
        "q": None if q is None else q.tolist(),
        "history": [{k: _finite_or_none(v) for k, v in rec.items()} for rec in (history or [])],
        "settings": settings or {},
        "plant_fingerprint": plant_fingerprint,
    }
    if extra:
        doc.update(extra)
    return _dump(doc)


@dataclass
class GainFile:
    gains: GainSchedule
    status: str | None
    p: np.ndarray | None
    q: np.ndarray | None
    doc: dict


def parse_gains(text: str) -> GainFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError("<document>", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FileFormatError("<document>", "expected a JSON object")
    raw = doc.get("gains")
    if not isinstance(raw, list) or not raw:
        raise FileFormatError("gains", "must be a non-empty list of m x n arrays")
    gains = [_matrix(k, f"gains[{i}]") for i, k in enumerate(raw)]
    if len({k.shape for k in gains}) != 1:
        raise FileFormatError("gains", "all gains must share one shape")
    p = doc.get("p")
    q = doc.get("q")
    return GainFile(
        gains=GainSchedule(tuple(gains)),
        status=doc.get("status"),
        p=None if p is None else _matrix(p, "p"),
        q=None if q is None else _matrix(q, "q"),
        doc=doc,
    )


def load_gains(path) -> GainFile:
    return parse_gains(Path(path).read_text(encoding="utf-8"))


def _g17(v: float) -> str:
    return format(float(v), ".17g")


def trace_csv(trace: SimTrace) -> str:
    n = trace.x.shape[1]
    m = trace.u.shape[1]
    u_cols = ["u"] if m == 1 else [f"u{j + 1}" for j in range(m)]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["step", "time", "mode", "s1_ok", "s2_ok", "effective", "buffer_age", *u_cols]
        + [f"x{j + 1}" for j in range(n)]
    )
    for k in range(trace.horizon):
        writer.writerow(
            [
                k,
                _g17(k * trace.sample_period),
                int(trace.mode[k]),
                int(trace.s1_ok[k]),
                int(trace.s2_ok[k]),
                int(trace.effective[k]),
                int(trace.buffer_age[k]),
                *(_g17(v) for v in trace.u[k]),
                *(_g17(v) for v in trace.x[k]),
            ]
        )
    settled = trace.settled_at
    after = trace.max_norm_after_settle
    out.write(f"# sample_period={_g17(trace.sample_period)}\n")
    out.write(f"# settle_threshold={_g17(trace.settle_threshold)}\n")
    out.write(f"# settled_at={'none' if settled is None else settled}\n")
    out.write(f"# max_norm_after_settle={'none' if after is None else _g17(after)}\n")
    out.write(f"# effective_steps={int(np.count_nonzero(trace.effective))}\n")
    out.write("# final_state=" + " ".join(_g17(v) for v in trace.final_state) + "\n")
    return out.getvalue()


def parse_trace(text: str) -> SimTrace:
    """Read a trace CSV back. Rows are required; a header alone is rejected."""
    lines = text.splitlines()
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    meta = {}
    for ln in lines:
        if ln.startswith("#") and "=" in ln:
            key, _, value = ln[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
    if not body:
        raise FileFormatError("<document>", "empty trace")
    reader = csv.reader(body)
    header = next(reader)
    required = ["step", "time", "mode", "s1_ok", "s2_ok", "effective", "buffer_age"]
    if header[:7] != required:
        raise FileFormatError("header", f"expected columns {','.join(required)},...")
    u_idx = [i for i, h in enumerate(header) if h == "u" or (h.startswith("u") and h[1:].isdigit())]
    x_idx = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    if not u_idx or not x_idx:
        raise FileFormatError("header", "missing u or x columns")
    rows = list(reader)
    if not rows:
        raise FileFormatError("<document>", "trace has no rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise FileFormatError("rows", str(exc)) from None
    if data.shape[1] != len(header):
        raise FileFormatError("rows", "row length differs from header")
    times = data[:, 1]
    if "sample_period" in meta:
        h = float(meta["sample_period"])
    else:
        h = float(times[1] - times[0]) if len(times) > 1 else 1.0
    effective = data[:, 5].astype(bool)
    stamps = np.full(len(rows), -1, dtype=int)
    last = -1
    for k, e in enumerate(effective):
        if e:
            last = k
        stamps[k] = last
    if "final_state" in meta:
        final = np.array([float(v) for v in meta["final_state"].split()])
    else:
        final = data[-1, x_idx]
    threshold = float(meta.get("settle_threshold", 0.0))
    return SimTrace(
        sample_period=h,
        x=data[:, x_idx],
        u=data[:, u_idx],
        mode=data[:, 2].astype(int),
        s1_ok=data[:, 3].astype(bool),
        s2_ok=data[:, 4].astype(bool),
        effective=effective,
        buffer_age=data[:, 6].astype(int),
        stamp=stamps,
        final_state=final,
        settle_threshold=threshold,
    )


def read_trace_columns(text: str) -> tuple[list[str], np.ndarray]:
    """Header and numeric rows of a trace CSV (comments dropped)."""
    body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not body:
        raise FileFormatError("<document>", "empty trace")
    reader = csv.reader(body)
    header = next(reader)
    if "time" not in header:
        raise FileFormatError("header", "no time column")
    rows = list(reader)
    if not rows:
        raise FileFormatError("<document>", "trace has no rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise FileFormatError("rows", str(exc)) from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise FileFormatError("rows", "row length differs from header")
    return header, data
