"""Summary tables, CDF curves and run manifests for benchmark records."""
from __future__ import annotations

import csv
import json
import math
import re
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .metrics import EvalRecord


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name) or "method"


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def summarize(records: Iterable[EvalRecord]) -> dict:
    """Per method: median error, mean wall time (ms) and failure rate (%)."""
    groups = defaultdict(list)
    for rec in records:
        groups[rec.method].append(rec)
    out = {}
    for method in sorted(groups):
        recs = groups[method]
        out[method] = {
            "runs": len(recs),
            "eps_med": float(np.median([r.error for r in recs])),
            "t_mean_ms": float(np.mean([r.wall_time_ms for r in recs])),
            "f_percent": 100.0 * sum(bool(r.failed) for r in recs) / len(recs),
        }
    return out


def cdf(values) -> tuple[np.ndarray, np.ndarray]:
    v = np.sort(np.asarray(values, dtype=float))
    return v, np.arange(1, v.size + 1) / v.size


def _write_cdf(path: Path, values) -> None:
    v, c = cdf(values)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "cumulative"])
        for a, b in zip(v, c):
            w.writerow([repr(float(a)), repr(float(b))])


def emit_report(records, out_dir, manifest: Optional[dict] = None) -> dict:
    """Write summary.csv / summary.txt, per-method CDF CSVs and manifest.json."""
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(records)
    files = {}

    path = out / "summary.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "runs", "eps_med", "t_mean_ms", "f_percent"])
        for method, s in summary.items():
            w.writerow([method, s["runs"], repr(s["eps_med"]), repr(s["t_mean_ms"]),
                        repr(s["f_percent"])])
    files["summary_csv"] = path

    width = max(len("method"), *(len(m) for m in summary))
    lines = [f"{'method':<{width}}  {'eps_med':>12}  {'t [ms]':>10}  {'f [%]':>7}"]
    for method, s in summary.items():
        lines.append(f"{method:<{width}}  {s['eps_med']:>12.4g}  {s['t_mean_ms']:>10.2f}  "
                     f"{s['f_percent']:>7.2f}")
    path = out / "summary.txt"
    path.write_text("\n".join(lines) + "\n")
    files["summary_txt"] = path

    for method in summary:
        recs = [r for r in records if r.method == method]
        for what, values in (("errors", [r.error for r in recs]),
                             ("times", [r.wall_time_ms for r in recs])):
            path = out / f"cdf_{what}_{_slug(method)}.csv"
            _write_cdf(path, values)
            files[f"cdf_{what}_{method}"] = path

    path = out / "manifest.json"
    doc = {"manifest": _json_safe(manifest or {}), "summary": _json_safe(summary),
           "records": [_json_safe(r.as_dict()) for r in records]}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    files["manifest"] = path
    return files
