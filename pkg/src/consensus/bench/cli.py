"""Command line: ``estimate``, ``synth`` and ``bench``.

Exit codes: 0 success, 1 I/O or parse error, 2 estimation failure (no model).
The ``USAC_SEED`` environment variable overrides every seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

from ..core import ModelKind
from ..engine import EngineConfig, TerminationKind, VerifyKind, run
from ..localopt import LoKind
from ..samplers import SamplerKind
from ..scoring import QualityKind
from .io import ProblemFormatError, load_problem, save_problem
from .metrics import evaluate_run, failure_threshold, model_error
from .report import emit_report
from .synthetic import SyntheticSceneSpec, generate_synthetic

EXIT_OK, EXIT_IO, EXIT_NO_MODEL = 0, 1, 2
SEED_ENV = "USAC_SEED"

_PLAIN = dict(verification=VerifyKind.NONE, lo=LoKind.NONE, degeneracy=False,
              termination=frozenset({TerminationKind.STANDARD}))
METHOD_PRESETS = {
    "usac": {},
    "ransac": dict(_PLAIN, sampler=SamplerKind.UNIFORM, quality=QualityKind.RANSAC, polish=False),
    "msac": dict(_PLAIN, sampler=SamplerKind.UNIFORM),
    "lo-ransac": dict(_PLAIN, sampler=SamplerKind.UNIFORM, lo=LoKind.INNER_RANSAC),
    "gc-ransac": dict(_PLAIN, sampler=SamplerKind.UNIFORM, lo=LoKind.GRAPH_CUT),
    "prosac": dict(_PLAIN, sampler=SamplerKind.PROSAC),
    "napsac": dict(_PLAIN, sampler=SamplerKind.NAPSAC),
    "degensac": dict(_PLAIN, sampler=SamplerKind.UNIFORM, degeneracy=True),
}


def resolve_seed(seed) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return 0 if seed is None else int(seed)


def _config_dict(cfg: EngineConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, frozenset):
            v = sorted(x.value for x in v)
        elif hasattr(v, "value"):
            v = v.value
        elif f.name == "lo_config":
            v = asdict(v)
        out[f.name] = v
    return out


def _estimate(args) -> int:
    try:
        problem = load_problem(args.file)
    except (OSError, ProblemFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    kind = ModelKind.parse(args.model) if args.model else problem.kind
    try:
        cfg = EngineConfig(kind=kind, threshold=args.threshold, confidence=args.conf,
                           max_iterations=args.max_iters, sampler=args.sampler,
                           quality=args.quality, verification=args.verify, lo=args.lo,
                           seed=resolve_seed(args.seed))
        result = run(problem.data, cfg, problem.intrinsics)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    doc = {
        "model_kind": kind.value,
        "model": None if result.best_model is None else result.best_model.m.tolist(),
        "inlier_count": result.inlier_count,
        "inliers": "".join("1" if b else "0" for b in result.inlier_mask),
        "iterations": result.iterations_used,
        "models_evaluated": result.models_evaluated,
        "points_evaluated": result.points_evaluated,
        "time_ms": 1000.0 * result.wall_time,
        "termination": result.termination_reason,
        "config": _config_dict(cfg),
    }
    if result.best_model is not None and problem.gt_mask is not None:
        doc["error"] = model_error(kind, result.best_model.m, problem.data, problem.gt_mask,
                                   problem.intrinsics)
        doc["failure_limit"] = failure_threshold(problem.data, kind, problem.intrinsics)
    text = json.dumps(doc, indent=2)
    if args.out:
        try:
            Path(args.out).write_text(text + "\n")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        print(text)
    if result.best_model is None:
        print("estimation failed: no model found", file=sys.stderr)
        return EXIT_NO_MODEL
    return EXIT_OK


def _synth(args) -> int:
    try:
        raw = json.loads(Path(args.spec).read_text())
        specs = raw if isinstance(raw, list) else [raw]
        expanded = []
        for item in specs:
            item = dict(item)
            count = int(item.pop("count", 1))
            base_seed = resolve_seed(item.pop("seed", None))
            expanded += [SyntheticSceneSpec(**item, seed=base_seed + k) for k in range(count)]
        out = Path(args.out)
        if len(expanded) == 1 and out.suffix:
            targets = [out]
            out.parent.mkdir(parents=True, exist_ok=True)
        else:
            out.mkdir(parents=True, exist_ok=True)
            targets = [out / f"problem_{k:04d}.txt" for k in range(len(expanded))]
        for spec, target in zip(expanded, targets):
            p = generate_synthetic(spec)
            save_problem(target, spec.kind, p.data, p.gt_model, p.intrinsics, p.gt_mask)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(targets)} problem file(s)")
    return EXIT_OK


def _bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHOD_PRESETS]
    if unknown:
        print(f"error: unknown methods {unknown}; choose from {sorted(METHOD_PRESETS)}",
              file=sys.stderr)
        return EXIT_IO
    files = sorted(Path(args.dir).glob("*.txt"))
    if not files:
        print(f"error: no problem files in {args.dir}", file=sys.stderr)
        return EXIT_IO
    seed = resolve_seed(args.seed)
    records, configs = [], {}
    try:
        for path in files:
            problem = load_problem(path)
            if problem.gt_mask is None:
                raise ProblemFormatError(path, 1, "benchmark problems need a MASK line")
            for method in methods:
                cfg = EngineConfig(kind=problem.kind, seed=seed, **METHOD_PRESETS[method])
                configs[method] = _config_dict(cfg)
                result = run(problem.data, cfg, problem.intrinsics)
                records.append(evaluate_run(result, problem.data, problem.gt_mask, problem.kind,
                                            problem.intrinsics, path.stem, method))
        manifest = {"seed": seed, "methods": configs, "problems": [p.name for p in files]}
        emit_report(records, args.out, manifest)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print((Path(args.out) / "summary.txt").read_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="consensus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a model from one problem file")
    est.add_argument("file")
    est.add_argument("--model", choices=["h", "f", "e"], default=None)
    est.add_argument("--threshold", type=float, default=None, help="inlier threshold in pixels")
    est.add_argument("--conf", type=float, default=0.99)
    est.add_argument("--max-iters", type=int, default=None)
    est.add_argument("--sampler", choices=[k.value for k in SamplerKind], default="pnapsac")
    est.add_argument("--quality", choices=[k.value for k in QualityKind], default="msac")
    est.add_argument("--verify", choices=[k.value for k in VerifyKind], default="sprt")
    est.add_argument("--lo", choices=[k.value for k in LoKind], default="graphcut")
    est.add_argument("--seed", type=int, default=None)
    est.add_argument("--out", default=None, help="write the JSON result here instead of stdout")
    est.set_defaults(func=_estimate)

    syn = sub.add_parser("synth", help="generate synthetic problem files from a JSON spec")
    syn.add_argument("spec")
    syn.add_argument("--out", required=True)
    syn.set_defaults(func=_synth)

    ben = sub.add_parser("bench", help="run methods over a directory of problems")
    ben.add_argument("dir")
    ben.add_argument("--methods", default="usac")
    ben.add_argument("--seed", type=int, default=None)
    ben.add_argument("--out", required=True)
    ben.set_defaults(func=_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
