"""Single command-line entry point for generation, runs, diagnostics, reports.

Exit codes: 0 success, 2 usage, 3 data/format/contract, 4 numeric,
5 I/O. Every run is fully specified by its flags (or the equivalent
--config file); identical invocations on identical inputs produce
byte-identical run records.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import harness, io, synthgen
from .errors import FormatError, LayfError, NumericError
from .lambda_search import DEFAULT_CANDIDATES, LambdaSearchConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

log = logging.getLogger("layf.cli")


def _csv_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip() != ""]


def _csv_ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip() != ""]


def _k_range(text: str) -> list[int]:
    """Parse a k sweep spec: either '4' or an inclusive range '1..12'."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if lo < 1 or hi < lo:
            raise argparse.ArgumentTypeError(f"bad sweep range {text!r}")
        return list(range(lo, hi + 1))
    return [int(text)]


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, help="base RNG seed (default 0)")
    sub.add_argument(
        "--output-dir", default=None, help="directory for result artifacts (default '.')"
    )
    sub.add_argument(
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
        help="logging verbosity",
    )
    sub.add_argument(
        "--config",
        default=None,
        help="JSON file supplying values for any flags not given explicitly",
    )


class _Resolver:
    """Fallback chain: explicit flag, then --config entry, then default."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = {}
        if getattr(args, "config", None):
            with open(args.config, "r", encoding="utf-8") as fh:
                self.config = json.load(fh)

    def get(self, key: str, default=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.config:
            return self.config[key]
        return default


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layf",
        description="Streaming multi-layer feature statistics: generate synthetic "
        "streams, run incremental protocols, and inspect results.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen-synthetic", help="generate a synthetic feature stream")
    gen.add_argument("--out", default=None, help="output directory for the stream files")
    gen.add_argument("--layers", type=int, default=None, help="number of layers L")
    gen.add_argument("--dims", default=None, help="per-layer dims, CSV or a single value")
    gen.add_argument("--classes", type=int, default=None)
    gen.add_argument("--tasks", type=int, default=None)
    gen.add_argument("--samples-per-class", type=int, default=None)
    gen.add_argument(
        "--informativeness", default=None, help="per-layer separation weights, CSV in [0,1]"
    )
    gen.add_argument(
        "--informative-layer",
        type=int,
        default=None,
        help="shorthand: concentrate all class information in this 1-based layer",
    )
    gen.add_argument(
        "--per-class-layers",
        default=None,
        help="CSV of one 1-based informative layer per class (overrides the profile)",
    )
    gen.add_argument("--coupling", type=float, default=None, help="cross-layer coupling in [0,1]")
    gen.add_argument("--noise", type=float, default=None, help="noise scale sigma")
    gen.add_argument("--test-fraction", type=float, default=None)
    gen.add_argument("--mean-scale", type=float, default=None)
    gen.add_argument(
        "--duplicate-layers", action="store_true", default=None,
        help="make every layer an exact copy of the last one",
    )
    gen.add_argument("--dtype", choices=["float32", "float64"], default=None)
    _common_flags(gen)
    gen.set_defaults(func=_cmd_gen_synthetic)

    for name, help_text in (
        ("run-cil", "class-incremental run with per-task lambda search"),
        ("run-ocl", "online run: single pass, fixed lambda"),
    ):
        run = subs.add_parser(name, help=help_text)
        run.add_argument("--stream", required=True, help="stream directory or train.layf path")
        run.add_argument("--k", type=int, default=None, help="last layers to concatenate (default 6)")
        run.add_argument(
            "--k-sweep", type=_k_range, default=None, help="run every k in an inclusive range, e.g. 1..12"
        )
        run.add_argument(
            "--classifier",
            choices=list(harness.CLASSIFIERS),
            default=None,
            help="classifier variant (default layup)",
        )
        run.add_argument(
            "--lambda", dest="lambda_value", type=float, default=None,
            help="fixed ridge parameter; for run-cil this disables the search",
        )
        run.add_argument(
            "--candidates", default=None, help="CSV candidate lambdas for the search"
        )
        run.add_argument("--split-fraction", type=float, default=None)
        _common_flags(run)
        run.set_defaults(func=_cmd_run, protocol=name.split("-", 1)[1])

    diag = subs.add_parser(
        "diagnose-layers", help="count classes best classified by each single layer"
    )
    diag.add_argument("--stream", required=True)
    diag.add_argument("--lambda", dest="lambda_value", type=float, default=None)
    _common_flags(diag)
    diag.set_defaults(func=_cmd_diagnose_layers)

    uni = subs.add_parser(
        "universality", help="fraction of classes classified at least as well at k=k-big as at k=1"
    )
    uni.add_argument("--stream", required=True)
    uni.add_argument("--k-big", type=int, default=None)
    uni.add_argument(
        "--lambda", dest="lambda_value", type=float, default=None,
        help="fixed lambda; omit to use the per-task search",
    )
    _common_flags(uni)
    uni.set_defaults(func=_cmd_universality)

    mem = subs.add_parser("memory-report", help="state-size and solve-cost accounting")
    mem.add_argument("--k", type=int, required=True)
    mem.add_argument("--dim", type=int, default=None, help="per-layer dimension (default 768)")
    mem.add_argument("--layers", type=int, default=None, help="layer count (default 12)")
    mem.add_argument("--dims", default=None, help="explicit per-layer dims CSV (overrides --dim/--layers)")
    mem.add_argument("--classes", type=int, default=None, help="class count (default 200)")
    _common_flags(mem)
    mem.set_defaults(func=_cmd_memory_report)

    ins = subs.add_parser("inspect", help="dump a stream file's header and first record")
    ins.add_argument("file", help="path to a .layf stream file")
    _common_flags(ins)
    ins.set_defaults(func=_cmd_inspect)

    return parser


def _cmd_gen_synthetic(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    out = r.get("out")
    if out is None:
        raise ValueError("gen-synthetic requires --out (or an 'out' config entry)")
    num_layers = int(r.get("layers", 6))
    dims_raw = r.get("dims", 16)
    if isinstance(dims_raw, str):
        dims = _csv_ints(dims_raw)
    elif isinstance(dims_raw, list):
        dims = [int(d) for d in dims_raw]
    else:
        dims = [int(dims_raw)]
    if len(dims) == 1:
        dims = dims * num_layers

    informative_layer = r.get("informative_layer")
    informativeness = r.get("informativeness")
    if informativeness is None:
        if informative_layer is not None:
            informativeness = [
                1.0 if (l + 1) == int(informative_layer) else 0.0 for l in range(num_layers)
            ]
        else:
            informativeness = [1.0] * num_layers
    elif isinstance(informativeness, str):
        informativeness = _csv_floats(informativeness)

    per_class = r.get("per_class_layers")
    if isinstance(per_class, str):
        per_class = _csv_ints(per_class)

    cfg = synthgen.SynthConfig(
        num_layers=num_layers,
        layer_dims=tuple(dims),
        num_classes=int(r.get("classes", 10)),
        num_tasks=int(r.get("tasks", 5)),
        samples_per_class=int(r.get("samples_per_class", 30)),
        informativeness=tuple(informativeness),
        class_informative_layer=tuple(per_class) if per_class else None,
        coupling=float(r.get("coupling", 0.0)),
        noise_scale=float(r.get("noise", 0.1)),
        test_fraction=float(r.get("test_fraction", 0.2)),
        seed=int(r.get("seed", 0)),
        duplicate_layers=bool(r.get("duplicate_layers", False)),
        mean_scale=float(r.get("mean_scale", 1.0)),
    )
    stream = synthgen.generate_stream(cfg)
    train_path, test_path = io.write_task_stream(stream, out, dtype=r.get("dtype", "float32"))
    print(f"wrote {train_path} and {test_path}")
    print(
        f"L={cfg.num_layers} dims={list(cfg.layer_dims)} C={cfg.num_classes} "
        f"T={cfg.num_tasks} train={sum(m for m in stream.manifest.task_sizes)}"
    )
    return EXIT_OK


def _build_run_config(r: _Resolver, protocol: str, k: int) -> harness.RunConfig:
    classifier = r.get("classifier", "layup")
    lambda_value = r.get("lambda_value")
    seed = int(r.get("seed", 0))
    if classifier in ("nmc", "laynmc"):
        lambda_mode = "fixed"
        lambda_value = None
        search = None
    elif lambda_value is not None or protocol == "ocl":
        if lambda_value is None:
            raise ValueError(f"run-ocl requires --lambda (fixed ridge parameter)")
        lambda_mode = "fixed"
        lambda_value = float(lambda_value)
        search = None
    else:
        lambda_mode = "search"
        candidates = r.get("candidates")
        if isinstance(candidates, str):
            candidates = _csv_floats(candidates)
        search = LambdaSearchConfig(
            candidates=tuple(candidates) if candidates else DEFAULT_CANDIDATES,
            split_fraction=float(r.get("split_fraction", 0.8)),
            seed=seed,
        )
    return harness.RunConfig(
        protocol=protocol,
        k=k,
        classifier=classifier,
        lambda_mode=lambda_mode,
        lambda_value=lambda_value,
        lambda_search=search,
        seed=seed,
        stream_path=str(r.get("stream")),
        output_dir=r.get("output_dir", "."),
    )


def _cmd_run(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    stream = io.load_task_stream(r.get("stream"))
    out_dir = r.get("output_dir", ".")
    sweep = r.get("k_sweep")
    ks = [int(k) for k in sweep] if sweep else [int(r.get("k", 6))]
    runner = harness.run_cil if args.protocol == "cil" else harness.run_ocl
    for k in ks:
        cfg = _build_run_config(r, args.protocol, k)
        result = runner(stream, cfg)
        basename = f"run_record_k{k}" if sweep else "run_record"
        path = harness.write_run_record(result, out_dir, basename=basename)
        print(harness.summary_table(result))
        print(f"run record: {path}")
    return EXIT_OK


def _cmd_diagnose_layers(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    stream = io.load_task_stream(r.get("stream"))
    lam = float(r.get("lambda_value", 1.0))
    counts = harness.per_layer_best_counts(stream, lam)
    out_dir = r.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "layer_diagnostics.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"lambda": lam, "best_class_counts": counts.tolist()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("layer  best-classified classes")
    for l, c in enumerate(counts, start=1):
        print(f"{l:>5}  {c}")
    print(f"diagnostics: {path}")
    return EXIT_OK


def _cmd_universality(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    stream = io.load_task_stream(r.get("stream"))
    k_big = int(r.get("k_big", 6))
    lambda_value = r.get("lambda_value")
    seed = int(r.get("seed", 0))
    if lambda_value is not None:
        cfg = harness.RunConfig(
            protocol="cil", k=k_big, lambda_mode="fixed",
            lambda_value=float(lambda_value), seed=seed,
        )
    else:
        cfg = harness.RunConfig(protocol="cil", k=k_big, lambda_mode="search", seed=seed)
    fraction = harness.universality_fraction(stream, k_big, cfg)
    out_dir = r.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "universality.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"k_big": k_big, "fraction": fraction}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"universality fraction (k={k_big} vs k=1): {fraction:.4f}")
    return EXIT_OK


def _cmd_memory_report(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    dims_raw = r.get("dims")
    if dims_raw is not None:
        dims = _csv_ints(dims_raw) if isinstance(dims_raw, str) else [int(d) for d in dims_raw]
    else:
        dims = [int(r.get("dim", 768))] * int(r.get("layers", 12))
    report = harness.memory_report(int(args.k), dims, int(r.get("classes", 200)))
    print(report.format_text())
    out_dir = r.get("output_dir")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "memory_report.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"report: {path}")
    return EXIT_OK


def _cmd_inspect(args: argparse.Namespace) -> int:
    info = io.inspect_file(args.file)
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def dispatch(argv) -> int:
    """Parse and route one invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, (args.log_level or "warning").upper()))
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, LayfError, ValueError) as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
