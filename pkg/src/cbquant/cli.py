"""Command-line pipeline: quantize/reconstruct bundles, report stats, run sweeps.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 internal error.
``CBQUANT_THREADS`` caps per-tensor parallelism; results are bit-identical
for any thread count because every (tensor, group) pair owns a derived RNG
stream.  All numeric work happens through the library calls; the CLI only
arranges inputs and formats reports.
"""

import argparse
import csv
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import core, grouping, tensorio, training
from .errors import CbqError, EmptyInputError, ManifestMismatchError, ShapeMismatchError

QUANTIZED_MANIFEST = "manifest.json"


def _bits_arg(value: str) -> int:
    bits = int(value)
    if not 1 <= bits <= 8:
        raise argparse.ArgumentTypeError(f"bits must be in [1, 8], got {bits}")
    return bits


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _nonneg_int(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {n}")
    return n


def _nonneg_float(value: str) -> float:
    x = float(value)
    if not x >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {x}")
    return x


def _thread_count() -> int:
    raw = os.environ.get("CBQUANT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, min(4, os.cpu_count() or 1))


def _parallel_map(fn, items):
    threads = _thread_count()
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _emit(header, rows, fmt, out=None):
    out = out or sys.stdout
    if fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return
    rows = [[str(c) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)), file=out)
    print("  ".join("-" * w for w in widths), file=out)
    for row in rows:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)), file=out)


def _quant_config(args, scheme=None) -> core.QuantConfig:
    return core.QuantConfig(
        scheme=scheme if scheme is not None else core.Scheme[args.scheme.upper()],
        bits=args.bits,
        max_iterations=args.iters,
        seed=args.seed,
        convergence_epsilon=args.epsilon,
        group_count=args.groups,
    )


def cmd_quantize(args) -> int:
    tensors = tensorio.read_bundle(args.bundle)
    if not tensors:
        raise EmptyInputError("bundle contains no tensors")
    cfg = _quant_config(args)
    exclude = re.compile(args.exclude) if args.exclude else None
    names = sorted(tensors)

    def work(name):
        tensor = tensors[name]
        if exclude is not None and exclude.search(name):
            return name, None, tensor
        g = grouping.quantize_grouped(tensor, cfg, tensor_name=name)
        return name, tensorio.write_cbq(g), tensor

    results = _parallel_map(work, names)

    out_dir = Path(args.output)
    created_dir = not out_dir.exists()
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    entries = []
    rows = []
    try:
        for i, (name, blob, tensor) in enumerate(results):
            if blob is None:
                path = out_dir / f"t{i:05d}.f32"
                path.write_bytes(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
                written.append(path)
                entries.append({"name": name, "file": path.name, "kind": "raw",
                                "shape": [int(d) for d in tensor.shape]})
                rows.append([name, tensor.size, "", "", "excluded"])
            else:
                path = out_dir / f"t{i:05d}.cbq"
                path.write_bytes(blob)
                written.append(path)
                entries.append({"name": name, "file": path.name, "kind": "cbq"})
                g = tensorio.read_cbq(blob)
                stats = _tensor_stats(tensor, grouping.reconstruct_grouped(g))
                ratio = (32.0 * tensor.size) / (8.0 * len(blob))
                rows.append([name, tensor.size, f"{stats[1]:.6g}", f"{ratio:.3f}", "quantized"])
        manifest_path = out_dir / QUANTIZED_MANIFEST
        manifest_path.write_text(json.dumps(
            {"format": "cbq-bundle", "version": 1, "tensors": entries}, indent=2) + "\n")
        written.append(manifest_path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        if created_dir and not any(out_dir.iterdir()):
            out_dir.rmdir()
        raise
    _emit(["tensor", "n", "mse", "ratio", "status"], rows, args.format)
    return 0


def _read_quantized_dir(path):
    path = Path(path)
    manifest_path = path / QUANTIZED_MANIFEST if path.is_dir() else path
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestMismatchError(f"cannot read quantized manifest: {exc}") from exc
    if manifest.get("format") != "cbq-bundle":
        raise ManifestMismatchError("not a quantized-bundle manifest")
    for entry in manifest.get("tensors", []):
        missing = {"name", "file", "kind"} - set(entry)
        if missing or (entry["kind"] == "raw" and "shape" not in entry):
            raise ManifestMismatchError(f"manifest entry for {entry.get('name')!r} is incomplete")
        yield entry, manifest_path.parent / entry["file"]


def cmd_reconstruct(args) -> int:
    tensors = {}
    for entry, path in _read_quantized_dir(args.quantized):
        if entry["kind"] == "raw":
            shape = tuple(int(d) for d in entry["shape"])
            tensors[entry["name"]] = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(shape)
        else:
            g = tensorio.read_cbq(path.read_bytes())
            tensors[entry["name"]] = grouping.reconstruct_grouped(g)
    tensorio.write_bundle(args.output, tensors)
    print(f"wrote {len(tensors)} tensors to {args.output}")
    return 0


def _tensor_stats(reference, candidate):
    a = np.asarray(reference, dtype=np.float64).reshape(-1)
    b = np.asarray(candidate, dtype=np.float64).reshape(-1)
    diff = a - b
    sse = float(np.sum(np.square(diff)))
    return sse, sse / a.size, float(np.max(np.abs(diff)))


def cmd_stats(args) -> int:
    ref = tensorio.read_bundle(args.reference)
    cand = tensorio.read_bundle(args.candidate)
    if set(ref) != set(cand):
        raise ManifestMismatchError("bundles do not contain the same tensor names")
    rows = []
    for name in sorted(ref):
        if ref[name].shape != cand[name].shape:
            raise ShapeMismatchError(f"tensor {name!r} has different shapes in the two bundles")
        sse, mse, max_err = _tensor_stats(ref[name], cand[name])
        rows.append([name, ref[name].size, f"{sse:.6g}", f"{mse:.6g}", f"{max_err:.6g}"])
    _emit(["tensor", "n", "sse", "mse", "max_abs_error"], rows, args.format)
    return 0


def cmd_sweep(args) -> int:
    tensors = tensorio.read_bundle(args.bundle)
    if not tensors:
        raise EmptyInputError("bundle contains no tensors")
    names = sorted(tensors)
    combos = sorted(
        (scheme, bits, seed)
        for scheme in set(args.schemes)
        for bits in set(args.bits)
        for seed in set(args.seeds)
    )

    def work(combo):
        scheme, bits, seed = combo
        cfg = core.QuantConfig(scheme=core.Scheme[scheme.upper()], bits=bits,
                               max_iterations=args.iters, seed=seed,
                               convergence_epsilon=args.epsilon, group_count=args.groups)
        sse = 0.0
        count = 0
        for name in names:
            g = grouping.quantize_grouped(tensors[name], cfg, tensor_name=name)
            s, _, _ = _tensor_stats(tensors[name], grouping.reconstruct_grouped(g))
            sse += s
            count += tensors[name].size
        return scheme, bits, seed, sse / count

    results = _parallel_map(work, combos)
    if args.format == "csv":
        _emit(["scheme", "bits", "seed", "mse"],
              [[s, b, seed, f"{mse:.9g}"] for s, b, seed, mse in results], "csv")
    else:
        schemes = sorted(set(args.schemes))
        bit_rows = sorted(set(args.bits))
        by_key = {(s, b): [] for s in schemes for b in bit_rows}
        for s, b, seed, mse in results:
            by_key[(s, b)].append(mse)
        rows = [[bits] + [f"{np.mean(by_key[(s, bits)]):.9g}" for s in schemes]
                for bits in bit_rows]
        _emit(["bits"] + [f"{s}_mse" for s in schemes], rows, "table")
    return 0


def cmd_train_toy(args) -> int:
    train_cfg = training.TrainConfig(
        base_learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        quantized_lr_multiplier=args.multiplier,
        data_seed=args.data_seed,
    )
    quant_cfg = core.QuantConfig(scheme=core.Scheme.KMEANS, bits=args.bits,
                                 max_iterations=args.iters, seed=args.seed,
                                 convergence_epsilon=args.epsilon, group_count=args.groups)
    result = training.run_experiment(train_cfg, quant_cfg, task_seed=args.task_seed,
                                     pretrain_epochs=args.pretrain_epochs)
    if args.curves:
        Path(args.curves).write_text("\n".join(training.curve_records(result)) + "\n")
    rows = []
    for name in sorted(result.arms):
        arm = result.arms[name]
        rows.append([name.lower(), args.bits, f"{result.pretrain_loss:.6g}",
                     f"{arm.post_quant_loss:.6g}", f"{arm.final_loss:.6g}",
                     f"{result.recovery(core.Scheme[name]):.3f}"])
    _emit(["scheme", "bits", "pretrain_loss", "post_quant_loss", "final_loss", "recovery"],
          rows, args.format)
    return 0


def cmd_bench_groups(args) -> int:
    rng = np.random.default_rng(args.seed)
    tensor = rng.normal(size=(args.rows, args.cols))
    rows = []
    baseline = None
    for group_count in args.groups:
        cfg = core.QuantConfig(scheme=core.Scheme[args.scheme.upper()], bits=args.bits,
                               max_iterations=args.iters, seed=args.seed,
                               group_count=group_count)
        g = grouping.quantize_grouped(tensor, cfg, tensor_name="bench")
        _, seconds = grouping.timed_reconstruct_grouped(g, repeats=args.repeats)
        if baseline is None:
            baseline = seconds
        rows.append([group_count, tensor.size, f"{seconds:.6g}", f"{seconds / baseline:.3f}"])
    _emit(["groups", "n", "reconstruct_seconds", "vs_first"], rows, args.format)
    return 0


def _add_quant_flags(p, need_bits=True):
    p.add_argument("--scheme", choices=["linear", "kmeans"], default="kmeans")
    p.add_argument("--bits", type=_bits_arg, required=need_bits)
    p.add_argument("--groups", type=_positive_int, default=1, metavar="G")
    p.add_argument("--iters", type=_nonneg_int, default=3, metavar="N")
    p.add_argument("--seed", type=_nonneg_int, default=0, metavar="S")
    p.add_argument("--epsilon", type=_nonneg_float, default=0.0, metavar="E")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbquant",
                                     description="Codebook quantization of tensor bundles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a tensor bundle into CBQ files")
    p.add_argument("bundle", help="bundle manifest (.json)")
    p.add_argument("-o", "--output", required=True, help="output directory")
    _add_quant_flags(p)
    p.add_argument("--exclude", metavar="PATTERN",
                   help="regex of tensor names to pass through unquantized")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("reconstruct", help="rebuild a bundle from quantized output")
    p.add_argument("quantized", help="quantized directory (or its manifest.json)")
    p.add_argument("-o", "--output", required=True, help="output bundle manifest (.json)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("stats", help="reconstruction error between two bundles")
    p.add_argument("reference")
    p.add_argument("candidate")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sweep", help="MSE per (scheme, bits, seed) over a bundle")
    p.add_argument("bundle")
    p.add_argument("--bits", type=_bits_arg, nargs="+", required=True)
    p.add_argument("--schemes", choices=["linear", "kmeans"], nargs="+",
                   default=["linear", "kmeans"])
    p.add_argument("--seeds", type=_nonneg_int, nargs="+", default=[0])
    p.add_argument("--iters", type=_nonneg_int, default=3)
    p.add_argument("--epsilon", type=_nonneg_float, default=0.0)
    p.add_argument("--groups", type=_positive_int, default=1)
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train-toy", help="centroid fine-tuning experiment on the toy model")
    _add_quant_flags(p)
    p.add_argument("--epochs", type=_nonneg_int, default=200)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--multiplier", type=_nonneg_float, default=10.0)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--data-seed", type=_nonneg_int, default=0)
    p.add_argument("--task-seed", type=_nonneg_int, default=0)
    p.add_argument("--pretrain-epochs", type=_nonneg_int, default=300)
    p.add_argument("--curves", metavar="FILE", help="write epoch,scheme,bits,seed,loss lines")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("bench-groups", help="time grouped reconstruction on a fixture")
    p.add_argument("--rows", type=_positive_int, default=256)
    p.add_argument("--cols", type=_positive_int, default=1024)
    p.add_argument("--groups", type=_positive_int, nargs="+", default=[1, 128])
    p.add_argument("--scheme", choices=["linear", "kmeans"], default="linear")
    p.add_argument("--bits", type=_bits_arg, default=4)
    p.add_argument("--iters", type=_nonneg_int, default=3)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(func=cmd_bench_groups)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CbqError, OSError) as exc:
        print(f"cbquant: error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(f"cbquant: internal error: {exc!r}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
