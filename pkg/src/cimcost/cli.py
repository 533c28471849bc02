"""Command-line front end.

Subcommands: validate, prune, profile, simulate, compare, sweep.
Exit codes: 0 success, 1 semantic validation or comparison failure,
2 I/O or schema error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .hardware import parse_hardware
from .mapper import parse_mapping, validate_mapping
from .profiler import ActivationSet, skippable_ratio
from .pruner import L1, prune_composite
from .simulator import SimulationError, simulate
from .sparsity import (
    BlockPattern,
    FULL_BLOCK,
    INTRA_BLOCK,
    SparsitySpec,
    bind_spec,
    build_mask,
    has_symbols,
    parse_sparsity,
    ratio_fraction,
    validate_spec,
)
from .tensorio import read_tensors, write_tensors
from .workload import parse_workload, reshape_weight, reshaped_dims

CSV_COLUMNS = [
    "run_id",
    "seed",
    "workload",
    "hardware",
    "organization",
    "mapping",
    "sparsity",
    "ratio",
    "latency_cycles",
    "compute_cycles",
    "energy_pj",
    "energy_compute_pj",
    "energy_memory_pj",
    "energy_static_pj",
    "energy_support_pj",
    "utilization",
    "realized_sparsity",
    "index_bits_total",
    "skip_ratio_mean",
    "error",
]


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _load_graph(args):
    graph = parse_workload(_read(args.workload))
    if getattr(args, "weights", None):
        tensors = read_tensors(args.weights)
        for node in graph.mvm_nodes():
            key = node.weight_ref or node.id
            if key in tensors:
                arr = tensors[key]
                from .workload import WeightTensor

                graph.weights[key] = WeightTensor(
                    id=key, shape=arr.shape, element_bitwidth=8, values=arr
                )
    return graph


def _load_activations(args, bits: int):
    if not getattr(args, "activations", None):
        return None
    dumps = read_tensors(args.activations)
    return {
        name: ActivationSet(name, arr.shape, bits, arr.reshape(-1))
        for name, arr in dumps.items()
    }


def _load_masks(args, graph, mapping, spec):
    if not getattr(args, "masks", None):
        return None
    raw = read_tensors(args.masks)
    masks = {}
    for node in graph.mvm_nodes():
        key = node.weight_ref or node.id
        if key not in raw:
            continue
        bits = raw[key].astype(np.uint8)
        dims = reshaped_dims(node, mapping.flatten_order)
        bound = None
        if spec is not None:
            try:
                bound = bind_spec(spec, dims, node.dims.get("C_in")) if has_symbols(spec) else spec
                if not validate_spec(bound, dims).ok:
                    bound = None
            except Exception:
                bound = None
        if bound is not None:
            masks[key] = build_mask(key, bits, bound)
        else:
            from .sparsity import SparseMask

            masks[key] = SparseMask(key, bits.shape, bits, (), None)
    return masks


def result_row(result, meta: dict) -> dict:
    mean_skip = (
        sum(result.skip_ratios.values()) / len(result.skip_ratios)
        if result.skip_ratios
        else 0.0
    )
    row = {
        "run_id": meta.get("run_id", ""),
        "seed": result.seed,
        "workload": result.workload,
        "hardware": result.hardware,
        "organization": meta.get("organization", ""),
        "mapping": meta.get("mapping", ""),
        "sparsity": meta.get("sparsity", ""),
        "ratio": meta.get("ratio", ""),
        "latency_cycles": result.latency.total,
        "compute_cycles": result.latency.compute_cycles,
        "energy_pj": f"{result.energy.total:.6f}",
        "energy_compute_pj": f"{sum(result.energy.compute.values()):.6f}",
        "energy_memory_pj": f"{sum(result.energy.memory.values()):.6f}",
        "energy_static_pj": f"{sum(result.energy.static.values()):.6f}",
        "energy_support_pj": f"{sum(result.energy.support.values()):.6f}",
        "utilization": f"{result.utilization:.6f}",
        "realized_sparsity": f"{result.realized_sparsity:.6f}",
        "index_bits_total": result.index_bits_total,
        "skip_ratio_mean": f"{mean_skip:.6f}",
        "error": "",
    }
    return row


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in CSV_COLUMNS})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    failures = []
    graph = _load_graph(args)
    hw = parse_hardware(_read(args.hardware))
    mapping = parse_mapping(_read(args.mapping)) if args.mapping else parse_mapping({})
    mreport = validate_mapping(mapping, hw)
    for d in mreport.diagnostics:
        print(f"mapping: {d}")
        if d.severity == "error":
            failures.append(d)
    if args.sparsity:
        spec = parse_sparsity(_read(args.sparsity))
        for node in graph.mvm_nodes():
            dims = reshaped_dims(node, mapping.flatten_order)
            try:
                bound = bind_spec(spec, dims, node.dims.get("C_in")) if has_symbols(spec) else spec
            except Exception as exc:
                print(f"sparsity[{node.id}]: warning: {exc}; layer stays dense")
                continue
            report = validate_spec(bound, dims, hw.alignment_dims)
            for d in report.diagnostics:
                print(f"sparsity[{node.id}]: {d}")
                if d.severity == "error":
                    failures.append(d)
    if failures:
        print(f"FAILED: {len(failures)} error(s)")
        return 1
    print("ok")
    return 0


def cmd_prune(args) -> int:
    graph = _load_graph(args)
    mapping = parse_mapping(_read(args.mapping)) if args.mapping else parse_mapping({})
    spec = parse_sparsity(_read(args.sparsity))
    masks = {}
    print(f"{'layer':<16} {'matrix':<12} {'requested':>9} {'realized':>9}")
    for node in graph.mvm_nodes():
        key = node.weight_ref or node.id
        tensor = graph.weights.get(key)
        dims = reshaped_dims(node, mapping.flatten_order)
        if tensor is None or tensor.values is None:
            print(f"{node.id:<16} {dims[0]}x{dims[1]:<8} (no payload, skipped)")
            continue
        if node.kind == "depthwise_conv":
            print(f"{node.id:<16} {dims[0]}x{dims[1]:<8} (depthwise, kept dense)")
            continue
        try:
            bound = bind_spec(spec, dims, node.dims.get("C_in")) if has_symbols(spec) else spec
        except Exception as exc:
            print(f"{node.id:<16} {dims[0]}x{dims[1]:<8} (kept dense: {exc})")
            continue
        report = validate_spec(bound, dims)
        if not report.ok:
            print(f"{node.id:<16} {dims[0]}x{dims[1]:<8} (kept dense: spec invalid)")
            continue
        w2d = reshape_weight(tensor, node, mapping.flatten_order)
        mask = prune_composite(w2d, bound, args.criterion, tensor_id=key)
        masks[key] = mask
        overall = 1.0
        for p in bound.patterns:
            overall *= 1.0 - float(p.sparsity_ratio)
        print(
            f"{node.id:<16} {dims[0]}x{dims[1]:<8} {1.0 - overall:9.4f} "
            f"{mask.realized_sparsity:9.4f}"
        )
    if args.out:
        write_tensors(args.out, {k: m.bits for k, m in masks.items()})
        print(f"wrote {len(masks)} masks to {args.out}")
    return 0


def cmd_profile(args) -> int:
    graph = _load_graph(args)
    hw = parse_hardware(_read(args.hardware))
    mapping = parse_mapping(_read(args.mapping)) if args.mapping else parse_mapping({})
    acts = _load_activations(args, args.activation_bits)
    if acts is None:
        print("no activation container given", file=sys.stderr)
        return 2
    spec = parse_sparsity(_read(args.sparsity)) if args.sparsity else None
    rows = []
    for node in graph.mvm_nodes():
        if node.id not in acts:
            continue
        dims = reshaped_dims(node, mapping.flatten_order)
        rows_per_group = min(dims[0], hw.macro_array[0])
        ways = 1
        if spec is not None:
            try:
                bound = bind_spec(spec, dims, node.dims.get("C_in")) if has_symbols(spec) else spec
                for p in bound.intra_patterns:
                    ways = max(ways, p.block_size[0])
            except Exception:
                pass
        ratio = skippable_ratio(acts[node.id].values, rows_per_group, ways, args.activation_bits)
        rows.append((node.id, ratio))
        print(f"{node.id:<16} skip_ratio {ratio:.6f}")
    if rows:
        mean = sum(r for _, r in rows) / len(rows)
        print(f"mean over {len(rows)} layers: {mean:.6f}")
    return 0


def _run_simulation(args, meta: dict):
    graph = _load_graph(args)
    hw_doc = yaml.safe_load(_read(args.hardware))
    if meta.get("organization"):
        hw_doc["organization"] = list(meta["organization"])
    hw = parse_hardware(hw_doc)
    mapping = parse_mapping(_read(args.mapping)) if args.mapping else parse_mapping({})
    spec = None
    if getattr(args, "sparsity", None):
        spec = parse_sparsity(_read(args.sparsity))
        if meta.get("ratio") not in ("", None):
            spec = retarget_ratio(spec, meta["ratio"])
    masks = _load_masks(args, graph, mapping, spec)
    acts = _load_activations(args, getattr(args, "activation_bits", 8))
    return simulate(
        graph,
        hw,
        mapping,
        spec=spec,
        masks=masks,
        activations=acts,
        seed=args.seed,
    )


def cmd_simulate(args) -> int:
    meta = {
        "run_id": args.label or "",
        "organization": "",
        "mapping": args.mapping or "",
        "sparsity": args.sparsity or "",
        "ratio": args.ratio if args.ratio is not None else "",
    }
    result = _run_simulation(args, {"ratio": meta["ratio"]})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(result.to_dict(), f, indent=1, sort_keys=True)
    if args.format == "csv":
        print(rows_to_csv([result_row(result, meta)]), end="")
    else:
        print(result.format_report(per_step=args.per_step))
    return 0


def cmd_compare(args) -> int:
    with open(args.result_a, "r", encoding="utf-8") as f:
        a = json.load(f)
    with open(args.result_b, "r", encoding="utf-8") as f:
        b = json.load(f)
    if a["fingerprint"] != b["fingerprint"]:
        print("workload mismatch: results come from different workloads", file=sys.stderr)
        return 1
    speedup = a["latency"]["total"] / b["latency"]["total"]
    saving = a["energy"]["total"] / b["energy"]["total"]
    util_delta = b["utilization"] - a["utilization"]
    print(f"baseline: {args.result_a}")
    print(f"variant:  {args.result_b}")
    print(f"speedup (baseline/variant latency): {speedup:.6f}")
    print(f"energy saving (baseline/variant):   {saving:.6f}")
    print(f"utilization delta (variant - baseline): {util_delta:+.6f}")
    return 0


def retarget_ratio(spec: SparsitySpec, target) -> SparsitySpec:
    """Rescale a spec to an overall sparsity target.

    Single patterns take the target directly. For an intra + full hybrid
    the intra ratio stays fixed and the full ratio moves so the composed
    keep fraction hits the target; the full pattern drops out when it would
    keep everything.
    """
    t = ratio_fraction(target)
    if len(spec.patterns) == 1:
        p = spec.patterns[0]
        return SparsitySpec((BlockPattern(p.kind, p.block_size, t, p.pattern_set),))
    kinds = sorted(p.kind for p in spec.patterns)
    if kinds != [FULL_BLOCK, INTRA_BLOCK]:
        raise ValueError(
            f"ratio override supports single patterns or intra+full hybrids, "
            f"got {[p.kind for p in spec.patterns]}"
        )
    intra = next(p for p in spec.patterns if p.kind == INTRA_BLOCK)
    r_full = 1 - (1 - t) / (1 - intra.sparsity_ratio)
    if r_full < 0:
        raise ValueError(
            f"target ratio {target} is below the fixed intra ratio {intra.sparsity_ratio}"
        )
    if r_full == 0:
        return SparsitySpec((intra,))
    out = []
    for p in spec.patterns:
        if p.kind == FULL_BLOCK:
            out.append(BlockPattern(p.kind, p.block_size, r_full, p.pattern_set))
        else:
            out.append(p)
    return SparsitySpec(tuple(out))


def _sweep_points(plan: dict) -> list[dict]:
    axes = plan.get("axes", {}) or {}
    sparsities = axes.get("sparsity") or [plan.get("sparsity")]
    ratios = axes.get("ratio") or [None]
    orgs = axes.get("organization") or [None]
    mappings = axes.get("mapping") or [plan.get("mapping")]
    points = []
    for sp in sparsities:
        for ratio in ratios:
            for org in orgs:
                for mp in mappings:
                    label_bits = [
                        os.path.splitext(os.path.basename(sp))[0] if sp else "dense",
                        f"r={ratio}" if ratio is not None else "r=as_specified",
                        f"org={'x'.join(str(v) for v in org)}" if org else "org=base",
                        os.path.splitext(os.path.basename(mp))[0] if mp else "map=default",
                    ]
                    points.append(
                        {
                            "run_id": "|".join(label_bits),
                            "workload": plan["workload"],
                            "hardware": plan["hardware"],
                            "mapping": mp,
                            "sparsity": sp,
                            "ratio": ratio,
                            "organization": org,
                            "weights": plan.get("weights"),
                            "activations": plan.get("activations"),
                            "seed": plan.get("seed", 0),
                        }
                    )
    return points


def _sweep_worker(point: dict) -> dict:
    ns = argparse.Namespace(
        workload=point["workload"],
        hardware=point["hardware"],
        mapping=point["mapping"],
        sparsity=point["sparsity"],
        weights=point.get("weights"),
        masks=None,
        activations=point.get("activations"),
        activation_bits=point.get("activation_bits", 8),
        seed=point.get("seed", 0),
    )
    meta = {
        "run_id": point["run_id"],
        "organization": point.get("organization") or "",
        "mapping": point.get("mapping") or "",
        "sparsity": point.get("sparsity") or "",
        "ratio": point.get("ratio") if point.get("ratio") is not None else "",
    }
    try:
        result = _run_simulation(ns, {"organization": point.get("organization"), "ratio": meta["ratio"]})
        row = result_row(result, meta)
        if point.get("organization"):
            row["organization"] = "x".join(str(v) for v in point["organization"])
        return row
    except Exception as exc:
        row = {c: "" for c in CSV_COLUMNS}
        row["run_id"] = point["run_id"]
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row


def cmd_sweep(args) -> int:
    plan = yaml.safe_load(_read(args.plan))
    points = _sweep_points(plan)
    if not points:
        print("sweep plan produced no grid points", file=sys.stderr)
        return 1
    print(f"sweep: {len(points)} grid points", file=sys.stderr)
    jobs = args.jobs if args.jobs is not None else plan.get("jobs") or os.cpu_count() or 1
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_worker, points))
    else:
        rows = [_sweep_worker(p) for p in points]
    text = rows_to_csv(rows)
    out = args.out or plan.get("out")
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
        print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    else:
        print(text, end="")
    failures = [r for r in rows if r.get("error")]
    for r in failures:
        print(f"row {r['run_id']} failed: {r['error']}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------


def _add_common(p, *names):
    flags = {
        "workload": dict(required=True, help="workload description (YAML)"),
        "hardware": dict(required=True, help="hardware description (YAML)"),
        "mapping": dict(default=None, help="mapping description (YAML)"),
        "sparsity": dict(default=None, help="sparsity spec (YAML)"),
        "weights": dict(default=None, help="weight tensor container"),
        "masks": dict(default=None, help="precomputed mask container"),
        "activations": dict(default=None, help="activation dump container"),
    }
    for name in names:
        p.add_argument(f"--{name}", **flags[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cimcost",
        description="Cost modeling for block-sparse DNN workloads on digital "
        "SRAM compute-in-memory architectures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check workload, hardware, mapping and sparsity")
    _add_common(p, "workload", "hardware", "mapping", "sparsity")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("prune", help="generate masks from weights and a sparsity spec")
    _add_common(p, "workload", "mapping", "sparsity", "weights")
    p.add_argument("--hardware", default=None, help="unused, accepted for symmetry")
    p.add_argument("--criterion", choices=["l1", "l2"], default=L1)
    p.add_argument("--out", default=None, help="mask container output path")
    p.set_defaults(func=cmd_prune, sparsity_required=True)

    p = sub.add_parser("profile", help="per-layer skippable bit-cycle ratios")
    _add_common(p, "workload", "hardware", "mapping", "sparsity", "activations")
    p.add_argument("--activation-bits", type=int, default=8)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("simulate", help="full cost simulation")
    _add_common(p, "workload", "hardware", "mapping", "sparsity", "weights", "masks", "activations")
    p.add_argument("--activation-bits", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", default=None, help="override the spec's overall sparsity ratio")
    p.add_argument("--label", default=None, help="run id recorded in CSV output")
    p.add_argument("--out", default=None, help="write the full result as JSON")
    p.add_argument("--format", choices=["report", "csv"], default="report")
    p.add_argument("--per-step", action="store_true", help="include per-step latency trace")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="speedup and energy saving between two results")
    p.add_argument("result_a", help="baseline result JSON")
    p.add_argument("result_b", help="variant result JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="run a grid of simulations from a plan file")
    p.add_argument("--plan", required=True, help="sweep plan (YAML)")
    p.add_argument("--out", default=None, help="CSV output path (default from plan)")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers (default: cores)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "prune" and not args.sparsity:
        parser.error("prune requires --sparsity")
    try:
        return args.func(args)
    except (FileNotFoundError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"schema error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
