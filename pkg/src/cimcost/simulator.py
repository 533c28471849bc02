"""Cycle-granular cost simulation: pipeline latency, accesses, energy.

Every workload becomes a chain of pipeline steps (load weights, compute,
write back). Step latencies follow the buffer bandwidths and one cycle per
input bit per array pass; steps overlap according to the weight buffer
banking and the writeback-overlap capability:

* ping-pong banking preloads step i while step i-1 computes, so each
  intermediate step contributes max(load_i, comp_{i-1} + wb_term), where
  wb_term is zero when the output path drains writebacks concurrently with
  the next compute and wb_{i-1} otherwise;
* single banking serializes everything.

With writeback overlap enabled the output path is assumed to absorb
non-final writebacks without backpressure (completion is the final step's
drain); the event-driven oracle in the test suite implements the same
semantics with an explicit cycle walk.

Energy is the exact sum of per-access energies times access counts, buffer
read/write energies times traffic, and static power times total latency
for every resolved unit instance, idle or not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hardware import (
    HardwareSpec,
    SparsitySummary,
    default_index_widths,
    index_storage,
    infer_sparsity_support,
)
from .mapper import (
    MappingSpec,
    Schedule,
    ScheduleStep,
    build_schedule,
    utilization,
    validate_mapping,
)
from .profiler import ActivationSet, skippable_ratio
from .pruner import L1, prune_composite, random_mask
from .sparsity import (
    SparseMask,
    SparsitySpec,
    bind_spec,
    dense_mask,
    has_symbols,
    validate_spec,
)
from .workload import WorkloadGraph, reshape_weight, reshaped_dims


class SimulationError(ValueError):
    """Verification failure; the message carries module-qualified diagnostics."""


# ---------------------------------------------------------------------------
# latency


@dataclass
class LatencyResult:
    loads: list[int]
    comps: list[int]
    wbs: list[int]
    overlaps: list[int]  # resolved P_i for steps 2..n
    total: int

    @property
    def compute_cycles(self) -> int:
        return sum(self.comps)

    @property
    def n_steps(self) -> int:
        return len(self.loads)


def _postprocess_width(hw: HardwareSpec) -> int:
    unit = hw.unit("postprocess")
    if unit is not None and unit.dims:
        return int(unit.dims[0])
    return 8


def effective_bit_cycles(bit_cycles: int, skip_ratio: float) -> int:
    if not 0.0 <= skip_ratio <= 1.0:
        raise SimulationError(f"skip ratio {skip_ratio} outside [0, 1]")
    return math.ceil(bit_cycles * (1.0 - skip_ratio))


def step_latencies(
    step: ScheduleStep, hw: HardwareSpec, skip_ratio: float = 0.0
) -> tuple[int, int, int]:
    """(load, compute, writeback) cycles of one pipeline step."""
    if step.unit_class == "cim_macro":
        load_buf = hw.buffer_for("weights")
        comp = effective_bit_cycles(hw.feature_bits * step.passes, skip_ratio)
    else:
        load_buf = hw.buffer_for("features")
        comp = math.ceil(step.elements / _postprocess_width(hw))
    out_buf = hw.buffer_for("outputs")
    load = math.ceil(step.load_bytes / load_buf.bandwidth) if step.load_bytes else 0
    wb = math.ceil(step.writeback_bytes / out_buf.bandwidth) if step.writeback_bytes else 0
    return load, comp, wb


def pipeline_overlap(
    load_i: int,
    comp_prev: int,
    wb_prev: int,
    banking: str = "ping_pong",
    wb_overlap: bool = True,
) -> int:
    """Contribution of an intermediate pipeline step to total latency."""
    if banking == "single":
        return comp_prev + wb_prev + load_i
    wb_term = 0 if wb_overlap else wb_prev
    return max(load_i, comp_prev + wb_term)


def total_latency(
    schedule: Schedule,
    hw: HardwareSpec,
    skip_ratios: dict[str, float] | None = None,
) -> LatencyResult:
    """Pipelined total: load_1 + sum of overlap terms + comp_n + wb_n."""
    if not schedule.steps:
        raise SimulationError("cannot compute latency of an empty schedule")
    skip_ratios = skip_ratios or {}
    loads, comps, wbs = [], [], []
    for step in schedule.steps:
        l, c, w = step_latencies(step, hw, skip_ratios.get(step.node_id, 0.0))
        loads.append(l)
        comps.append(c)
        wbs.append(w)
    banking = hw.buffer_for("weights").banking
    overlaps = [
        pipeline_overlap(loads[i], comps[i - 1], wbs[i - 1], banking, hw.writeback_overlap)
        for i in range(1, len(loads))
    ]
    total = loads[0] + sum(overlaps) + comps[-1] + wbs[-1]
    return LatencyResult(loads, comps, wbs, overlaps, total)


# ---------------------------------------------------------------------------
# access counting


@dataclass
class AccessCounts:
    compute: dict[str, int] = field(default_factory=dict)
    mem_reads: dict[str, int] = field(default_factory=dict)
    mem_writes: dict[str, int] = field(default_factory=dict)
    support: dict[str, int] = field(default_factory=dict)

    def _bump(self, table: dict[str, int], key: str, amount: int):
        if amount:
            table[key] = table.get(key, 0) + int(amount)


def _mem_accesses(bits: int, width: int) -> int:
    return math.ceil(bits / width) if bits else 0


def count_accesses(
    schedule: Schedule,
    masks: dict[str, SparseMask],
    hw: HardwareSpec,
    skip_ratios: dict[str, float] | None = None,
) -> AccessCounts:
    """Per-unit access totals for a schedule.

    Array-side units (subarrays, adder trees, shift adders, muxes) fire per
    effective bit-cycle over everything mapped, padding included;
    accumulators and pre-processing fire per pass over real work. Skipped
    bit-cycles remove array accesses but zero detection still runs per
    converted input.
    """
    skip_ratios = skip_ratios or {}
    counts = AccessCounts()
    fb = schedule.feature_bits
    sub = hw.unit("cim_subarray")
    tree = hw.unit("adder_tree")
    shifter = hw.unit("shift_adder")
    acc = hw.unit("accumulator")
    pre = hw.unit("preprocess")
    post = hw.unit("postprocess")
    mux = hw.unit("index_mux")
    zdet = hw.unit_by_name("zero_detect")
    extra_acc = hw.unit_by_name("sparsity_accumulator") or acc
    wbuf = hw.buffer_for("weights")
    fbuf = hw.buffer_for("features")
    obuf = hw.buffer_for("outputs")
    imem = hw.memory("index_memory")

    for step in schedule.steps:
        if step.unit_class == "cim_macro":
            sigma = skip_ratios.get(step.node_id, 0.0)
            ebc = effective_bit_cycles(fb * step.passes, sigma)
            if sub:
                counts._bump(counts.compute, sub.name, ebc * step.active_subarrays)
            if tree:
                counts._bump(counts.compute, tree.name, ebc * step.active_subarrays)
            if shifter:
                counts._bump(counts.compute, shifter.name, ebc * step.active_cols)
            if acc:
                counts._bump(counts.compute, acc.name, step.acc_ops)
            rec = schedule.nodes[step.node_id]
            if mux and rec.intra_ways > 1:
                counts._bump(counts.compute, mux.name, ebc * step.active_rows)
                counts._bump(counts.support, "mux_ops", ebc * step.active_rows)
            if pre:
                counts._bump(counts.compute, pre.name, step.conversions)
            if zdet and hw.input_sparsity_enabled:
                counts._bump(counts.compute, zdet.name, step.conversions)
                counts._bump(counts.support, "zero_detect_ops", step.conversions)
            if imem and step.index_blocks:
                counts._bump(counts.mem_reads, imem.name, step.index_blocks)
                counts._bump(counts.support, "index_reads", step.index_blocks)
            counts._bump(counts.mem_reads, wbuf.name, _mem_accesses(step.load_bytes * 8, wbuf.width_bits))
            counts._bump(
                counts.mem_reads, fbuf.name, _mem_accesses(step.conversions * fb, fbuf.width_bits)
            )
            counts._bump(
                counts.mem_writes, obuf.name, _mem_accesses(step.writeback_bytes * 8, obuf.width_bits)
            )
        else:
            if post:
                counts._bump(counts.compute, post.name, step.elements)
            counts._bump(counts.mem_reads, fbuf.name, _mem_accesses(step.load_bytes * 8, fbuf.width_bits))
            counts._bump(
                counts.mem_writes, obuf.name, _mem_accesses(step.writeback_bytes * 8, obuf.width_bits)
            )

    for rec in schedule.nodes.values():
        if rec.kind not in ("conv", "fc", "depthwise_conv"):
            continue
        extra = 0
        if rec.relocated_lanes:
            extra += rec.relocated_lanes * rec.feature_total
        if rec.misaligned and rec.compressed_shape:
            extra += rec.compressed_shape[1] * rec.feature_total
        if extra and extra_acc:
            counts._bump(counts.compute, extra_acc.name, extra)
            counts._bump(counts.support, "extra_accumulations", extra)

    if imem:
        entries = 0
        for mask in masks.values():
            entries += len(mask.block_index)
            if mask.elem_index:
                entries += sum(len(v) for v in mask.elem_index.values())
        counts._bump(counts.mem_writes, imem.name, entries)
        counts._bump(counts.support, "index_writes", entries)
    return counts


# ---------------------------------------------------------------------------
# energy


@dataclass
class EnergyBreakdown:
    compute: dict[str, float]
    memory: dict[str, float]
    static: dict[str, float]
    support: dict[str, float]
    total: float


def total_energy(counts: AccessCounts, latency: LatencyResult, hw: HardwareSpec) -> EnergyBreakdown:
    """Exact formula evaluation; the breakdown sums to the total by
    construction (the total is the single pass over the same parts)."""
    compute: dict[str, float] = {}
    for unit in hw.compute_units:
        n = counts.compute.get(unit.name, 0)
        if n:
            compute[unit.name] = unit.energy_per_access * n
    memory: dict[str, float] = {}
    for m in hw.memory_units:
        reads = counts.mem_reads.get(m.name, 0)
        writes = counts.mem_writes.get(m.name, 0)
        if reads or writes:
            memory[m.name] = m.energy_per_read * reads + m.energy_per_write * writes
    static: dict[str, float] = {}
    for unit in hw.compute_units:
        e = unit.static_power * (unit.count or 1) * latency.total
        if e:
            static[unit.name] = static.get(unit.name, 0.0) + e
    for m in hw.memory_units:
        e = m.static_power * latency.total
        if e:
            static[m.name] = static.get(m.name, 0.0) + e
    total = sum(compute.values()) + sum(memory.values()) + sum(static.values())

    support: dict[str, float] = {}
    mux = hw.unit("index_mux")
    if mux and mux.name in compute:
        support["index_mux"] = compute[mux.name]
    extra = hw.unit_by_name("sparsity_accumulator")
    if extra and extra.name in compute:
        support["extra_accumulations"] = compute[extra.name]
    zdet = hw.unit_by_name("zero_detect")
    if zdet and zdet.name in compute:
        support["zero_detection"] = compute[zdet.name]
    imem = hw.memory("index_memory")
    if imem and imem.name in memory:
        support["index_memory"] = memory[imem.name]
    return EnergyBreakdown(compute, memory, static, support, total)


# ---------------------------------------------------------------------------
# end-to-end simulation


@dataclass
class SimulationResult:
    workload: str
    hardware: str
    fingerprint: str
    seed: int
    latency: LatencyResult
    energy: EnergyBreakdown
    counts: AccessCounts
    utilization: float
    realized_sparsity: float
    index_bits_total: int
    index_bits_max: int
    skip_ratios: dict[str, float]
    per_layer: dict[str, dict]
    assumptions: list[str]
    notes: list[str]

    def to_dict(self) -> dict:
        return {
            "workload": self.workload,
            "hardware": self.hardware,
            "fingerprint": self.fingerprint,
            "seed": self.seed,
            "latency": {
                "total": self.latency.total,
                "compute_cycles": self.latency.compute_cycles,
                "loads": self.latency.loads,
                "comps": self.latency.comps,
                "wbs": self.latency.wbs,
                "overlaps": self.latency.overlaps,
            },
            "energy": {
                "total": self.energy.total,
                "compute": self.energy.compute,
                "memory": self.energy.memory,
                "static": self.energy.static,
                "support": self.energy.support,
            },
            "counts": {
                "compute": self.counts.compute,
                "mem_reads": self.counts.mem_reads,
                "mem_writes": self.counts.mem_writes,
                "support": self.counts.support,
            },
            "utilization": self.utilization,
            "realized_sparsity": self.realized_sparsity,
            "index_bits_total": self.index_bits_total,
            "index_bits_max": self.index_bits_max,
            "skip_ratios": self.skip_ratios,
            "per_layer": self.per_layer,
            "assumptions": self.assumptions,
            "notes": self.notes,
        }

    def format_report(self, per_step: bool = False) -> str:
        lines = []
        lines.append(f"workload: {self.workload}   hardware: {self.hardware}   seed: {self.seed}")
        lines.append(
            f"latency: {self.latency.total} cycles over {self.latency.n_steps} steps "
            f"(compute {self.latency.compute_cycles})"
        )
        lines.append(f"energy: {self.energy.total:.3f} pJ")
        lines.append(f"utilization: {self.utilization:.4f}")
        lines.append(f"realized weight sparsity: {self.realized_sparsity:.4f}")
        lines.append(
            f"index storage: {self.index_bits_total} bits total, {self.index_bits_max} max per layer"
        )
        if self.skip_ratios:
            mean = sum(self.skip_ratios.values()) / len(self.skip_ratios)
            lines.append(f"input-skip ratio (mean over layers): {mean:.4f}")
        lines.append("")
        lines.append("energy breakdown (pJ):")
        for name, e in sorted(self.energy.compute.items()):
            lines.append(f"  compute  {name:<24} {e:18.3f}")
        for name, e in sorted(self.energy.memory.items()):
            lines.append(f"  memory   {name:<24} {e:18.3f}")
        for name, e in sorted(self.energy.static.items()):
            lines.append(f"  static   {name:<24} {e:18.3f}")
        if self.energy.support:
            lines.append("sparsity-support share:")
            for name, e in sorted(self.energy.support.items()):
                lines.append(f"  {name:<33} {e:18.3f}")
        if per_step:
            lines.append("")
            lines.append("per-step latency trace (load, comp, wb):")
            for i, (l, c, w) in enumerate(
                zip(self.latency.loads, self.latency.comps, self.latency.wbs)
            ):
                lines.append(f"  step {i:>5}: {l:>10} {c:>10} {w:>10}")
        if self.assumptions:
            lines.append("")
            lines.append("assumed defaults:")
            for a in self.assumptions:
                lines.append(f"  - {a}")
        if self.notes:
            lines.append("notes:")
            for nline in self.notes:
                lines.append(f"  - {nline}")
        return "\n".join(lines)


def resolve_masks(
    graph: WorkloadGraph,
    mapping: MappingSpec,
    spec: SparsitySpec | None,
    seed: int,
    masks: dict[str, SparseMask] | None = None,
    criterion: str = L1,
) -> tuple[dict[str, SparseMask], list[str]]:
    """Per-tensor masks for every MVM node.

    Order of precedence: explicit masks, then pruning from weight payloads,
    then randomized masks from the spec. Layers where the (bound) spec
    fails validation stay dense and are noted; depthwise layers are never
    block-pruned.
    """
    out: dict[str, SparseMask] = dict(masks or {})
    notes: list[str] = []
    if spec is None:
        return out, notes
    for node in graph.mvm_nodes():
        key = node.weight_ref or node.id
        if key in out:
            continue
        dims = reshaped_dims(node, mapping.flatten_order)
        if node.kind == "depthwise_conv":
            notes.append(f"{node.id}: depthwise layer kept dense")
            continue
        try:
            bound = bind_spec(spec, dims, node.dims.get("C_in")) if has_symbols(spec) else spec
        except Exception as exc:  # unresolved symbol for this layer
            notes.append(f"{node.id}: kept dense ({exc})")
            continue
        report = validate_spec(bound, dims)
        if not report.ok:
            notes.append(
                f"{node.id}: kept dense (spec invalid for {dims[0]}x{dims[1]}: "
                f"{'; '.join(str(d) for d in report.errors)})"
            )
            continue
        tensor = graph.weights.get(key)
        if tensor is not None and tensor.values is not None:
            w2d = reshape_weight(tensor, node, mapping.flatten_order)
            out[key] = prune_composite(w2d, bound, criterion, tensor_id=key)
        else:
            out[key] = random_mask(bound, dims, seed, tensor_id=key)
    return out, notes


def simulate(
    graph: WorkloadGraph,
    hw: HardwareSpec,
    mapping: MappingSpec,
    spec: SparsitySpec | None = None,
    masks: dict[str, SparseMask] | None = None,
    activations: dict[str, ActivationSet] | None = None,
    seed: int = 0,
    criterion: str = L1,
) -> SimulationResult:
    """Verification, profiling, scheduling, counting, latency and energy.

    Deterministic for fixed inputs; raises SimulationError with
    module-qualified diagnostics when verification fails.
    """
    mreport = validate_mapping(mapping, hw)
    if not mreport.ok:
        raise SimulationError(f"mapping: {mreport}")

    masks, notes = resolve_masks(graph, mapping, spec, seed, masks)
    weights: dict[str, np.ndarray] = {}
    for node in graph.mvm_nodes():
        key = node.weight_ref or node.id
        tensor = graph.weights.get(key)
        if tensor is not None and tensor.values is not None:
            weights[key] = reshape_weight(tensor, node, mapping.flatten_order)

    schedule = build_schedule(graph, hw, mapping, masks, weights)

    # per-layer sparsity bookkeeping
    per_layer: dict[str, dict] = {}
    total_elems = 0
    total_zeros = 0
    index_total = 0
    index_max = 0
    has_intra = False
    intra_ways = 1
    for node in graph.mvm_nodes():
        key = node.weight_ref or node.id
        dims = reshaped_dims(node, mapping.flatten_order)
        mask = masks.get(key)
        entry: dict = {"matrix_dims": dims}
        total_elems += dims[0] * dims[1]
        if mask is not None and mask.spec is not None and mask.spec.patterns:
            bits_b, bits_e = default_index_widths(dims, mask.spec)
            layer_bits = index_storage(mask, mask.spec, bits_b, bits_e)
            entry["realized_sparsity"] = mask.realized_sparsity
            entry["index_bits"] = layer_bits
            index_total += layer_bits
            index_max = max(index_max, layer_bits)
            total_zeros += dims[0] * dims[1] - mask.nnz
            if mask.elem_index:
                has_intra = True
                for p in mask.spec.intra_patterns:
                    intra_ways = max(intra_ways, p.block_size[0])
        else:
            entry["realized_sparsity"] = 0.0
            entry["index_bits"] = 0
        per_layer[node.id] = entry

    summary = SparsitySummary(
        has_weight_sparsity=any(
            m.spec is not None and m.spec.patterns for m in masks.values()
        ),
        has_intra=has_intra,
        intra_ways=intra_ways,
        needs_extra_accumulators=any(
            rec.misaligned or rec.relocated_lanes > 0 for rec in schedule.nodes.values()
        ),
        max_index_bits=index_max,
        input_sparsity=hw.input_sparsity_enabled,
    )
    hw_resolved = infer_sparsity_support(hw, summary)

    skip_ratios: dict[str, float] = {}
    if hw.input_sparsity_enabled:
        for node in graph.mvm_nodes():
            rec = schedule.nodes[node.id]
            acts = (activations or {}).get(node.id)
            if acts is None:
                skip_ratios[node.id] = 0.0
                notes.append(f"{node.id}: no activation dump, skip ratio 0")
            elif rec.rows_per_pass:
                skip_ratios[node.id] = skippable_ratio(
                    acts.values, rec.rows_per_pass, rec.intra_ways, acts.bitwidth
                )

    latency = total_latency(schedule, hw_resolved, skip_ratios)
    counts = count_accesses(schedule, masks, hw_resolved, skip_ratios)
    energy = total_energy(counts, latency, hw_resolved)
    util = utilization(schedule, hw_resolved)
    realized = total_zeros / total_elems if total_elems else 0.0

    return SimulationResult(
        workload=graph.name,
        hardware=hw.name,
        fingerprint=graph.fingerprint(),
        seed=seed,
        latency=latency,
        energy=energy,
        counts=counts,
        utilization=util,
        realized_sparsity=realized,
        index_bits_total=index_total,
        index_bits_max=index_max,
        skip_ratios=skip_ratios,
        per_layer=per_layer,
        assumptions=list(hw_resolved.assumptions),
        notes=notes,
    )
