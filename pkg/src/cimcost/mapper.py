"""Weight reshaping, compression, tiling and schedule construction.

The mapping pipeline per matrix-vector node:

1. reshape weights to the (rows, cols) matrix given the flatten order,
2. compress away the mask's structural zeros along the chosen orientation
   (row lanes shrink horizontally, column lanes vertically),
3. optionally equalize ragged lanes by padding or by slicing long lanes
   into fixed-size chunks that repack as new lanes,
4. cut the equalized matrix into tiles (edge tiles zero-padded),
5. expand the loopnest: spatially unrolled weight loops partition the tile
   grid over organization axes, duplicated feature loops replicate weight
   tiles with disjoint feature slices, temporal loops serialize into
   pipeline steps of one tile per macro.

Padding cells are explicit zeros that occupy array cells and burn compute
cycles; only cells carrying compressed data count toward utilization. That
asymmetry is what makes fragmentation visible in the results.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .hardware import HardwareSpec
from .sparsity import (
    SparseMask,
    ValidationReport,
    dense_mask,
    validate_spec,
)
from .workload import (
    MVM_KINDS,
    NODE_KINDS,
    OpNode,
    WorkloadGraph,
    reshaped_dims,
)

ROW_WISE = "row_wise"
COLUMN_WISE = "column_wise"

LOOP_DIMS = ("row_tile", "col_tile", "feature")

DEFAULT_MAPPING_DICT = {
    "conv": "cim_macro",
    "fc": "cim_macro",
    "depthwise_conv": "cim_macro",
    "elementwise": "postprocess",
    "pool": "postprocess",
    "activation": "postprocess",
}


class MappingError(ValueError):
    """Malformed mapping description or impossible placement."""


# ---------------------------------------------------------------------------
# compression


@dataclass
class CompressedMatrix:
    """Ragged lanes of surviving elements plus a relocation map.

    axis 'row' means lanes run horizontally (one per surviving matrix row);
    'col' means vertically. lane_coords holds each element's original
    cross-axis index, -1 for fill zeros, which together with lane_ids makes
    reconstruction exact.
    """

    axis: str
    orig_shape: tuple[int, int]
    lanes: list[np.ndarray]
    lane_coords: list[np.ndarray]
    lane_ids: list[int]
    lane_chunks: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.lane_chunks:
            self.lane_chunks = [0] * len(self.lanes)

    @property
    def lane_lengths(self) -> list[int]:
        return [len(l) for l in self.lanes]

    @property
    def ragged(self) -> bool:
        lens = self.lane_lengths
        return len(set(lens)) > 1

    @property
    def n_relocated(self) -> int:
        return sum(1 for c in self.lane_chunks if c > 0)

    @property
    def n_real_cells(self) -> int:
        return int(sum((c >= 0).sum() for c in self.lane_coords))

    def to_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense matrix-oriented view plus a real-cell mask.

        Row lanes stack as rows (n_lanes x L); column lanes stand as
        columns (L x n_lanes). Short lanes are padded with zeros that are
        marked not-real.
        """
        if not self.lanes:
            empty = np.zeros((0, 0))
            return empty, empty.astype(bool)
        L = max(self.lane_lengths)
        grid = np.zeros((len(self.lanes), L))
        real = np.zeros((len(self.lanes), L), dtype=bool)
        for k, (vals, coords) in enumerate(zip(self.lanes, self.lane_coords)):
            grid[k, : len(vals)] = vals
            real[k, : len(vals)] = coords >= 0
        if self.axis == "col":
            return grid.T, real.T
        return grid, real

    def reconstruct(self) -> np.ndarray:
        out = np.zeros(self.orig_shape)
        for lane_id, vals, coords in zip(self.lane_ids, self.lanes, self.lane_coords):
            keep = coords >= 0
            if self.axis == "row":
                out[lane_id, coords[keep]] = vals[keep]
            else:
                out[coords[keep], lane_id] = vals[keep]
        return out


def compress(W_masked: np.ndarray, mask: SparseMask, orientation: str) -> CompressedMatrix:
    """Remove the mask's structural zeros along one orientation.

    Row-wise compression shifts surviving elements left within each row;
    column-wise shifts them up within each column. Column-oriented intra
    blocks collapse only under column-wise compression, so row-wise
    compression of such a mask is rejected.
    """
    if orientation not in (ROW_WISE, COLUMN_WISE):
        raise MappingError(f"unknown compression orientation {orientation!r}")
    W_masked = np.asarray(W_masked, dtype=np.float64)
    if W_masked.shape != tuple(mask.dims):
        raise MappingError(f"matrix {W_masked.shape} does not match mask {mask.dims}")
    if mask.elem_index and orientation == ROW_WISE:
        raise MappingError(
            "row-wise compression is incompatible with column-oriented intra blocks"
        )
    bits = mask.bits.astype(bool)
    axis = "row" if orientation == ROW_WISE else "col"
    lanes, coords, ids = [], [], []
    n_lanes = W_masked.shape[0] if axis == "row" else W_masked.shape[1]
    for k in range(n_lanes):
        keep = bits[k, :] if axis == "row" else bits[:, k]
        idx = np.nonzero(keep)[0]
        if idx.size == 0:
            continue
        vals = W_masked[k, idx] if axis == "row" else W_masked[idx, k]
        lanes.append(vals)
        coords.append(idx.astype(np.int64))
        ids.append(k)
    return CompressedMatrix(axis, W_masked.shape, lanes, coords, ids)


def rearrange(
    comp: CompressedMatrix,
    method: str,
    slice_size: int | None = None,
    axis: str | None = None,
) -> CompressedMatrix:
    """Equalize ragged lanes by padding or slicing.

    pad extends every lane with explicit zeros to the longest length;
    slice cuts lanes into slice_size chunks that repack as new lanes (the
    tail chunk of each lane is zero-filled). The relocation map survives
    both, so reconstruction stays exact.
    """
    if axis is not None and axis != comp.axis:
        raise MappingError(
            f"rearrange axis {axis!r} does not match compression lanes ({comp.axis!r})"
        )
    if method == "pad":
        if not comp.lanes:
            return comp
        L = max(comp.lane_lengths)
        lanes, coords = [], []
        for vals, cs in zip(comp.lanes, comp.lane_coords):
            fill = L - len(vals)
            lanes.append(np.concatenate([vals, np.zeros(fill)]))
            coords.append(np.concatenate([cs, np.full(fill, -1, dtype=np.int64)]))
        return CompressedMatrix(
            comp.axis, comp.orig_shape, lanes, coords, list(comp.lane_ids), list(comp.lane_chunks)
        )
    if method == "slice":
        if slice_size is None or slice_size <= 0:
            raise MappingError("slice rearrangement needs slice_size >= 1")
        lanes, coords, ids, chunks = [], [], [], []
        for lane_id, vals, cs, base in zip(
            comp.lane_ids, comp.lanes, comp.lane_coords, comp.lane_chunks
        ):
            n_chunks = max(1, math.ceil(len(vals) / slice_size))
            for c in range(n_chunks):
                seg = vals[c * slice_size : (c + 1) * slice_size]
                seg_c = cs[c * slice_size : (c + 1) * slice_size]
                fill = slice_size - len(seg)
                lanes.append(np.concatenate([seg, np.zeros(fill)]))
                coords.append(
                    np.concatenate([seg_c, np.full(fill, -1, dtype=np.int64)])
                )
                ids.append(lane_id)
                chunks.append(base + c)
        return CompressedMatrix(comp.axis, comp.orig_shape, lanes, coords, ids, chunks)
    raise MappingError(f"unknown rearrange method {method!r}")


def decompress(comp: CompressedMatrix) -> np.ndarray:
    """Inverse of compress (and of any rearrangement applied after it)."""
    return comp.reconstruct()


# ---------------------------------------------------------------------------
# tiling


@dataclass
class Tile:
    grid_pos: tuple[int, int]
    data: np.ndarray
    real_cells: int
    rows_used: int
    cols_used: int


@dataclass
class TileGrid:
    tiles: dict[tuple[int, int], Tile]
    grid_shape: tuple[int, int]
    tile_dims: tuple[int, int]
    padding_elems: int

    def tile(self, gi: int, gj: int) -> Tile:
        return self.tiles[(gi, gj)]


def tile(matrix: np.ndarray, tile_dims: tuple[int, int], real=None) -> TileGrid:
    """Partition a matrix into a ceil(M/tr) x ceil(N/tc) grid of padded tiles.

    `real` marks cells carrying compressed data; edge padding and lane fill
    both count toward the reported padding.
    """
    tr, tc = tile_dims
    if tr < 1 or tc < 1:
        raise MappingError(f"tile dims {tile_dims} must be >= 1")
    M, N = matrix.shape
    if real is None:
        real = np.ones(matrix.shape, dtype=bool)
    gr, gc = math.ceil(M / tr), math.ceil(N / tc)
    tiles = {}
    padding = 0
    for gi in range(gr):
        for gj in range(gc):
            r0, c0 = gi * tr, gj * tc
            block = matrix[r0 : r0 + tr, c0 : c0 + tc]
            rb = real[r0 : r0 + tr, c0 : c0 + tc]
            data = np.zeros((tr, tc))
            data[: block.shape[0], : block.shape[1]] = block
            real_cells = int(rb.sum())
            padding += tr * tc - real_cells
            tiles[(gi, gj)] = Tile(
                grid_pos=(gi, gj),
                data=data,
                real_cells=real_cells,
                rows_used=block.shape[0],
                cols_used=block.shape[1],
            )
    return TileGrid(tiles, (gr, gc), (tr, tc), padding)


# ---------------------------------------------------------------------------
# mapping description


@dataclass(frozen=True)
class Loop:
    dim: str
    binding: str = "temporal"
    axis: int | None = None
    mode: str | None = None
    extent: int | None = None


@dataclass(frozen=True)
class RearrangeSpec:
    method: str
    slice_size: int | None = None
    axis: str | None = None


@dataclass(frozen=True)
class MappingSpec:
    flatten_order: tuple[str, ...] = ("C_in", "K_h", "K_w")
    compression: str = "auto"  # row_wise | column_wise | auto
    tile_dims: tuple[int, int] | str = "auto"
    rearrange: RearrangeSpec | None = None
    loopnest: tuple[Loop, ...] = (
        Loop("col_tile"),
        Loop("row_tile"),
        Loop("feature"),
    )
    mapping_dict: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MAPPING_DICT))

    def destination(self, kind: str) -> str:
        return self.mapping_dict.get(kind, DEFAULT_MAPPING_DICT[kind])


def parse_mapping(text: str | dict) -> MappingSpec:
    doc = yaml.safe_load(text) if isinstance(text, str) else text
    if doc is None:
        doc = {}
    loops = []
    for entry in doc.get("loopnest", []):
        loops.append(
            Loop(
                dim=str(entry["dim"]),
                binding=str(entry.get("binding", "temporal")),
                axis=entry.get("axis"),
                mode=entry.get("mode"),
                extent=entry.get("extent"),
            )
        )
    if not loops:
        loops = [Loop("col_tile"), Loop("row_tile"), Loop("feature")]
    rearr = None
    if doc.get("rearrange"):
        r = doc["rearrange"]
        rearr = RearrangeSpec(
            method=str(r["method"]),
            slice_size=r.get("slice_size"),
            axis=r.get("axis"),
        )
    tile_dims = doc.get("tile", "auto")
    if tile_dims != "auto" and tile_dims is not None:
        tile_dims = (int(tile_dims[0]), int(tile_dims[1]))
    elif tile_dims is None:
        tile_dims = "auto"
    mapping_dict = dict(DEFAULT_MAPPING_DICT)
    mapping_dict.update({str(k): str(v) for k, v in (doc.get("mapping_dict") or {}).items()})
    return MappingSpec(
        flatten_order=tuple(doc.get("flatten", ("C_in", "K_h", "K_w"))),
        compression=str(doc.get("compression", "auto")),
        tile_dims=tile_dims,
        rearrange=rearr,
        loopnest=tuple(loops),
        mapping_dict=mapping_dict,
    )


def validate_mapping(mapping: MappingSpec, hw: HardwareSpec) -> ValidationReport:
    """Check loop legality, axis bounds, tile bounds and destinations."""
    report = ValidationReport()
    dims_seen = [l.dim for l in mapping.loopnest]
    if sorted(dims_seen) != sorted(LOOP_DIMS):
        report.error(
            "loopnest.dims",
            f"loopnest must name each of {LOOP_DIMS} exactly once, got {dims_seen}",
        )
        return report
    used_axes = set()
    for loop in mapping.loopnest:
        if loop.binding == "temporal":
            if loop.axis is not None or loop.mode is not None:
                report.error(
                    "loopnest.temporal", f"temporal loop {loop.dim} must not bind an axis/mode"
                )
            continue
        if loop.binding != "spatial":
            report.error("loopnest.binding", f"loop {loop.dim}: unknown binding {loop.binding!r}")
            continue
        if loop.axis is None or not 0 <= loop.axis < len(hw.organization):
            report.error(
                "loopnest.axis",
                f"loop {loop.dim}: spatial axis {loop.axis} outside organization "
                f"{hw.organization}",
            )
            continue
        if loop.axis in used_axes:
            report.error("loopnest.axis", f"organization axis {loop.axis} bound twice")
        used_axes.add(loop.axis)
        legal_mode = "duplicate" if loop.dim == "feature" else "unroll"
        if (loop.mode or legal_mode) != legal_mode:
            report.error(
                "loopnest.mode",
                f"loop {loop.dim}: mode {loop.mode!r} illegal (weight loops unroll, "
                "feature loops duplicate)",
            )
        if loop.extent is not None and loop.extent > hw.organization[loop.axis]:
            report.error(
                "loopnest.extent",
                f"loop {loop.dim}: spatial extent {loop.extent} exceeds axis size "
                f"{hw.organization[loop.axis]}",
            )
    if mapping.tile_dims != "auto":
        tr, tc = mapping.tile_dims
        if tr < 1 or tc < 1:
            report.error("tile.dims", f"tile dims {mapping.tile_dims} must be >= 1")
        if tr > hw.macro_array[0] or tc > hw.macro_array[1]:
            report.error(
                "tile.dims",
                f"tile {mapping.tile_dims} larger than macro array {hw.macro_array}",
            )
    if mapping.compression not in (ROW_WISE, COLUMN_WISE, "auto"):
        report.error("compression", f"unknown compression {mapping.compression!r}")
    if mapping.rearrange is not None:
        if mapping.rearrange.method not in ("pad", "slice"):
            report.error("rearrange", f"unknown method {mapping.rearrange.method!r}")
        elif mapping.rearrange.method == "slice" and (
            mapping.rearrange.slice_size is None or mapping.rearrange.slice_size <= 0
        ):
            report.error("rearrange", "slice rearrangement needs slice_size >= 1")
    for kind, dest in mapping.mapping_dict.items():
        if kind not in NODE_KINDS:
            report.error("mapping_dict", f"unknown op kind {kind!r}")
        elif kind in MVM_KINDS and dest != "cim_macro":
            report.error("mapping_dict", f"MVM kind {kind!r} must map to cim_macro")
        elif kind not in MVM_KINDS and dest not in ("postprocess",):
            report.error("mapping_dict", f"kind {kind!r} must map to postprocess")
    return report


# ---------------------------------------------------------------------------
# schedule


@dataclass
class ScheduleStep:
    node_id: str
    unit_class: str
    load_bytes: int = 0
    passes: int = 0
    pass_sum: int = 0
    conversions: int = 0
    acc_ops: int = 0
    writeback_bytes: int = 0
    elements: int = 0
    fanin: int = 0
    active_subarrays: int = 0
    active_rows: int = 0
    active_cols: int = 0
    occupied_cells: int = 0
    real_cells: int = 0
    mac_work: int = 0
    index_blocks: int = 0
    macro_tiles: dict[int, list[tuple[int, int]]] = field(default_factory=dict)


@dataclass
class NodeRecord:
    node_id: str
    kind: str
    matrix_dims: tuple[int, int] | None = None
    compressed_shape: tuple[int, int] | None = None
    grid_shape: tuple[int, int] | None = None
    feature_total: int = 0
    dup_ways: int = 1
    rows_per_pass: int = 0
    intra_ways: int = 1
    relocated_lanes: int = 0
    misaligned: bool = False
    padding_elems: int = 0
    effective_macs: int = 0


@dataclass
class Schedule:
    steps: list[ScheduleStep]
    nodes: dict[str, NodeRecord]
    feature_bits: int

    @property
    def n_steps(self) -> int:
        return len(self.steps)


def _loop_ways(mapping: MappingSpec, hw: HardwareSpec) -> dict[str, tuple[int, int | None]]:
    """Per loop dim: (parallel ways, organization axis or None)."""
    ways = {}
    for loop in mapping.loopnest:
        if loop.binding == "spatial":
            size = hw.organization[loop.axis]
            ways[loop.dim] = (loop.extent or size, loop.axis)
        else:
            ways[loop.dim] = (1, None)
    return ways


def _feature_slices(total: int, dup: int) -> list[int]:
    # Even split; remainder iterations go to the lowest-index replica.
    base = total // dup
    rem = total - base * dup
    return [base + rem] + [base] * (dup - 1)


def _resolve_orientation(mapping: MappingSpec, mask: SparseMask) -> str:
    if mapping.compression != "auto":
        return mapping.compression
    return COLUMN_WISE if mask.elem_index else ROW_WISE


def build_schedule(
    graph: WorkloadGraph,
    hw: HardwareSpec,
    mapping: MappingSpec,
    masks: dict[str, SparseMask] | None = None,
    weights: dict[str, np.ndarray] | None = None,
) -> Schedule:
    """Expand the loopnest into pipeline steps over the whole graph.

    `masks` is keyed by weight tensor id; missing entries mean dense.
    `weights` optionally provides reshaped payloads (values do not change
    costs, only the mapped structure does).
    """
    masks = masks or {}
    report = validate_mapping(mapping, hw)
    if not report.ok:
        raise MappingError(f"mapping rejected: {report}")
    steps: list[ScheduleStep] = []
    records: dict[str, NodeRecord] = {}
    ways = _loop_ways(mapping, hw)
    for node_id in graph.topo_order:
        node = graph.node(node_id)
        dest = mapping.destination(node.kind)
        if node.is_mvm and dest == "cim_macro":
            rec, node_steps = _schedule_mvm(node, graph, hw, mapping, masks, weights, ways)
        else:
            rec, node_steps = _schedule_post(node, hw)
        records[node_id] = rec
        steps.extend(node_steps)
    return Schedule(steps, records, hw.feature_bits)


def _schedule_post(node: OpNode, hw: HardwareSpec):
    elements = node.dims.get("count", 0)
    fanin = max(1, len(node.inputs))
    fb = hw.feature_bits
    step = ScheduleStep(
        node_id=node.id,
        unit_class="postprocess",
        elements=elements,
        fanin=fanin,
        load_bytes=math.ceil(fanin * elements * fb / 8),
        writeback_bytes=math.ceil(elements * fb / 8),
    )
    rec = NodeRecord(node_id=node.id, kind=node.kind)
    return rec, [step]


def _schedule_mvm(
    node: OpNode,
    graph: WorkloadGraph,
    hw: HardwareSpec,
    mapping: MappingSpec,
    masks: dict[str, SparseMask],
    weights: dict[str, np.ndarray] | None,
    ways: dict[str, tuple[int, int | None]],
):
    M, N = reshaped_dims(node, mapping.flatten_order)
    key = node.weight_ref or node.id
    mask = masks.get(key) or dense_mask(key, (M, N))
    if mask.dims != (M, N):
        raise MappingError(
            f"node {node.id!r}: mask dims {mask.dims} do not match matrix {(M, N)}"
        )
    if weights and key in weights:
        W2d = np.asarray(weights[key], dtype=np.float64)
        if W2d.shape != (M, N):
            raise MappingError(
                f"node {node.id!r}: reshaped weight {W2d.shape} does not match {(M, N)}"
            )
    else:
        W2d = np.zeros((M, N))
    W_masked = W2d * mask.bits

    orientation = _resolve_orientation(mapping, mask)
    comp = compress(W_masked, mask, orientation)
    if mapping.rearrange is not None and comp.lanes:
        comp = rearrange(
            comp, mapping.rearrange.method, mapping.rearrange.slice_size, mapping.rearrange.axis
        )
    grid, real = comp.to_grid()

    spec = mask.spec
    intra_ways = 1
    misaligned = False
    kept_per_block = 0
    if spec is not None and spec.patterns:
        for p in spec.intra_patterns:
            intra_ways = max(intra_ways, p.block_size[0])
        vr = validate_spec(spec, (M, N), hw.alignment_dims)
        misaligned = any(d.code.startswith("align.") for d in vr.warnings)
        if mask.block_index:
            kept_per_block = mask.nnz // len(mask.block_index)

    rec = NodeRecord(
        node_id=node.id,
        kind=node.kind,
        matrix_dims=(M, N),
        compressed_shape=grid.shape,
        feature_total=node.feature_count,
        intra_ways=intra_ways,
        relocated_lanes=comp.n_relocated,
        misaligned=misaligned,
    )
    if grid.size == 0:
        return rec, []

    tr, tc = _resolve_tile(mapping, grid.shape, hw)
    tg = tile(grid, (tr, tc), real)
    gr, gc = tg.grid_shape
    rec.grid_shape = (gr, gc)
    rec.padding_elems = tg.padding_elems
    rec.rows_per_pass = tr

    w_row, a_row = ways["row_tile"]
    w_col, a_col = ways["col_tile"]
    w_dup, a_dup = ways["feature"]
    t_r = math.ceil(gr / w_row)
    t_c = math.ceil(gc / w_col)

    F = node.feature_count
    slices = _feature_slices(F, w_dup)
    rec.dup_ways = w_dup

    # Temporal nesting follows loopnest order (outer first) for the weight
    # tile dims; the feature loop streams inside each step.
    temporal_dims = [l.dim for l in mapping.loopnest if l.dim != "feature"]
    outer_is_row = temporal_dims.index("row_tile") < temporal_dims.index("col_tile")
    if outer_is_row:
        chunk_iter = [(r, c) for r in range(t_r) for c in range(t_c)]
    else:
        chunk_iter = [(r, c) for c in range(t_c) for r in range(t_r)]

    org = hw.organization
    bound_axes = {a for a in (a_row, a_col, a_dup) if a is not None}
    macro_coords = list(itertools.product(*[range(d) for d in org]))
    wbits = hw.weight_bits
    fb = hw.feature_bits
    sr, sc = hw.subarray
    steps = []
    sparse = spec is not None and spec.patterns
    for (rc, cc) in chunk_iter:
        step = ScheduleStep(node_id=node.id, unit_class="cim_macro")
        group_rows: dict[int, dict[int, int]] = {}
        group_cols: dict[int, dict[int, int]] = {}
        group_slice: dict[int, int] = {}
        for flat, coords in enumerate(macro_coords):
            if any(coords[ax] != 0 for ax in range(len(org)) if ax not in bound_axes):
                continue
            row_way = coords[a_row] if a_row is not None else 0
            col_way = coords[a_col] if a_col is not None else 0
            dup_id = coords[a_dup] if a_dup is not None else 0
            if row_way >= w_row or col_way >= w_col or dup_id >= w_dup:
                continue
            gi = rc * w_row + row_way
            gj = cc * w_col + col_way
            if gi >= gr or gj >= gc:
                continue
            t = tg.tile(gi, gj)
            sl = slices[dup_id]
            group_slice[dup_id] = sl
            group_rows.setdefault(dup_id, {})[gi] = t.rows_used
            group_cols.setdefault(dup_id, {})[gj] = t.cols_used
            step.load_bytes += math.ceil(t.real_cells * wbits / 8)
            step.occupied_cells += tr * tc
            step.real_cells += t.real_cells
            step.active_rows += tr
            step.active_cols += tc
            step.active_subarrays += math.ceil(tr / sr) * math.ceil(tc / sc)
            step.acc_ops += sl * tc
            step.mac_work += sl * t.real_cells
            if sparse and kept_per_block:
                step.index_blocks += math.ceil(t.real_cells / kept_per_block)
            step.macro_tiles.setdefault(flat, []).append((gi, gj))
        if not step.macro_tiles:
            continue
        step.passes = max(group_slice.values())
        step.pass_sum = sum(group_slice.values())
        step.conversions = sum(
            sl * sum(group_rows[g].values()) for g, sl in group_slice.items()
        )
        if rc == t_r - 1:
            wb_values = sum(
                sl * sum(group_cols[g].values()) for g, sl in group_slice.items()
            )
            step.writeback_bytes = math.ceil(wb_values * fb / 8)
        steps.append(step)
    rec.effective_macs = sum(s.mac_work for s in steps)
    return rec, steps


def _resolve_tile(mapping: MappingSpec, shape: tuple[int, int], hw: HardwareSpec):
    mr, mc = hw.macro_array
    if mapping.tile_dims == "auto":
        return max(1, min(shape[0], mr)), max(1, min(shape[1], mc))
    tr, tc = mapping.tile_dims
    if tr > mr or tc > mc:
        raise MappingError(f"tile {mapping.tile_dims} larger than macro array {hw.macro_array}")
    return tr, tc


def utilization(schedule: Schedule, hw: HardwareSpec) -> float:
    """Occupied cell-cycles over available cell-cycles, compute steps only.

    Occupied counts cells carrying compressed data; padding zeros occupy
    hardware but do no work, which is exactly the fragmentation penalty.
    """
    fb = schedule.feature_bits
    total_cells = hw.n_macros * hw.macro_array[0] * hw.macro_array[1]
    used = 0
    available = 0
    for step in schedule.steps:
        if step.unit_class != "cim_macro":
            continue
        cycles = fb * step.passes
        used += step.real_cells * cycles
        available += total_cells * cycles
    return used / available if available else 0.0
