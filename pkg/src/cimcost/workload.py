"""DNN workloads as DAGs of dimensioned operations.

A workload is a list of nodes (conv / fc / depthwise_conv / elementwise /
pool / activation) connected by input edges. Matrix-vector nodes carry the
extents needed to reshape their weights into the two-dimensional matrices
that get mapped onto memory arrays; the remaining node kinds carry only an
element count and are charged to the post-processing unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

MVM_KINDS = ("conv", "fc", "depthwise_conv")
OTHER_KINDS = ("elementwise", "pool", "activation")
NODE_KINDS = MVM_KINDS + OTHER_KINDS

CONV_DIMS = ("C_out", "C_in", "K_h", "K_w", "H_out", "W_out")
DEPTHWISE_DIMS = ("C_in", "K_h", "K_w", "H_out", "W_out")
FC_DIMS = ("M_in", "M_out")

# Row dims of the reshaped matrix, per kind. Conv rows flatten the input
# side; columns are always the output side.
CONV_ROW_DIMS = ("C_in", "K_h", "K_w")
DEPTHWISE_ROW_DIMS = ("K_h", "K_w")


class WorkloadError(ValueError):
    """Malformed workload description or illegal node operation."""


@dataclass(frozen=True)
class OpNode:
    id: str
    kind: str
    dims: dict[str, int]
    inputs: tuple[str, ...] = ()
    weight_ref: str | None = None

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise WorkloadError(f"node {self.id!r}: unknown kind {self.kind!r}")
        required = {
            "conv": CONV_DIMS,
            "depthwise_conv": DEPTHWISE_DIMS,
            "fc": FC_DIMS,
        }.get(self.kind, ("count",))
        for name in required:
            if name not in self.dims:
                raise WorkloadError(
                    f"node {self.id!r}: missing extent {name!r} for kind {self.kind!r}"
                )
        for name, extent in self.dims.items():
            if not isinstance(extent, int) or extent < 1:
                raise WorkloadError(
                    f"node {self.id!r}: extent {name}={extent!r} must be an integer >= 1"
                )

    @property
    def is_mvm(self) -> bool:
        return self.kind in MVM_KINDS

    @property
    def feature_count(self) -> int:
        """Feature vectors streamed through the stationary weights."""
        if self.kind in ("conv", "depthwise_conv"):
            return self.dims["H_out"] * self.dims["W_out"]
        if self.kind == "fc":
            return 1
        raise WorkloadError(f"node {self.id!r}: kind {self.kind!r} has no feature count")


@dataclass
class WeightTensor:
    """Weight payload in its natural layout.

    Shape conventions: conv (C_out, C_in, K_h, K_w); depthwise (C_in, K_h, K_w);
    fc (M_in, M_out). Payload may be omitted for latency-only runs.
    """

    id: str
    shape: tuple[int, ...]
    element_bitwidth: int = 8
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.element_bitwidth not in (4, 8, 16):
            raise WorkloadError(
                f"tensor {self.id!r}: bitwidth must be 4, 8 or 16, got {self.element_bitwidth}"
            )
        self.shape = tuple(int(s) for s in self.shape)
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=np.float64)
            if self.values.size != math.prod(self.shape):
                raise WorkloadError(
                    f"tensor {self.id!r}: payload length {self.values.size} does not "
                    f"match shape {self.shape}"
                )
            self.values = self.values.reshape(self.shape)


@dataclass
class WorkloadGraph:
    name: str
    nodes: dict[str, OpNode]
    topo_order: tuple[str, ...]
    weights: dict[str, WeightTensor] = field(default_factory=dict)

    def node(self, node_id: str) -> OpNode:
        return self.nodes[node_id]

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(src, n.id) for n in self.nodes.values() for src in n.inputs]

    def mvm_nodes(self) -> list[OpNode]:
        return [self.nodes[i] for i in self.topo_order if self.nodes[i].is_mvm]

    def fingerprint(self) -> str:
        """Stable identity used to refuse cross-workload comparisons."""
        parts = [self.name]
        for nid in self.topo_order:
            n = self.nodes[nid]
            dims = ",".join(f"{k}={n.dims[k]}" for k in sorted(n.dims))
            parts.append(f"{n.id}:{n.kind}:{dims}:{'|'.join(n.inputs)}")
        return "/".join(parts)


def _toposort(nodes: dict[str, OpNode]) -> tuple[str, ...]:
    # Kahn's algorithm with listing-order tie break so chains keep their
    # declared order.
    indeg = {nid: 0 for nid in nodes}
    out_edges: dict[str, list[str]] = {nid: [] for nid in nodes}
    for n in nodes.values():
        for src in n.inputs:
            out_edges[src].append(n.id)
            indeg[n.id] += 1
    order: list[str] = []
    ready = [nid for nid in nodes if indeg[nid] == 0]
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        for dst in out_edges[nid]:
            indeg[dst] -= 1
            if indeg[dst] == 0:
                ready.append(dst)
    if len(order) != len(nodes):
        cyclic = sorted(nid for nid, d in indeg.items() if d > 0)
        raise WorkloadError(f"cycle detected among nodes {cyclic}")
    return tuple(order)


def parse_workload(text: str | dict) -> WorkloadGraph:
    """Parse a workload description (YAML text or pre-parsed dict) into a DAG.

    Raises WorkloadError on cycles, dangling input ids, or missing extents.
    """
    doc = yaml.safe_load(text) if isinstance(text, str) else text
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise WorkloadError("workload document must contain a 'nodes' list")
    nodes: dict[str, OpNode] = {}
    for entry in doc["nodes"]:
        node = OpNode(
            id=str(entry["id"]),
            kind=str(entry["kind"]),
            dims={str(k): int(v) for k, v in (entry.get("dims") or {}).items()},
            inputs=tuple(str(i) for i in entry.get("inputs") or ()),
            weight_ref=entry.get("weight"),
        )
        if node.id in nodes:
            raise WorkloadError(f"duplicate node id {node.id!r}")
        nodes[node.id] = node
    for n in nodes.values():
        for src in n.inputs:
            if src not in nodes:
                raise WorkloadError(f"node {n.id!r}: dangling input id {src!r}")
    order = _toposort(nodes)
    return WorkloadGraph(name=str(doc.get("name", "workload")), nodes=nodes, topo_order=order)


def _row_dims(node: OpNode, flatten_order) -> tuple[str, ...]:
    """Validated row-dimension order for the reshape of a given node."""
    if node.kind == "fc":
        return ("M_in",)
    row_dims = CONV_ROW_DIMS if node.kind == "conv" else DEPTHWISE_ROW_DIMS
    for name in flatten_order:
        if name not in node.dims:
            raise WorkloadError(
                f"node {node.id!r}: flatten order names extent {name!r} the node lacks"
            )
    ordered = tuple(d for d in flatten_order if d in row_dims)
    if set(ordered) != set(row_dims):
        raise WorkloadError(
            f"node {node.id!r}: flatten order {tuple(flatten_order)} must cover {row_dims}"
        )
    return ordered


def reshaped_dims(node: OpNode, flatten_order) -> tuple[int, int]:
    """(rows, cols) of the two-dimensional weight matrix for an MVM node.

    Rows flatten the input-side extents in `flatten_order`; columns are the
    output side (C_out for conv, M_out for fc, C_in for depthwise, which is
    reshaped per channel into independent K_h*K_w x 1 matrices).
    """
    if not node.is_mvm:
        raise WorkloadError(f"node {node.id!r}: kind {node.kind!r} has no weight matrix")
    if node.kind == "fc":
        return node.dims["M_in"], node.dims["M_out"]
    ordered = _row_dims(node, flatten_order)
    rows = math.prod(node.dims[d] for d in ordered)
    cols = node.dims["C_out"] if node.kind == "conv" else node.dims["C_in"]
    return rows, cols


def row_index(node: OpNode, flatten_order, coords: dict[str, int]) -> int:
    """Flattened row of a weight element with the given per-dim coordinates."""
    ordered = _row_dims(node, flatten_order)
    idx = 0
    for d in ordered:
        c = coords[d]
        if not 0 <= c < node.dims[d]:
            raise WorkloadError(f"coordinate {d}={c} out of range for node {node.id!r}")
        idx = idx * node.dims[d] + c
    return idx


def reshape_weight(tensor: WeightTensor, node: OpNode, flatten_order) -> np.ndarray:
    """Weight payload reshaped to the (rows, cols) matrix for mapping."""
    if tensor.values is None:
        raise WorkloadError(f"tensor {tensor.id!r} has no payload to reshape")
    rows, cols = reshaped_dims(node, flatten_order)
    w = tensor.values
    if node.kind == "fc":
        return w.reshape(rows, cols)
    if node.kind == "conv":
        natural = ("C_out",) + CONV_ROW_DIMS  # payload layout
        ordered = _row_dims(node, flatten_order)
        perm = tuple(natural.index(d) for d in ordered) + (0,)
    else:  # depthwise: payload (C_in, K_h, K_w)
        natural = ("C_in",) + DEPTHWISE_ROW_DIMS
        ordered = _row_dims(node, flatten_order)
        perm = tuple(natural.index(d) for d in ordered) + (0,)
    return np.transpose(w, perm).reshape(rows, cols)


def mac_count(node: OpNode) -> int:
    """Multiply-accumulate count of one MVM node (dense baseline)."""
    d = node.dims
    if node.kind == "conv":
        return d["C_out"] * d["C_in"] * d["K_h"] * d["K_w"] * d["H_out"] * d["W_out"]
    if node.kind == "fc":
        return d["M_in"] * d["M_out"]
    if node.kind == "depthwise_conv":
        return d["C_in"] * d["K_h"] * d["K_w"] * d["H_out"] * d["W_out"]
    raise WorkloadError(f"node {node.id!r}: no MAC count for kind {node.kind!r}")
