"""Architecture description: units, organization, energies, sparsity support.

A spec names a macro array (rows x cols of memory cells), its subarray
granularity, and a variable-length organization list describing how macros
tile the system. Compute and memory units carry per-access energies (pJ)
and static power (pJ/cycle); instance counts are inferred from the array
geometry so descriptions stay small.

Provisioning policy for inferred counts, per macro:
  cim_subarray   (macro_rows/sub_rows) * (macro_cols/sub_cols)
  adder_tree     one per subarray
  shift_adder    one per macro column
  accumulator    one per macro output column
  index_mux      one per macro array row (only with intra-block sparsity)
Units located outside the macro default to a single instance. Totals scale
by the organization product for in-macro units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import yaml

from .sparsity import SparseMask, SparsitySpec

COMPUTE_KINDS = (
    "cim_subarray",
    "adder_tree",
    "shift_adder",
    "accumulator",
    "preprocess",
    "postprocess",
    "index_mux",
)
MEMORY_KINDS = ("global_buffer", "local_buffer", "index_memory")
BUFFER_ROLES = ("weights", "features", "outputs")

# Illustrative per-access energies (pJ) and static powers (pJ/cycle) used
# when a description omits them. Placeholder values for preliminary
# exploration only; they are not calibrated against any physical design.
PLACEHOLDER_ENERGY = {
    "cim_subarray": {"energy_per_access": 4.0, "static_power": 0.002},
    "adder_tree": {"energy_per_access": 1.2, "static_power": 0.001},
    "shift_adder": {"energy_per_access": 0.25, "static_power": 0.0005},
    "accumulator": {"energy_per_access": 0.15, "static_power": 0.0005},
    "preprocess": {"energy_per_access": 0.4, "static_power": 0.01},
    "postprocess": {"energy_per_access": 0.6, "static_power": 0.01},
    "index_mux": {"energy_per_access": 0.02, "static_power": 0.0001},
    "zero_detect": {"energy_per_access": 0.05, "static_power": 0.002},
    "global_buffer": {"energy_per_read": 10.0, "energy_per_write": 11.0, "static_power": 0.5},
    "local_buffer": {"energy_per_read": 2.0, "energy_per_write": 2.2, "static_power": 0.1},
    "index_memory": {"energy_per_read": 0.8, "energy_per_write": 0.9, "static_power": 0.05},
}


class HardwareError(ValueError):
    """Malformed hardware description."""


@dataclass
class ComputeUnit:
    name: str
    kind: str
    energy_per_access: float
    static_power: float = 0.0
    dims: tuple[int, ...] | None = None
    location: str = "in_macro"
    count: int | None = None  # resolved by infer_unit_counts

    def __post_init__(self):
        if self.kind not in COMPUTE_KINDS:
            raise HardwareError(f"unit {self.name!r}: unknown kind {self.kind!r}")
        if self.energy_per_access < 0 or self.static_power < 0:
            raise HardwareError(f"unit {self.name!r}: energies must be >= 0")
        if self.location not in ("in_macro", "outside"):
            raise HardwareError(f"unit {self.name!r}: bad location {self.location!r}")


@dataclass
class MemoryUnit:
    name: str
    kind: str
    capacity_bits: int
    width_bits: int
    energy_per_read: float
    energy_per_write: float
    static_power: float = 0.0
    banking: str = "single"
    bandwidth: float | None = None  # bytes per cycle; defaults to width/8
    stores: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in MEMORY_KINDS:
            raise HardwareError(f"memory {self.name!r}: unknown kind {self.kind!r}")
        if self.capacity_bits < self.width_bits:
            raise HardwareError(
                f"memory {self.name!r}: capacity {self.capacity_bits} below width "
                f"{self.width_bits}"
            )
        if self.energy_per_read < 0 or self.energy_per_write < 0 or self.static_power < 0:
            raise HardwareError(f"memory {self.name!r}: energies must be >= 0")
        if self.banking not in ("single", "ping_pong"):
            raise HardwareError(f"memory {self.name!r}: bad banking {self.banking!r}")
        for role in self.stores:
            if role not in BUFFER_ROLES:
                raise HardwareError(f"memory {self.name!r}: unknown role {role!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise HardwareError(f"memory {self.name!r}: bandwidth must be positive")


@dataclass
class HardwareSpec:
    name: str
    macro_array: tuple[int, int]
    subarray: tuple[int, int]
    organization: tuple[int, ...]
    compute_units: list[ComputeUnit]
    memory_units: list[MemoryUnit]
    weight_bits: int = 8
    feature_bits: int = 8
    input_sparsity_enabled: bool = False
    writeback_overlap: bool = True
    broadcast_width: int | None = None
    assumptions: list[str] = field(default_factory=list)

    @property
    def n_macros(self) -> int:
        return math.prod(self.organization)

    @property
    def subarrays_per_macro(self) -> int:
        return (self.macro_array[0] // self.subarray[0]) * (
            self.macro_array[1] // self.subarray[1]
        )

    @property
    def alignment_dims(self) -> tuple[int, int, int]:
        """(array_rows, array_cols, broadcast_width) for sparsity validation."""
        return (self.macro_array[0], self.macro_array[1], self.broadcast_width)

    def unit(self, kind: str) -> ComputeUnit | None:
        for u in self.compute_units:
            if u.kind == kind:
                return u
        return None

    def unit_by_name(self, name: str) -> ComputeUnit | None:
        for u in self.compute_units:
            if u.name == name:
                return u
        return None

    def memory(self, kind: str) -> MemoryUnit | None:
        for m in self.memory_units:
            if m.kind == kind:
                return m
        return None

    def buffer_for(self, role: str) -> MemoryUnit:
        for m in self.memory_units:
            if role in m.stores:
                return m
        raise HardwareError(f"no buffer stores {role!r}")


def parse_hardware(text: str | dict) -> HardwareSpec:
    """Parse and resolve a hardware description (YAML text or dict).

    Missing unit energies fall back to the placeholder preset and missing
    buffer bandwidths default to one access per cycle (width/8 bytes);
    every substitution is recorded in the spec's assumptions list.
    """
    doc = yaml.safe_load(text) if isinstance(text, str) else text
    if not isinstance(doc, dict) or "macro" not in doc:
        raise HardwareError("hardware document must contain a 'macro' section")
    assumptions: list[str] = []
    macro = doc["macro"]
    macro_array = tuple(int(v) for v in macro["array"])
    subarray = tuple(int(v) for v in macro["subarray"])
    if len(macro_array) != 2 or len(subarray) != 2:
        raise HardwareError("macro array and subarray must be 2-D")
    if macro_array[0] % subarray[0] or macro_array[1] % subarray[1]:
        raise HardwareError(
            f"subarray {subarray} does not divide macro array {macro_array}"
        )
    organization = tuple(int(v) for v in doc.get("organization", [1]))
    if not organization or any(v < 1 for v in organization):
        raise HardwareError("organization extents must be >= 1")

    units: list[ComputeUnit] = []
    for entry in doc.get("units", []):
        kind = entry.get("kind")
        defaults = PLACEHOLDER_ENERGY.get(kind, {})
        energy = entry.get("energy_per_access")
        static = entry.get("static_power")
        if energy is None:
            energy = defaults.get("energy_per_access", 0.0)
            assumptions.append(
                f"unit {entry.get('name')}: energy_per_access defaulted to {energy} pJ (placeholder preset)"
            )
        if static is None:
            static = defaults.get("static_power", 0.0)
            assumptions.append(
                f"unit {entry.get('name')}: static_power defaulted to {static} pJ/cycle (placeholder preset)"
            )
        dims = entry.get("dims")
        units.append(
            ComputeUnit(
                name=str(entry["name"]),
                kind=str(kind),
                energy_per_access=float(energy),
                static_power=float(static),
                dims=tuple(dims) if dims is not None else None,
                location=entry.get("location", "in_macro"),
                count=entry.get("count"),
            )
        )

    memories: list[MemoryUnit] = []
    for entry in doc.get("buffers", []):
        kind = entry.get("kind", "global_buffer")
        defaults = PLACEHOLDER_ENERGY.get(kind, {})
        read = entry.get("energy_per_read")
        write = entry.get("energy_per_write")
        static = entry.get("static_power")
        if read is None:
            read = defaults.get("energy_per_read", 0.0)
            assumptions.append(
                f"buffer {entry.get('name')}: energy_per_read defaulted to {read} pJ (placeholder preset)"
            )
        if write is None:
            write = defaults.get("energy_per_write", 0.0)
            assumptions.append(
                f"buffer {entry.get('name')}: energy_per_write defaulted to {write} pJ (placeholder preset)"
            )
        if static is None:
            static = defaults.get("static_power", 0.0)
        width = int(entry["width"])
        bandwidth = entry.get("bandwidth")
        if bandwidth is None:
            bandwidth = width / 8
            assumptions.append(
                f"buffer {entry.get('name')}: bandwidth defaulted to {bandwidth} bytes/cycle "
                "(one access per cycle; not disclosed by the description)"
            )
        memories.append(
            MemoryUnit(
                name=str(entry["name"]),
                kind=str(kind),
                capacity_bits=int(entry["capacity"]),
                width_bits=width,
                energy_per_read=float(read),
                energy_per_write=float(write),
                static_power=float(static),
                banking=entry.get("banking", "single"),
                bandwidth=float(bandwidth),
                stores=tuple(entry.get("stores", ())),
            )
        )

    options = doc.get("options", {}) or {}
    broadcast = options.get("broadcast_width")
    if broadcast is None:
        broadcast = subarray[0]
        assumptions.append(
            f"broadcast_width defaulted to subarray rows ({broadcast})"
        )

    spec = HardwareSpec(
        name=str(doc.get("name", "hardware")),
        macro_array=macro_array,
        subarray=subarray,
        organization=organization,
        compute_units=units,
        memory_units=memories,
        weight_bits=int(options.get("weight_bits", 8)),
        feature_bits=int(options.get("feature_bits", 8)),
        input_sparsity_enabled=bool(options.get("input_sparsity", False)),
        writeback_overlap=bool(options.get("writeback_overlap", True)),
        broadcast_width=int(broadcast),
        assumptions=assumptions,
    )
    _check_roles(spec)
    return infer_unit_counts(spec)


def _check_roles(spec: HardwareSpec):
    if not spec.memory_units:
        raise HardwareError("hardware needs at least one buffer")
    covered = {r for m in spec.memory_units for r in m.stores}
    missing = [r for r in BUFFER_ROLES if r not in covered]
    if missing:
        # A single undesignated global buffer serves every role.
        globals_ = [m for m in spec.memory_units if m.kind == "global_buffer"]
        if len(globals_) == 1 and not globals_[0].stores:
            globals_[0].stores = BUFFER_ROLES
            spec.assumptions.append(
                f"buffer {globals_[0].name}: stores weights, features and outputs (roles not given)"
            )
        else:
            raise HardwareError(f"no buffer stores roles: {missing}")


def infer_unit_counts(spec: HardwareSpec) -> HardwareSpec:
    """Resolve instance counts per the provisioning policy (in place)."""
    per_macro = {
        "cim_subarray": spec.subarrays_per_macro,
        "adder_tree": spec.subarrays_per_macro,
        "shift_adder": spec.macro_array[1],
        "accumulator": spec.macro_array[1],
        "index_mux": spec.macro_array[0],
    }
    for u in spec.compute_units:
        if u.count is not None:
            continue
        if u.location == "in_macro":
            u.count = per_macro.get(u.kind, 1) * spec.n_macros
        else:
            u.count = 1
    return spec


@dataclass
class SparsitySummary:
    """What the workload's sparsity requires from the hardware."""

    has_weight_sparsity: bool = False
    has_intra: bool = False
    intra_ways: int = 1  # inputs broadcast per array row
    needs_extra_accumulators: bool = False
    max_index_bits: int = 0
    input_sparsity: bool = False


def infer_sparsity_support(spec: HardwareSpec, summary: SparsitySummary) -> HardwareSpec:
    """Return a copy of the spec with the required support units added.

    Index memory is sized by the largest per-layer index footprint; mux
    units appear only with intra-block patterns; a second accumulator bank
    appears for misaligned partial sums; zero detection attaches to the
    pre-processing path when input sparsity is enabled. A dense workload
    with input sparsity off adds nothing.
    """
    out = replace(
        spec,
        compute_units=[replace(u) for u in spec.compute_units],
        memory_units=[replace(m) for m in spec.memory_units],
        assumptions=list(spec.assumptions),
    )
    if summary.has_weight_sparsity:
        imem = out.memory("index_memory")
        capacity = max(summary.max_index_bits, 1)
        if imem is None:
            d = PLACEHOLDER_ENERGY["index_memory"]
            width = 32
            out.memory_units.append(
                MemoryUnit(
                    name="index_memory",
                    kind="index_memory",
                    capacity_bits=max(capacity, width),
                    width_bits=width,
                    energy_per_read=d["energy_per_read"],
                    energy_per_write=d["energy_per_write"],
                    static_power=d["static_power"],
                    bandwidth=width / 8,
                )
            )
            out.assumptions.append(
                "index_memory added with placeholder energies (not described)"
            )
        elif imem.capacity_bits < capacity:
            imem.capacity_bits = capacity
    if summary.has_intra:
        if out.unit("index_mux") is None:
            d = PLACEHOLDER_ENERGY["index_mux"]
            out.compute_units.append(
                ComputeUnit(
                    name="index_mux",
                    kind="index_mux",
                    energy_per_access=d["energy_per_access"],
                    static_power=d["static_power"],
                    dims=(summary.intra_ways,),
                    location="in_macro",
                )
            )
            out.assumptions.append(
                f"index_mux added ({summary.intra_ways}-way select per array row, "
                "placeholder energies)"
            )
        else:
            out.unit("index_mux").dims = (summary.intra_ways,)
    if summary.needs_extra_accumulators:
        base = out.unit("accumulator")
        if base is not None and out.unit_by_name("sparsity_accumulator") is None:
            out.compute_units.append(
                ComputeUnit(
                    name="sparsity_accumulator",
                    kind="accumulator",
                    energy_per_access=base.energy_per_access,
                    static_power=base.static_power,
                    location=base.location,
                )
            )
    if summary.input_sparsity:
        if out.unit_by_name("zero_detect") is None:
            d = PLACEHOLDER_ENERGY["zero_detect"]
            pre = out.unit("preprocess")
            out.compute_units.append(
                ComputeUnit(
                    name="zero_detect",
                    kind="preprocess",
                    energy_per_access=d["energy_per_access"],
                    static_power=d["static_power"],
                    location=pre.location if pre else "outside",
                    count=pre.count if pre else None,
                )
            )
    return infer_unit_counts(out)


def index_storage(
    mask: SparseMask,
    spec: SparsitySpec,
    block_index_bits: int,
    elem_index_bits: int = 0,
) -> int:
    """Index bits a mask needs: block entries plus per-block element entries.

    The element term is zero when no intra pattern applies.
    """
    bits = len(mask.block_index) * block_index_bits
    if mask.elem_index:
        bits += sum(len(v) for v in mask.elem_index.values()) * elem_index_bits
    return bits


def default_index_widths(dims: tuple[int, int], spec: SparsitySpec) -> tuple[int, int]:
    """Per-entry index widths: ceil(log2(total finest blocks)) and
    ceil(log2(m*n)) of the intra pattern."""
    fm, fn = spec.finest_block
    total = (dims[0] // fm) * (dims[1] // fn)
    block_bits = math.ceil(math.log2(total)) if total > 1 else 0
    elem_bits = 0
    for p in spec.intra_patterns:
        m, n = p.block_size
        elem_bits = max(elem_bits, math.ceil(math.log2(m * n)))
    return block_bits, elem_bits
