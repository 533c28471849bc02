"""Cost modeling for block-sparse DNN workloads on digital SRAM
compute-in-memory systems: pruning, mapping, and cycle/energy simulation."""

from .workload import (
    OpNode,
    WeightTensor,
    WorkloadGraph,
    WorkloadError,
    mac_count,
    parse_workload,
    reshape_weight,
    reshaped_dims,
    row_index,
)
from .sparsity import (
    BlockPattern,
    Diagnostic,
    SparseMask,
    SparsitySpec,
    SparsityError,
    ValidationReport,
    bind_spec,
    build_mask,
    default_pattern_set,
    dense_mask,
    nonzero_block_count,
    nonzero_elem_count,
    parse_sparsity,
    validate_spec,
    verify_mask,
)
from .pruner import (
    L1,
    L2,
    block_loss,
    intra_loss,
    prune_composite,
    prune_fullblock,
    prune_intrablock,
    random_mask,
)
from .hardware import (
    ComputeUnit,
    HardwareError,
    HardwareSpec,
    MemoryUnit,
    SparsitySummary,
    default_index_widths,
    index_storage,
    infer_sparsity_support,
    infer_unit_counts,
    parse_hardware,
)
from .mapper import (
    CompressedMatrix,
    Loop,
    MappingError,
    MappingSpec,
    RearrangeSpec,
    Schedule,
    ScheduleStep,
    build_schedule,
    compress,
    decompress,
    parse_mapping,
    rearrange,
    tile,
    utilization,
    validate_mapping,
)
from .profiler import (
    ActivationSet,
    ProfileError,
    bit_planes,
    skippable_ratio,
    synth_activations,
)
from .simulator import (
    AccessCounts,
    EnergyBreakdown,
    LatencyResult,
    SimulationError,
    SimulationResult,
    count_accesses,
    pipeline_overlap,
    resolve_masks,
    simulate,
    step_latencies,
    total_energy,
    total_latency,
)
from .tensorio import read_tensors, write_tensors

__version__ = "0.1.0"
