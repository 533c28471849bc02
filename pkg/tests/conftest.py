import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cimcost import BlockPattern, SparsitySpec, parse_hardware


def make_hw(
    macro=(256, 64),
    subarray=(64, 64),
    organization=(1,),
    bandwidth=64,
    banking="ping_pong",
    writeback_overlap=True,
    input_sparsity=False,
    broadcast=None,
    pp_width=32,
):
    doc = {
        "name": "test_hw",
        "macro": {"array": list(macro), "subarray": list(subarray)},
        "organization": list(organization),
        "units": [
            {"name": "subarray", "kind": "cim_subarray", "energy_per_access": 4.0, "static_power": 0.002},
            {"name": "adder_tree", "kind": "adder_tree", "energy_per_access": 1.2, "static_power": 0.001},
            {"name": "shift_adder", "kind": "shift_adder", "energy_per_access": 0.25, "static_power": 0.0005},
            {"name": "accumulator", "kind": "accumulator", "energy_per_access": 0.15, "static_power": 0.0005},
            {"name": "preprocess", "kind": "preprocess", "energy_per_access": 0.4, "static_power": 0.01, "location": "outside"},
            {"name": "postprocess", "kind": "postprocess", "energy_per_access": 0.6, "static_power": 0.01, "location": "outside", "dims": [pp_width]},
        ],
        "buffers": [
            {
                "name": "gbuf",
                "kind": "global_buffer",
                "capacity": 64 * 1024 * 1024,
                "width": 512,
                "bandwidth": bandwidth,
                "energy_per_read": 10.0,
                "energy_per_write": 11.0,
                "static_power": 0.5,
                "banking": banking,
            }
        ],
        "options": {
            "weight_bits": 8,
            "feature_bits": 8,
            "input_sparsity": input_sparsity,
            "writeback_overlap": writeback_overlap,
        },
    }
    if broadcast is not None:
        doc["options"]["broadcast_width"] = broadcast
    return parse_hardware(doc)


def _divisors(n, lo=1, hi=None):
    hi = hi or n
    return [d for d in range(lo, min(n, hi) + 1) if n % d == 0]


RATIO_POOL = [0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9]


def random_valid_spec(rng, dims):
    """Random spec accepted by validate_spec for the given matrix dims."""
    M, N = dims
    style = rng.choice(["full", "intra", "hybrid"])
    ratio = RATIO_POOL[rng.integers(0, len(RATIO_POOL))]
    if style == "full":
        m = int(rng.choice(_divisors(M, hi=8)))
        n = int(rng.choice(_divisors(N, hi=8)))
        if m * n <= 1:
            n = int(max(d for d in _divisors(N, hi=8)))
            if m * n <= 1:
                m = int(max(d for d in _divisors(M, hi=8)))
        return SparsitySpec((BlockPattern("full_block", (m, n), ratio),))
    if style == "intra":
        m = int(rng.choice([d for d in _divisors(M, lo=2, hi=8)]))
        return SparsitySpec((BlockPattern("intra_block", (m, 1), ratio),))
    mi = int(rng.choice([d for d in _divisors(M, lo=2, hi=4)]))
    mult = [k for k in (1, 2, 4) if (mi * k) and M % (mi * k) == 0]
    mf = mi * int(rng.choice(mult))
    nf = int(rng.choice(_divisors(N, hi=16)))
    intra = BlockPattern("intra_block", (mi, 1), RATIO_POOL[rng.integers(0, len(RATIO_POOL))])
    full = BlockPattern("full_block", (mf, nf), ratio)
    if rng.integers(0, 2):
        return SparsitySpec((intra, full))
    return SparsitySpec((full, intra))


DIMS_POOL = [(16, 16), (32, 32), (64, 64), (32, 64), (64, 32), (16, 64)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
