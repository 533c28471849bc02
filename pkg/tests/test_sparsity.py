import math
from fractions import Fraction

import numpy as np
import pytest

from cimcost import (
    BlockPattern,
    SparsityError,
    SparsitySpec,
    bind_spec,
    build_mask,
    default_pattern_set,
    nonzero_block_count,
    nonzero_elem_count,
    parse_sparsity,
    prune_composite,
    random_mask,
    validate_spec,
    verify_mask,
)
from conftest import DIMS_POOL, random_valid_spec

HW_DIMS = (1024, 32, 16)  # array rows, array cols, broadcast width


def full(block, ratio):
    return BlockPattern("full_block", block, ratio)


def intra(block, ratio, patterns=None):
    return BlockPattern("intra_block", block, ratio, patterns)


# --- validate_spec -----------------------------------------------------------


def test_hybrid_one_of_two_with_row_block_accepted():
    spec = SparsitySpec((intra((2, 1), 0.5), full((2, 16), 0.6)))
    report = validate_spec(spec, (64, 64), HW_DIMS)
    assert report.ok


def test_intra_must_be_column_wise():
    spec = SparsitySpec((intra((2, 2), 0.5),))
    report = validate_spec(spec, (64, 64), HW_DIMS)
    assert not report.ok
    assert any("column-wise" in d.message for d in report.errors)


def test_three_patterns_rejected():
    spec = SparsitySpec((intra((2, 1), 0.5), full((2, 16), 0.5), full((4, 16), 0.5)))
    report = validate_spec(spec, (64, 64), HW_DIMS)
    assert any("maximum of two" in d.message for d in report.errors)


def test_nondividing_block_rejected():
    report = validate_spec(SparsitySpec((full((3, 1), 0.5),)), (64, 64))
    assert not report.ok


def test_trivial_block_rejected():
    report = validate_spec(SparsitySpec((full((1, 1), 0.5),)), (64, 64))
    assert any(d.code == "block.trivial" for d in report.errors)


def test_composition_multiple_rule():
    bad = SparsitySpec((intra((2, 1), 0.5), full((3, 16), 0.5)))
    report = validate_spec(bad, (96, 64))
    assert any(d.code == "composition.multiple" for d in report.errors)


def test_misalignment_warns_but_accepts():
    spec = SparsitySpec((full((3, 5), 0.5),))
    report = validate_spec(spec, (9, 15), HW_DIMS)
    assert report.ok
    assert len(report.warnings) >= 1


def test_aligned_sizes_do_not_warn():
    spec = SparsitySpec((full((1, 16), 0.5),))
    report = validate_spec(spec, (64, 64), HW_DIMS)
    assert report.ok and not report.warnings


# --- counting formulas -------------------------------------------------------


def test_surviving_block_counts():
    assert nonzero_block_count(full((2, 2), 0.25), (8, 8)) == 12
    assert nonzero_block_count(full((2, 2), 0.5), (4, 4)) == 2
    assert nonzero_block_count(full((2, 1), 0.9), (4, 2)) == 0


def test_surviving_block_count_needs_divisibility():
    with pytest.raises(SparsityError):
        nonzero_block_count(full((3, 1), 0.5), (8, 8))


def test_surviving_elem_counts():
    assert nonzero_elem_count(intra((2, 1), 0.5)) == 1
    assert nonzero_elem_count(intra((4, 1), 0.75)) == 1
    assert nonzero_elem_count(intra((4, 1), 0.5)) == 2


def test_decimal_ratios_floor_exactly():
    # (1 - 0.9) * 10 must floor to 1, not to 0 through binary rounding
    assert nonzero_block_count(full((1, 2), 0.9), (1, 20)) == 1
    assert nonzero_elem_count(intra((10, 1), 0.9)) == 1


def test_counts_monotone_in_ratio():
    grid = [Fraction(k, 20) for k in range(1, 20)]
    prev_blocks, prev_elems = None, None
    for r in grid:
        blocks = nonzero_block_count(full((2, 2), r), (16, 16))
        elems = nonzero_elem_count(intra((8, 1), r))
        if prev_blocks is not None:
            assert blocks <= prev_blocks
            assert elems <= prev_elems
        prev_blocks, prev_elems = blocks, elems


# --- default pattern sets ----------------------------------------------------


def test_default_pattern_set_sizes():
    assert len(default_pattern_set((2, 1), 0.5)) == 2
    assert len(default_pattern_set((4, 1), 0.75)) == 4
    assert len(default_pattern_set((4, 1), 0.5)) == 6


def test_default_pattern_set_is_lexicographic():
    masks = default_pattern_set((2, 1), 0.5)
    assert masks == ((0, 1), (1, 0))


def test_default_pattern_set_cap():
    with pytest.raises(SparsityError, match="explicit pattern_set"):
        default_pattern_set((64, 1), 0.5, cap=4096)


def test_default_pattern_set_matches_binomial(rng):
    for _ in range(30):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(1, 4))
        if m * n <= 1:
            continue
        r = [0.25, 0.5, 0.75][rng.integers(0, 3)]
        phi = math.floor((1 - Fraction(str(r))) * m * n)
        assert len(default_pattern_set((m, n), r)) == math.comb(m * n, phi)


def test_pattern_set_invariants_enforced():
    with pytest.raises(SparsityError, match="keeps"):
        intra((2, 1), 0.5, patterns=((1, 1),))
    with pytest.raises(SparsityError, match="distinct"):
        intra((2, 1), 0.5, patterns=((1, 0), (1, 0)))


# --- verify_mask -------------------------------------------------------------


def test_verify_roundtrip_from_pruner(rng):
    spec = SparsitySpec((intra((2, 1), 0.5), full((2, 16), 0.6)))
    mask = prune_composite(rng.normal(size=(64, 64)), spec, "l1")
    assert verify_mask(mask, spec)


def test_verify_rejects_stray_one():
    spec = SparsitySpec((full((2, 2), 0.5),))
    mask = random_mask(spec, (8, 8), seed=1)
    bits = mask.bits.copy()
    pruned = np.argwhere(bits == 0)
    i, j = pruned[0]
    bits[i, j] = 1  # stray one inside a pruned block
    bad = build_mask(mask.tensor_id, mask.bits, spec)  # metadata from old bits
    bad.bits = bits
    assert not verify_mask(bad, spec)


def test_verify_rejects_unlisted_pattern():
    # keep-top pattern set, but the mask keeps the bottom element
    spec = SparsitySpec((intra((4, 1), 0.75, patterns=((1, 0, 0, 0),)),))
    bits = np.zeros((4, 1), dtype=np.uint8)
    bits[3, 0] = 1
    mask = build_mask("t", bits, spec)
    assert not verify_mask(mask, spec)
    good = np.zeros((4, 1), dtype=np.uint8)
    good[0, 0] = 1
    assert verify_mask(build_mask("t", good, spec), spec)


def test_verify_counts_full_budget():
    spec = SparsitySpec((full((2, 2), 0.5),))
    bits = np.ones((4, 4), dtype=np.uint8)  # four live blocks, budget is 2
    mask = build_mask("t", bits, spec)
    assert not verify_mask(mask, spec)


def test_roundtrip_over_randomized_specs(rng):
    for trial in range(120):
        dims = DIMS_POOL[rng.integers(0, len(DIMS_POOL))]
        spec = random_valid_spec(rng, dims)
        assert validate_spec(spec, dims).ok
        m1 = random_mask(spec, dims, seed=int(rng.integers(0, 2**31)))
        assert verify_mask(m1, spec)
        m2 = prune_composite(rng.normal(size=dims), spec, "l2")
        assert verify_mask(m2, spec)


# --- schema and symbols ------------------------------------------------------


def test_parse_sparsity_with_patterns():
    spec = parse_sparsity(
        """
- {kind: intra_block, block: [2, 1], ratio: 0.5, patterns: ["10", "01"]}
"""
    )
    assert spec.patterns[0].pattern_set == ((1, 0), (0, 1))


def test_symbolic_binding():
    spec = parse_sparsity('- {kind: full_block, block: [1, N], ratio: 0.8}')
    bound = bind_spec(spec, (64, 128))
    assert bound.patterns[0].block_size == (1, 128)
    report = validate_spec(spec, (64, 128))
    assert any(d.code == "symbols.unbound" for d in report.errors)


def test_channel_symbol_requires_value():
    spec = parse_sparsity('- {kind: full_block, block: [C_in, 1], ratio: 0.8}')
    with pytest.raises(SparsityError):
        bind_spec(spec, (64, 128), c_in=None)
    bound = bind_spec(spec, (64, 128), c_in=16)
    assert bound.patterns[0].block_size == (16, 1)


def test_realized_sparsity_reported_alongside_floor():
    spec = SparsitySpec((full((2, 16), 0.6),))
    mask = random_mask(spec, (64, 64), seed=0)
    # floor keeps 51 of 128 blocks, so the realized ratio differs from 0.6
    assert mask.realized_sparsity == 1 - 51 * 32 / 4096
