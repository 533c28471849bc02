import numpy as np
import pytest

from cimcost import (
    BlockPattern,
    SparsityError,
    SparsitySpec,
    block_loss,
    intra_loss,
    nonzero_block_count,
    prune_composite,
    prune_fullblock,
    prune_intrablock,
    random_mask,
    verify_mask,
)
from conftest import DIMS_POOL, random_valid_spec
from oracles import brute_force_fullblock, brute_force_intrablock, dyadic_matrix


def full(block, ratio):
    return BlockPattern("full_block", block, ratio)


def intra(block, ratio, patterns=None):
    return BlockPattern("intra_block", block, ratio, patterns)


# --- losses ------------------------------------------------------------------


def test_block_loss_l1_l2():
    W = np.array([[1.0, -2.0], [3.0, -4.0]])
    assert block_loss(W, (0, 0), (2, 2), "l1") == 10
    assert block_loss(W, (0, 0), (2, 2), "l2") == 30
    assert block_loss(np.zeros((4, 4)), (2, 2), (2, 2), "l1") == 0


def test_block_loss_out_of_bounds():
    with pytest.raises(SparsityError):
        block_loss(np.zeros((4, 4)), (3, 3), (2, 2), "l1")


def test_intra_loss_column_patterns():
    W = np.array([[3.0], [-5.0]])
    keep_top = (1, 0)
    keep_bottom = (0, 1)
    assert intra_loss(W, (0, 0), keep_top, "l1") == 5
    assert intra_loss(W, (0, 0), keep_bottom, "l1") == 3
    assert intra_loss(W, (0, 0), (1, 1), "l1") == 0  # nothing pruned


def test_intra_loss_dim_mismatch():
    with pytest.raises(SparsityError):
        intra_loss(np.zeros((2, 1)), (1, 0), (1, 0), "l1")


def test_loss_additivity_pattern_plus_complement():
    # zeroing per a pattern and per its complement partitions the block loss
    rng = np.random.default_rng(5)
    W = rng.normal(size=(4, 4))
    for crit in ("l1", "l2"):
        total = block_loss(W, (0, 0), (4, 1), crit)
        pat = (1, 0, 1, 0)
        comp = tuple(1 - b for b in pat)
        assert intra_loss(W, (0, 0), pat, crit) + intra_loss(W, (0, 0), comp, crit) == pytest.approx(
            total, rel=1e-12
        )


# --- full-block pruning ------------------------------------------------------


def test_prune_fullblock_worked_example():
    W = np.array([[1.0, 2.0, 0.5, 0.1], [3.0, 4.0, 5.0, 6.0]])
    mask = prune_fullblock(W, full((1, 2), 0.5), "l1")
    # blocks (0,0)=3, (0,2)=0.6, (1,0)=7, (1,2)=11: the two lowest go
    assert mask.bits[0].tolist() == [0, 0, 0, 0]
    assert mask.bits[1].tolist() == [1, 1, 1, 1]
    assert set(mask.block_index) == {(1, 0), (1, 2)}


def test_prune_fullblock_ratio_near_one():
    W = np.ones((4, 2))
    mask = prune_fullblock(W, full((2, 1), 0.9), "l1")
    assert mask.nnz == 0
    assert mask.block_index == ()


def test_prune_fullblock_tie_prunes_lexicographic_first():
    W = np.array([[1.0, 1.0], [1.0, 1.0]])  # both row blocks tie, one slot
    mask = prune_fullblock(W, full((1, 2), 0.5), "l1")
    assert mask.bits[0].tolist() == [0, 0]
    assert mask.bits[1].tolist() == [1, 1]


def test_prune_fullblock_matches_brute_force(rng):
    for trial in range(60):
        m = int(rng.choice([1, 2, 4]))
        n = int(rng.choice([1, 2]))
        if m * n == 1:
            n = 2
        gr = int(rng.integers(1, min(4, 8 // m) + 1))
        gc = int(rng.integers(1, min(4, 8 // n) + 1))
        if gr * gc < 2:
            continue
        W = dyadic_matrix(rng, (gr * m, gc * n))
        crit = ["l1", "l2"][int(rng.integers(0, 2))]
        ratio = [0.25, 0.5, 0.75][int(rng.integers(0, 3))]
        pattern = full((m, n), ratio)
        mask = prune_fullblock(W, pattern, crit)
        surviving = nonzero_block_count(pattern, W.shape)
        expected_pruned = brute_force_fullblock(W, (m, n), surviving, crit)
        got_pruned = {
            (i, j)
            for i in range(0, W.shape[0], m)
            for j in range(0, W.shape[1], n)
            if (i, j) not in set(mask.block_index)
        }
        assert got_pruned == expected_pruned


# --- intra-block pruning -----------------------------------------------------


def test_prune_intrablock_keeps_largest():
    W = np.array([[3.0], [-5.0]])
    mask = prune_intrablock(W, intra((2, 1), 0.5), "l1")
    assert mask.bits[:, 0].tolist() == [0, 1]  # keep -5


def test_prune_intrablock_zero_block_takes_first_pattern():
    W = np.zeros((2, 1))
    mask = prune_intrablock(W, intra((2, 1), 0.5), "l1")
    # lexicographically first pattern is (0, 1): keep the bottom element
    assert mask.bits[:, 0].tolist() == [0, 1]


def test_prune_intrablock_four_to_one():
    W = np.array([[1.0], [9.0], [2.0], [3.0]])
    mask = prune_intrablock(W, intra((4, 1), 0.75), "l1")
    assert mask.bits[:, 0].tolist() == [0, 1, 0, 0]


def test_prune_intrablock_matches_brute_force(rng):
    for trial in range(40):
        m = int(rng.choice([2, 4]))
        blocks = int(rng.integers(1, 4))
        cols = int(rng.integers(1, 5))
        W = dyadic_matrix(rng, (m * blocks, cols))
        crit = ["l1", "l2"][int(rng.integers(0, 2))]
        pattern = intra((m, 1), 0.5 if m == 2 else 0.75)
        mask = prune_intrablock(W, pattern, crit)
        pats = pattern.patterns()
        expected = brute_force_intrablock(W, m, pats, crit)
        for (bi, j), k in expected.items():
            np.testing.assert_array_equal(
                mask.bits[bi : bi + m, j], np.array(pats[k], dtype=np.uint8)
            )


# --- composition -------------------------------------------------------------


def test_composite_zeros_fraction(rng):
    spec = SparsitySpec((intra((2, 1), 0.5), full((2, 16), 0.6)))
    mask = prune_composite(rng.normal(size=(64, 64)), spec, "l1")
    surviving_blocks = 51  # floor(0.4 * 128)
    assert mask.nnz == surviving_blocks * 16
    assert mask.realized_sparsity == 1 - surviving_blocks * 16 / 4096


def test_single_pattern_spec_equals_single_op(rng):
    W = rng.normal(size=(32, 32))
    pattern = full((2, 2), 0.5)
    via_spec = prune_composite(W, SparsitySpec((pattern,)), "l2")
    direct = prune_fullblock(W, pattern, "l2")
    assert via_spec.same_bits(direct)


def test_composition_order_changes_mask_but_both_verify(rng):
    W = rng.normal(size=(64, 64))
    a = SparsitySpec((intra((2, 1), 0.5), full((2, 16), 0.6)))
    b = SparsitySpec((full((2, 16), 0.6), intra((2, 1), 0.5)))
    ma = prune_composite(W, a, "l1")
    mb = prune_composite(W, b, "l1")
    assert verify_mask(ma, a)
    assert verify_mask(mb, b)
    assert not ma.same_bits(mb)  # generally different for random weights


def test_composite_budgets_exact(rng):
    for _ in range(40):
        dims = DIMS_POOL[rng.integers(0, len(DIMS_POOL))]
        spec = random_valid_spec(rng, dims)
        mask = prune_composite(rng.normal(size=dims), spec, "l1")
        for p in spec.full_patterns:
            m, n = p.block_size
            budget = nonzero_block_count(p, dims)
            view = mask.bits.reshape(dims[0] // m, m, dims[1] // n, n)
            live = int(view.any(axis=(1, 3)).sum())
            assert live <= budget
            if len(spec.patterns) == 1:
                assert live == budget
        for p in spec.intra_patterns:
            if len(spec.patterns) > 1:
                continue
            m, _ = p.block_size
            phi = p.surviving_elements
            per_block = mask.bits.reshape(dims[0] // m, m, dims[1]).sum(axis=1)
            assert (per_block == phi).all()


def test_scaling_invariance(rng):
    W = dyadic_matrix(rng, (16, 16))
    spec = SparsitySpec((intra((2, 1), 0.5), full((4, 4), 0.5)))
    for crit in ("l1", "l2"):
        base = prune_composite(W, spec, crit)
        scaled = prune_composite(3.5 * W, spec, crit)
        assert base.same_bits(scaled)


# --- randomized masks --------------------------------------------------------


def test_random_mask_deterministic():
    spec = SparsitySpec((full((2, 2), 0.5),))
    a = random_mask(spec, (32, 32), seed=42)
    b = random_mask(spec, (32, 32), seed=42)
    assert a.same_bits(b)
    assert a.block_index == b.block_index


def test_random_mask_differs_across_seeds():
    spec = SparsitySpec((full((2, 2), 0.5),))
    a = random_mask(spec, (64, 64), seed=1)
    b = random_mask(spec, (64, 64), seed=2)
    assert not a.same_bits(b)


def test_random_mask_conformant(rng):
    for _ in range(30):
        dims = DIMS_POOL[rng.integers(0, len(DIMS_POOL))]
        spec = random_valid_spec(rng, dims)
        mask = random_mask(spec, dims, seed=int(rng.integers(0, 2**31)))
        assert verify_mask(mask, spec)
