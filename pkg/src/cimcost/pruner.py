"""Mask generation: loss-based pruning and randomized conformant masks.

Block losses aggregate a per-element criterion (L1 magnitude or L2 square)
over the elements a choice would zero; the lowest-loss blocks and the
lowest-loss placement pattern per block are pruned/selected. Ties break
deterministically: the lexicographically smallest (row, col) block is
pruned first, and the lowest pattern-set index wins. Comparisons use the
accumulated float values exactly, no epsilon.

Composition applies patterns in spec order; every stage computes its
losses on the matrix as already masked by earlier stages.
"""

from __future__ import annotations

import numpy as np

from .sparsity import (
    FULL_BLOCK,
    INTRA_BLOCK,
    BlockPattern,
    SparseMask,
    SparsitySpec,
    SparsityError,
    build_mask,
    nonzero_block_count,
    validate_spec,
)

L1 = "l1"
L2 = "l2"
CRITERIA = (L1, L2)


def criterion_values(W: np.ndarray, crit: str) -> np.ndarray:
    """Per-element importance: |w| for l1, w**2 for l2."""
    if crit == L1:
        return np.abs(W)
    if crit == L2:
        return np.square(W)
    raise SparsityError(f"unknown pruning criterion {crit!r}")


def block_loss(W: np.ndarray, top_left: tuple[int, int], block: tuple[int, int], crit: str) -> float:
    """Loss of zeroing one whole block: sum of the criterion over it."""
    i, j = top_left
    m, n = block
    M, N = W.shape
    if not (0 <= i and 0 <= j and i + m <= M and j + n <= N):
        raise SparsityError(f"block at {top_left} of size {block} exceeds matrix {W.shape}")
    return float(criterion_values(W[i : i + m, j : j + n], crit).sum())


def intra_loss(W: np.ndarray, top_left: tuple[int, int], pattern, crit: str) -> float:
    """Loss of applying one placement pattern to a block.

    Sums the criterion over the elements the pattern zeroes (its 0 bits).
    `pattern` is a flattened row-major binary mask whose length must equal
    the block area; the block is taken as (len(pattern) // n, n) with n
    inferred from a 2-D pattern, or as a column block for flat patterns.
    """
    pat = np.asarray(pattern, dtype=np.uint8)
    i, j = top_left
    if pat.ndim == 1:
        m, n = pat.size, 1
    elif pat.ndim == 2:
        m, n = pat.shape
    else:
        raise SparsityError("pattern must be 1-D or 2-D")
    M, N = W.shape
    if i + m > M or j + n > N:
        raise SparsityError(f"pattern block at {top_left} of size {(m, n)} exceeds {W.shape}")
    vals = criterion_values(W[i : i + m, j : j + n], crit).reshape(-1)
    flat = pat.reshape(-1)
    return float(vals[flat == 0].sum())


def _full_bits(W: np.ndarray, pattern: BlockPattern, crit: str) -> np.ndarray:
    M, N = W.shape
    m, n = pattern.block_size
    if M % m or N % n:
        raise SparsityError(f"block {m}x{n} does not divide matrix {M}x{N}")
    gr, gc = M // m, N // n
    losses = criterion_values(W, crit).reshape(gr, m, gc, n).sum(axis=(1, 3))
    surviving = nonzero_block_count(pattern, (M, N))
    prune_count = gr * gc - surviving
    rows, cols = np.meshgrid(np.arange(gr), np.arange(gc), indexing="ij")
    # lexsort: last key is primary, so order is (loss, row, col) ascending
    order = np.lexsort((cols.ravel(), rows.ravel(), losses.ravel()))
    keep = np.ones(gr * gc, dtype=np.uint8)
    keep[order[:prune_count]] = 0
    return np.kron(keep.reshape(gr, gc), np.ones((m, n), dtype=np.uint8))


def _intra_bits(W: np.ndarray, pattern: BlockPattern, crit: str) -> np.ndarray:
    M, N = W.shape
    m, n = pattern.block_size
    if n != 1:
        raise SparsityError("intra pruning requires column-wise (m, 1) blocks")
    if M % m:
        raise SparsityError(f"intra block height {m} does not divide {M} rows")
    pats = np.asarray(pattern.patterns(), dtype=np.uint8)  # (K, m)
    vals = criterion_values(W, crit).reshape(M // m, m, N)
    # loss of pattern k on block (b, col) sums vals over the pattern's zeros
    losses = np.tensordot(vals, 1 - pats, axes=([1], [1]))  # (B, N, K)
    choice = np.argmin(losses, axis=2)  # first occurrence wins ties
    bits = pats[choice]  # (B, N, m)
    return bits.transpose(0, 2, 1).reshape(M, N)


def prune_fullblock(
    W: np.ndarray, pattern: BlockPattern, crit: str = L1, tensor_id: str = ""
) -> SparseMask:
    """Zero the lowest-loss blocks, keeping exactly the surviving-block budget."""
    if pattern.kind != FULL_BLOCK:
        raise SparsityError("prune_fullblock requires a full_block pattern")
    bits = _full_bits(np.asarray(W, dtype=np.float64), pattern, crit)
    return build_mask(tensor_id, bits, SparsitySpec((pattern,)))


def prune_intrablock(
    W: np.ndarray, pattern: BlockPattern, crit: str = L1, tensor_id: str = ""
) -> SparseMask:
    """Assign every block its argmin-loss placement pattern."""
    if pattern.kind != INTRA_BLOCK:
        raise SparsityError("prune_intrablock requires an intra_block pattern")
    bits = _intra_bits(np.asarray(W, dtype=np.float64), pattern, crit)
    return build_mask(tensor_id, bits, SparsitySpec((pattern,)))


def prune_composite(
    W: np.ndarray, spec: SparsitySpec, crit: str = L1, tensor_id: str = ""
) -> SparseMask:
    """Apply the spec's patterns in order, masking between stages."""
    W = np.asarray(W, dtype=np.float64)
    report = validate_spec(spec, W.shape)
    if not report.ok:
        raise SparsityError(f"spec rejected: {report}")
    current = W.copy()
    total = np.ones(W.shape, dtype=np.uint8)
    for pattern in spec.patterns:
        if pattern.kind == FULL_BLOCK:
            stage = _full_bits(current, pattern, crit)
        else:
            stage = _intra_bits(current, pattern, crit)
        total &= stage
        current *= stage
    return build_mask(tensor_id, total, spec)


def random_mask(
    spec: SparsitySpec, dims: tuple[int, int], seed: int, tensor_id: str = ""
) -> SparseMask:
    """Random conformant mask: uniform surviving blocks and pattern choices."""
    report = validate_spec(spec, dims)
    if not report.ok:
        raise SparsityError(f"spec rejected: {report}")
    rng = np.random.default_rng(seed)
    M, N = dims
    total = np.ones(dims, dtype=np.uint8)
    for pattern in spec.patterns:
        m, n = pattern.block_size
        if pattern.kind == FULL_BLOCK:
            gr, gc = M // m, N // n
            surviving = nonzero_block_count(pattern, dims)
            keep = np.zeros(gr * gc, dtype=np.uint8)
            keep[rng.choice(gr * gc, size=surviving, replace=False)] = 1
            stage = np.kron(keep.reshape(gr, gc), np.ones((m, n), dtype=np.uint8))
        else:
            pats = np.asarray(pattern.patterns(), dtype=np.uint8)
            choice = rng.integers(0, len(pats), size=(M // m, N))
            stage = pats[choice].transpose(0, 2, 1).reshape(M, N)
        total &= stage
    return build_mask(tensor_id, total, spec)
