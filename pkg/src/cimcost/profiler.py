"""Input-side sparsity profiling for bit-serial execution.

Inputs stream one bit plane per cycle. A bit-cycle can be skipped only when
every value broadcast in that cycle (all activated rows, times the intra
multiplicity when several inputs share a row) has a zero at that bit
position, so larger broadcast groups skip less.

Activations are treated as unsigned magnitudes after pre-processing;
two's-complement payloads may be stored by setting `signed`, which only
tags the set (bit planes always operate on the raw patterns).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ProfileError(ValueError):
    pass


@dataclass
class ActivationSet:
    tensor_id: str
    shape: tuple[int, ...]
    bitwidth: int
    values: np.ndarray
    signed: bool = False

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.values = np.asarray(self.values, dtype=np.uint32).reshape(-1)
        if self.values.size != math.prod(self.shape):
            raise ProfileError(
                f"activation payload {self.values.size} does not match shape {self.shape}"
            )
        if self.values.size and int(self.values.max()) >= (1 << self.bitwidth):
            raise ProfileError(
                f"activation values exceed {self.bitwidth}-bit range"
            )


def bit_planes(acts: ActivationSet) -> np.ndarray:
    """(bitwidth, n) boolean matrix; row b marks values with bit b set."""
    bits = np.arange(acts.bitwidth, dtype=np.uint32)
    return ((acts.values[None, :] >> bits[:, None]) & 1).astype(bool)


def skippable_ratio(
    values,
    rows_per_group: int,
    inputs_per_row: int = 1,
    bitwidth: int = 8,
) -> float:
    """Fraction of bit-cycles where every broadcast input has a zero bit.

    `values` is the activation stream in broadcast order; consecutive runs
    of rows_per_group * inputs_per_row values share each bit-cycle. A short
    tail forms its own group.
    """
    group = rows_per_group * inputs_per_row
    if group < 1:
        raise ProfileError("broadcast group must contain at least one input")
    vals = np.asarray(values, dtype=np.uint32).reshape(-1)
    if vals.size == 0:
        raise ProfileError("empty activation group")
    n_groups = math.ceil(vals.size / group)
    starts = np.arange(n_groups) * group
    ors = np.bitwise_or.reduceat(vals, starts)
    skippable = 0
    for b in range(bitwidth):
        skippable += int(((ors >> b) & 1 == 0).sum())
    return skippable / (n_groups * bitwidth)


def synth_activations(
    shape, bitwidth: int, zero_fraction: float, seed: int, tensor_id: str = "synthetic"
) -> ActivationSet:
    """Deterministic synthetic activations with a target zero fraction."""
    if not 0.0 <= zero_fraction <= 1.0:
        raise ProfileError(f"zero_fraction {zero_fraction} outside [0, 1]")
    rng = np.random.default_rng(seed)
    n = math.prod(tuple(int(s) for s in shape))
    n_zero = round(zero_fraction * n)
    values = rng.integers(1, 1 << bitwidth, size=n, dtype=np.uint32)
    zero_at = rng.permutation(n)[:n_zero]
    values[zero_at] = 0
    return ActivationSet(tensor_id, tuple(int(s) for s in shape), bitwidth, values)
