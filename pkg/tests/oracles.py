"""Independent reference implementations used to check the library.

Everything here deliberately avoids the library's own code paths: plain
Python loops, exact Fraction arithmetic, and an explicit cycle-stepping
pipeline machine.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def event_pipeline_total(loads, comps, wbs, banking="ping_pong", wb_overlap=True):
    """Cycle-stepping three-stage pipeline simulator.

    Semantics: with ping-pong weight banking the preload of step i issues
    when compute of step i-1 starts; compute waits for its load, the
    compute engine, and (without writeback overlap) the previous step's
    drain. With overlap each step's writeback drains on its own port and
    completion is the final step's drain. Single banking serializes
    load / compute / writeback on one port.
    """
    n = len(loads)
    assert n >= 1
    load_done = [None] * n
    comp_started = [False] * n
    comp_done = [None] * n
    wb_done = [None] * n
    loading = None  # [idx, cycles_left]
    computing = None
    writing = None
    next_load = 0
    next_comp = 0
    next_wb = 0
    t = 0
    limit = 10 * (sum(loads) + sum(comps) + sum(wbs)) + 1000
    while wb_done[n - 1] is None:
        # settle and start until nothing changes at this instant
        changed = True
        while changed:
            changed = False
            if loading is not None and loading[1] == 0:
                load_done[loading[0]] = t
                loading = None
                changed = True
            if computing is not None and computing[1] == 0:
                comp_done[computing[0]] = t
                computing = None
                changed = True
            if writing is not None and writing[1] == 0:
                wb_done[writing[0]] = t
                writing = None
                changed = True
            if banking == "single":
                # one port, strictly serial: wb before the next compute
                # before the next load
                if loading is None and computing is None and writing is None:
                    if next_wb < next_comp:
                        writing = [next_wb, wbs[next_wb]]
                        next_wb += 1
                        changed = True
                    elif next_comp < next_load:
                        computing = [next_comp, comps[next_comp]]
                        comp_started[next_comp] = True
                        next_comp += 1
                        changed = True
                    elif next_load < n:
                        loading = [next_load, loads[next_load]]
                        next_load += 1
                        changed = True
            else:
                if (
                    loading is None
                    and next_load < n
                    and (next_load == 0 or comp_started[next_load - 1])
                ):
                    loading = [next_load, loads[next_load]]
                    next_load += 1
                    changed = True
                prev_wb_ok = (
                    wb_overlap
                    or next_comp == 0
                    or wb_done[next_comp - 1] is not None
                )
                if (
                    computing is None
                    and next_comp < n
                    and load_done[next_comp] is not None
                    and prev_wb_ok
                ):
                    computing = [next_comp, comps[next_comp]]
                    comp_started[next_comp] = True
                    next_comp += 1
                    changed = True
                if wb_overlap:
                    # dedicated drain per step: record completion directly
                    while next_wb < next_comp and comp_done[next_wb] is not None:
                        wb_done[next_wb] = comp_done[next_wb] + wbs[next_wb]
                        next_wb += 1
                        changed = True
                elif writing is None and next_wb < next_comp and comp_done[next_wb] is not None:
                    writing = [next_wb, wbs[next_wb]]
                    next_wb += 1
                    changed = True
        if wb_done[n - 1] is not None:
            break
        # advance one cycle
        for engine in (loading, computing, writing):
            if engine is not None:
                engine[1] -= 1
        t += 1
        if t > limit:
            raise RuntimeError("event pipeline did not converge")
    return wb_done[n - 1]


def brute_force_fullblock(W, block, surviving, crit):
    """Minimum-loss pruned block set by subset enumeration.

    Returns the set of pruned block corners. Losses use plain Python sums;
    subset totals use exact Fractions; ties resolve to the
    lexicographically smallest sorted corner list.
    """
    m, n = block
    M, N = W.shape
    corners = [(i, j) for i in range(0, M, m) for j in range(0, N, n)]
    losses = {}
    for (i, j) in corners:
        acc = Fraction(0)
        for x in range(i, i + m):
            for y in range(j, j + n):
                w = float(W[x, y])
                acc += Fraction(abs(w)) if crit == "l1" else Fraction(w) * Fraction(w)
        losses[(i, j)] = acc
    prune_count = len(corners) - surviving
    best = None
    for subset in itertools.combinations(corners, prune_count):
        total = sum((losses[c] for c in subset), Fraction(0))
        key = (total, tuple(sorted(subset)))
        if best is None or key < best:
            best = key
    return set(best[1]) if best else set()


def brute_force_intrablock(W, m, patterns, crit):
    """Per-block argmin pattern selection by direct enumeration."""
    M, N = W.shape
    choice = {}
    for bi in range(0, M, m):
        for j in range(N):
            best = None
            for k, pat in enumerate(patterns):
                loss = Fraction(0)
                for off in range(m):
                    if pat[off] == 0:
                        w = float(W[bi + off, j])
                        loss += Fraction(abs(w)) if crit == "l1" else Fraction(w) * Fraction(w)
                key = (loss, k)
                if best is None or key < best:
                    best = key
            choice[(bi, j)] = best[1]
    return choice


def brute_force_skippable(values, group, bitwidth):
    """Enumerate every bit-cycle of every broadcast group."""
    values = list(int(v) for v in values)
    skippable = 0
    total = 0
    for start in range(0, len(values), group):
        chunk = values[start : start + group]
        for b in range(bitwidth):
            total += 1
            if all((v >> b) & 1 == 0 for v in chunk):
                skippable += 1
    return skippable / total


def dyadic_matrix(rng, shape, denom=8, span=16):
    """Random matrix on a dyadic lattice so float sums are exact."""
    return rng.integers(-span, span + 1, size=shape).astype(np.float64) / denom
