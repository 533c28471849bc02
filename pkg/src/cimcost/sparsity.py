"""Composite block-sparsity abstraction for reshaped weight matrices.

Two pattern kinds over an M x N matrix:

* full_block: whole m x n blocks are zeroed. With sparsity ratio r, the
  number of surviving blocks is floor((1 - r) * (M/m) * (N/n)).
* intra_block: within every m x n block exactly phi = floor((1 - r) * m * n)
  elements survive, placed according to one mask from a pattern set.

A spec composes at most two patterns in application order. The practical
rules enforced here: intra blocks are column-wise one-dimensional (n = 1),
and when two patterns compose the coarser block size must be a
componentwise integral multiple of the finer one. Block sizes that do not
line up with the hardware broadcast/accumulation widths are permitted but
flagged, since misalignment costs fragmentation rather than correctness.

Ratios are kept as exact fractions parsed from their decimal literal:
binary floats flip the floor at exact boundaries (e.g. (1-0.9)*10 in
float64 is 0.999...8, flooring to 0 instead of 1).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import yaml

FULL_BLOCK = "full_block"
INTRA_BLOCK = "intra_block"

DEFAULT_PATTERN_SET_CAP = 4096

# Symbolic block extents resolved per layer by bind_spec().
EXTENT_SYMBOLS = ("M", "N", "C_in")


class SparsityError(ValueError):
    """Malformed sparsity description."""


def ratio_fraction(r) -> Fraction:
    """Sparsity ratio as an exact Fraction in (0, 1)."""
    if isinstance(r, Fraction):
        f = r
    elif isinstance(r, float):
        f = Fraction(repr(r))
    elif isinstance(r, str):
        f = Fraction(r)
    else:
        raise SparsityError(f"cannot interpret sparsity ratio {r!r}")
    if not 0 < f < 1:
        raise SparsityError(f"sparsity ratio must lie in (0, 1), got {r}")
    return f


@dataclass(frozen=True)
class BlockPattern:
    """One block sparsity pattern.

    pattern_set (intra_block only) holds flattened row-major binary masks,
    each with exactly phi ones; masks must be distinct.
    """

    kind: str
    block_size: tuple[int, int]
    sparsity_ratio: Fraction
    pattern_set: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in (FULL_BLOCK, INTRA_BLOCK):
            raise SparsityError(f"unknown pattern kind {self.kind!r}")
        norm = []
        for e in self.block_size:
            if isinstance(e, str):
                if e not in EXTENT_SYMBOLS:
                    raise SparsityError(f"unknown block extent symbol {e!r}")
                norm.append(e)
            else:
                e = int(e)
                if e < 1:
                    raise SparsityError(f"block size {self.block_size} must be positive")
                norm.append(e)
        object.__setattr__(self, "block_size", tuple(norm))
        object.__setattr__(self, "sparsity_ratio", ratio_fraction(self.sparsity_ratio))
        if self.pattern_set is not None:
            if self.kind != INTRA_BLOCK:
                raise SparsityError("pattern_set only applies to intra_block patterns")
            if self.is_symbolic:
                raise SparsityError("pattern_set requires concrete block extents")
            m, n = self.block_size
            masks = tuple(tuple(int(b) for b in p) for p in self.pattern_set)
            phi = self.surviving_elements
            for p in masks:
                if len(p) != m * n:
                    raise SparsityError(f"pattern {p} does not match block size {m}x{n}")
                if any(b not in (0, 1) for b in p):
                    raise SparsityError(f"pattern {p} is not binary")
                if sum(p) != phi:
                    raise SparsityError(
                        f"pattern {p} keeps {sum(p)} elements, expected {phi}"
                    )
            if len(set(masks)) != len(masks):
                raise SparsityError("pattern_set masks must be distinct")
            if not masks:
                raise SparsityError("pattern_set must not be empty")
            object.__setattr__(self, "pattern_set", masks)

    @property
    def is_symbolic(self) -> bool:
        return any(isinstance(e, str) for e in self.block_size)

    @property
    def surviving_elements(self) -> int:
        """floor((1 - r) * m * n), exact over the rational ratio."""
        if self.is_symbolic:
            raise SparsityError("bind symbolic extents before evaluating the pattern")
        m, n = self.block_size
        return int(math.floor((1 - self.sparsity_ratio) * m * n))

    def patterns(self) -> tuple[tuple[int, ...], ...]:
        """Configured pattern set, or all available patterns by default."""
        if self.pattern_set is not None:
            return self.pattern_set
        return default_pattern_set(self.block_size, self.sparsity_ratio)


@dataclass(frozen=True)
class SparsitySpec:
    """Ordered composition of block patterns (applied first to last)."""

    patterns: tuple[BlockPattern, ...]

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))

    @property
    def full_patterns(self) -> tuple[BlockPattern, ...]:
        return tuple(p for p in self.patterns if p.kind == FULL_BLOCK)

    @property
    def intra_patterns(self) -> tuple[BlockPattern, ...]:
        return tuple(p for p in self.patterns if p.kind == INTRA_BLOCK)

    @property
    def is_symbolic(self) -> bool:
        return any(p.is_symbolic for p in self.patterns)

    @property
    def finest_block(self) -> tuple[int, int]:
        """Componentwise-minimal block size; index granularity for masks."""
        if self.is_symbolic:
            raise SparsityError("bind symbolic extents before evaluating the spec")
        return (
            min(p.block_size[0] for p in self.patterns),
            min(p.block_size[1] for p in self.patterns),
        )

    @property
    def kept_per_finest_block(self) -> int:
        """Elements kept inside a surviving finest-granularity block."""
        fm, fn = self.finest_block
        kept = fm * fn
        for p in self.intra_patterns:
            m, n = p.block_size
            if (m, n) == (fm, fn):
                kept = min(kept, p.surviving_elements)
        return kept


def nonzero_block_count(pattern: BlockPattern, matrix_dims: tuple[int, int]) -> int:
    """Number of surviving blocks of a full_block pattern on an M x N matrix."""
    if pattern.kind != FULL_BLOCK:
        raise SparsityError("nonzero_block_count applies to full_block patterns")
    m, n = pattern.block_size
    M, N = matrix_dims
    if M % m or N % n:
        raise SparsityError(f"block {m}x{n} does not divide matrix {M}x{N}")
    total = (M // m) * (N // n)
    return int(math.floor((1 - pattern.sparsity_ratio) * total))


def nonzero_elem_count(pattern: BlockPattern) -> int:
    """Surviving elements per block of an intra_block pattern."""
    if pattern.kind != INTRA_BLOCK:
        raise SparsityError("nonzero_elem_count applies to intra_block patterns")
    return pattern.surviving_elements


def default_pattern_set(
    block_size: tuple[int, int], ratio, cap: int = DEFAULT_PATTERN_SET_CAP
) -> tuple[tuple[int, ...], ...]:
    """All binary masks with exactly phi ones, lexicographic by flattened mask.

    Errors out when the binomial count exceeds `cap`; pass an explicit
    pattern_set in that case.
    """
    m, n = block_size
    if m * n <= 1:
        raise SparsityError(f"block size {block_size} must have m*n > 1")
    r = ratio_fraction(ratio)
    phi = int(math.floor((1 - r) * m * n))
    count = math.comb(m * n, phi)
    if count > cap:
        raise SparsityError(
            f"default pattern set for block {m}x{n} at ratio {r} has {count} masks "
            f"(cap {cap}); provide an explicit pattern_set"
        )
    masks = []
    for ones in itertools.combinations(range(m * n), phi):
        mask = [0] * (m * n)
        for i in ones:
            mask[i] = 1
        masks.append(tuple(mask))
    return tuple(sorted(masks))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str

    def __str__(self):
        return f"{self.severity}[{self.code}]: {self.message}"


@dataclass
class ValidationReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def error(self, code: str, message: str):
        self.diagnostics.append(Diagnostic("error", code, message))

    def warn(self, code: str, message: str):
        self.diagnostics.append(Diagnostic("warning", code, message))

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]

    def extend(self, other: "ValidationReport"):
        self.diagnostics.extend(other.diagnostics)

    def __str__(self):
        return "\n".join(str(d) for d in self.diagnostics) or "ok"


def _dims_compatible(extent: int, hw_extent: int) -> bool:
    # Either direction counts as aligned: a 1x16 block on a 32-wide
    # accumulation group tiles it evenly, as does a 64x1 block on 16-wide
    # broadcast groups.
    return extent % hw_extent == 0 or hw_extent % extent == 0


def validate_spec(
    spec: SparsitySpec,
    matrix_dims: tuple[int, int],
    hw_dims: tuple[int, int, int] | None = None,
) -> ValidationReport:
    """Structural validation of a sparsity spec against a matrix and hardware.

    hw_dims is (array_rows, array_cols, broadcast_width). Semantic violations
    come back as diagnostics; nothing raises here.
    """
    report = ValidationReport()
    M, N = matrix_dims
    if not spec.patterns:
        report.error("empty", "spec contains no patterns")
        return report
    if spec.is_symbolic:
        report.error("symbols.unbound", "spec has unbound symbolic block extents")
        return report
    if len(spec.patterns) > 2:
        report.error(
            "composition.depth",
            f"{len(spec.patterns)} stacked patterns exceed the maximum of two",
        )
    for idx, p in enumerate(spec.patterns):
        m, n = p.block_size
        label = f"pattern {idx} ({p.kind} {m}x{n})"
        if m * n <= 1:
            report.error("block.trivial", f"{label}: block must span more than one element")
        if p.kind == INTRA_BLOCK and n != 1:
            report.error(
                "intra.column_rule",
                f"{label}: intra blocks must be column-wise one-dimensional (n = 1)",
            )
        if M % m or N % n:
            report.error(
                "block.divisibility",
                f"{label}: block does not divide matrix dims {M}x{N}",
            )
        if p.kind == INTRA_BLOCK:
            try:
                pats = p.patterns()
            except SparsityError as exc:
                report.error("intra.pattern_set", f"{label}: {exc}")
            else:
                if not pats:
                    report.error("intra.pattern_set", f"{label}: empty pattern set")
        if hw_dims is not None and p.kind == FULL_BLOCK:
            array_rows, array_cols, broadcast = hw_dims
            if not _dims_compatible(m, broadcast) and not _dims_compatible(m, array_rows):
                report.warn(
                    "align.rows",
                    f"{label}: row extent {m} misaligned with broadcast width "
                    f"{broadcast}; expect fragmentation",
                )
            if not _dims_compatible(n, array_cols):
                report.warn(
                    "align.cols",
                    f"{label}: column extent {n} misaligned with accumulation width "
                    f"{array_cols}; expect fragmentation",
                )
    if len(spec.patterns) == 2:
        (ma, na), (mb, nb) = (p.block_size for p in spec.patterns)
        a_multiple = ma % mb == 0 and na % nb == 0
        b_multiple = mb % ma == 0 and nb % na == 0
        if not (a_multiple or b_multiple):
            report.error(
                "composition.multiple",
                f"block sizes {ma}x{na} and {mb}x{nb}: the coarser pattern must be a "
                "componentwise integral multiple of the finer one",
            )
    return report


def misaligned_full_blocks(spec: SparsitySpec, hw_dims: tuple[int, int, int]) -> bool:
    """True when any full_block pattern triggers an alignment warning."""
    report = validate_spec(spec, _divisible_dims(spec), hw_dims)
    return any(d.code.startswith("align.") for d in report.warnings)


def _divisible_dims(spec: SparsitySpec) -> tuple[int, int]:
    m = math.lcm(*(p.block_size[0] for p in spec.patterns))
    n = math.lcm(*(p.block_size[1] for p in spec.patterns))
    return m, n


# ---------------------------------------------------------------------------
# masks


@dataclass(eq=False)
class SparseMask:
    """Binary keep-mask plus the index metadata the hardware would store.

    block_index lists top-left corners of non-zero blocks at the finest
    pattern granularity, row-major. elem_index maps intra-block corners to
    the flattened offsets of kept elements, and is present iff an
    intra_block pattern applies.
    """

    tensor_id: str
    dims: tuple[int, int]
    bits: np.ndarray
    block_index: tuple[tuple[int, int], ...]
    elem_index: dict[tuple[int, int], tuple[int, ...]] | None = None
    spec: "SparsitySpec | None" = None

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.shape != tuple(self.dims):
            raise SparsityError(
                f"mask bits shape {self.bits.shape} does not match dims {self.dims}"
            )

    @property
    def nnz(self) -> int:
        return int(self.bits.sum())

    @property
    def realized_sparsity(self) -> float:
        return 1.0 - self.nnz / self.bits.size

    def same_bits(self, other: "SparseMask") -> bool:
        return self.dims == other.dims and np.array_equal(self.bits, other.bits)


def _block_view(bits: np.ndarray, m: int, n: int) -> np.ndarray:
    M, N = bits.shape
    return bits.reshape(M // m, m, N // n, n).transpose(0, 2, 1, 3)


def build_mask(tensor_id: str, bits: np.ndarray, spec: SparsitySpec) -> SparseMask:
    """Assemble a SparseMask with index metadata derived from the bit grid."""
    bits = np.asarray(bits, dtype=np.uint8)
    M, N = bits.shape
    fm, fn = spec.finest_block
    if M % fm or N % fn:
        raise SparsityError(f"mask dims {M}x{N} not divisible by finest block {fm}x{fn}")
    nz = _block_view(bits, fm, fn).any(axis=(2, 3))
    block_index = tuple(
        (int(i) * fm, int(j) * fn) for i, j in np.argwhere(nz)
    )
    elem_index = None
    intra = spec.intra_patterns
    if intra:
        im, _ = intra[0].block_size
        elem_index = {}
        blocks = bits.reshape(M // im, im, N).transpose(0, 2, 1)  # (bi, col, offset)
        for bi, col in np.argwhere(blocks.any(axis=2)):
            offsets = np.nonzero(blocks[bi, col])[0]
            elem_index[(int(bi) * im, int(col))] = tuple(int(o) for o in offsets)
    return SparseMask(tensor_id, (M, N), bits, block_index, elem_index, spec)


def dense_mask(tensor_id: str, dims: tuple[int, int]) -> SparseMask:
    """All-ones mask for the dense baseline path."""
    return SparseMask(tensor_id, dims, np.ones(dims, dtype=np.uint8), (), None)


def verify_mask(mask: SparseMask, spec: SparsitySpec) -> bool:
    """Check conformance of a mask against its spec.

    True iff blocks outside the index are all-zero, no full pattern exceeds
    its surviving-block budget, and every non-zero intra block's support is
    covered by some pattern in the set.
    """
    bits = mask.bits
    M, N = mask.dims
    fm, fn = spec.finest_block
    if M % fm or N % fn:
        return False
    nz = _block_view(bits, fm, fn).any(axis=(2, 3))
    listed = np.zeros_like(nz)
    for (i, j) in mask.block_index:
        if i % fm or j % fn or not (0 <= i < M and 0 <= j < N):
            return False
        listed[i // fm, j // fn] = True
    if not np.array_equal(nz, listed):
        return False

    for p in spec.full_patterns:
        m, n = p.block_size
        if M % m or N % n:
            return False
        budget = nonzero_block_count(p, (M, N))
        live = int(_block_view(bits, m, n).any(axis=(2, 3)).sum())
        if live > budget:
            return False

    for p in spec.intra_patterns:
        m, n = p.block_size
        if n != 1 or M % m:
            return False
        supports = {tuple(q) for q in p.patterns()}
        blocks = bits.reshape(M // m, m, N).transpose(0, 2, 1).reshape(-1, m)
        for blk in blocks[blocks.any(axis=1)]:
            key = tuple(int(b) for b in blk)
            if key not in supports and not _covered(key, supports):
                return False
        # metadata consistency
        if mask.elem_index is None:
            return False
        live_blocks = bits.reshape(M // m, m, N).transpose(0, 2, 1)
        expected = {}
        for bi, col in np.argwhere(live_blocks.any(axis=2)):
            offs = tuple(int(o) for o in np.nonzero(live_blocks[bi, col])[0])
            expected[(int(bi) * m, int(col))] = offs
        if expected != mask.elem_index:
            return False
    if not spec.intra_patterns and mask.elem_index:
        return False
    return True


def _covered(support: tuple[int, ...], patterns: set[tuple[int, ...]]) -> bool:
    # A block satisfies the intra condition when its support is a subset of
    # some pattern's support (zero positions of the pattern must be zero).
    return any(all(s <= p for s, p in zip(support, pat)) for pat in patterns)


# ---------------------------------------------------------------------------
# schema


def parse_sparsity(text: str | dict | list) -> SparsitySpec:
    """Parse a sparsity spec document.

    Schema: list (or {patterns: [...]}) of entries {kind, block, ratio,
    patterns?} with patterns given as bit strings, e.g. "01" keeps the
    second element of a (2, 1) block. Block extents may be the symbols
    "M", "N" or "C_in", resolved later against a concrete layer.
    """
    doc = yaml.safe_load(text) if isinstance(text, str) else text
    entries = doc.get("patterns", doc) if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise SparsityError("sparsity document must be a list of pattern entries")
    patterns = []
    for entry in entries:
        block = entry.get("block")
        if not isinstance(block, (list, tuple)) or len(block) != 2:
            raise SparsityError(f"pattern entry {entry!r} needs a 2-element 'block'")
        pset = None
        if entry.get("patterns") is not None:
            pset = tuple(
                tuple(int(c) for c in str(bits)) for bits in entry["patterns"]
            )
        patterns.append(
            BlockPattern(
                kind=str(entry.get("kind")),
                block_size=_parse_extents(block),
                sparsity_ratio=ratio_fraction(entry.get("ratio")),
                pattern_set=pset,
            )
        )
    return SparsitySpec(tuple(patterns))


def _parse_extents(block) -> tuple:
    out = []
    for v in block:
        if isinstance(v, str) and v in EXTENT_SYMBOLS:
            out.append(v)
        else:
            out.append(int(v))
    return tuple(out)


def has_symbols(spec: SparsitySpec) -> bool:
    return any(p.is_symbolic for p in spec.patterns)


def bind_spec(spec: SparsitySpec, matrix_dims: tuple[int, int], c_in: int | None = None) -> SparsitySpec:
    """Resolve symbolic block extents (M, N, C_in) against a concrete layer."""
    M, N = matrix_dims
    table = {"M": M, "N": N, "C_in": c_in}
    bound = []
    for p in spec.patterns:
        m, n = p.block_size
        if isinstance(m, str):
            if table[m] is None:
                raise SparsityError(f"symbol {m!r} has no value for this layer")
            m = table[m]
        if isinstance(n, str):
            if table[n] is None:
                raise SparsityError(f"symbol {n!r} has no value for this layer")
            n = table[n]
        bound.append(
            BlockPattern(p.kind, (m, n), p.sparsity_ratio, p.pattern_set)
        )
    return SparsitySpec(tuple(bound))
