"""Likelihood heuristics over candidate blocks.

Each heuristic matches a block some whole number of times. Simple heuristics
contribute ``count * weight`` to a block's weight; proportional ones
contribute ``count * block_size * weight``. Positive-class heuristics carry
non-negative weights, negative-class ones non-positive weights; the weight
magnitudes are either engineering defaults or learned from labeled corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

from .isa import CAN_FALL_THROUGH
from .model import Mode, ParseError

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1


class WeightOverflow(Exception):
    """A block weight or schedule total left the signed 64-bit range."""


@dataclass(frozen=True)
class Heuristic:
    name: str
    positive: bool  # positive-class (weight >= 0) vs negative-class (weight <= 0)
    proportional: bool  # contribution scales with block size
    default_weight: int


# Declaration order is the canonical coefficient order everywhere (weight
# files, constraint text, solver columns).
REGISTRY = (
    Heuristic("size", positive=True, proportional=True, default_weight=2),
    Heuristic("called", positive=True, proportional=False, default_weight=40),
    Heuristic("jumped", positive=True, proportional=False, default_weight=24),
    Heuristic("fallthrough_from_block", positive=True, proportional=False, default_weight=12),
    Heuristic("entry_reachable", positive=True, proportional=False, default_weight=16),
    Heuristic("table_ref", positive=True, proportional=False, default_weight=30),
    Heuristic("literal_ref", positive=True, proportional=False, default_weight=30),
    Heuristic("string_content", positive=True, proportional=True, default_weight=3),
    Heuristic("repeated_content", positive=True, proportional=True, default_weight=1),
    Heuristic("fits_between", positive=True, proportional=False, default_weight=8),
    Heuristic("unlikely_pattern", positive=False, proportional=False, default_weight=-50),
)

BY_NAME = {h.name: h for h in REGISTRY}
DEFAULT_WEIGHTS = {h.name: h.default_weight for h in REGISTRY}


def registry_index(name):
    for i, heur in enumerate(REGISTRY):
        if heur.name == name:
            return i
    raise KeyError(name)


@dataclass
class MatchContext:
    """Precomputed cross-reference facts for one candidate set."""

    image: object
    blocks: tuple
    superset: dict
    call_counts: dict  # (addr, mode) -> number of direct call references
    jump_counts: dict  # (addr, mode) -> number of jump/mode-switch references
    literal_counts: dict  # addr -> number of literal access references
    table_regions: tuple  # sorted (start, end) ranges covered by jump tables
    section_edges: frozenset  # section start/end addresses
    reachable: frozenset  # (start, mode) of blocks reachable from entry points


def _count(items):
    out = {}
    for item in items:
        out[item] = out.get(item, 0) + 1
    return out


def _entry_reachable(image, blocks, superset):
    by_start = {(b.start, b.mode): b for b in blocks if b.is_code}
    seeds = []
    for entry in image.entry_points:
        for (start, mode), blk in by_start.items():
            if mode is entry[1] and entry[0] in blk.insn_starts:
                seeds.append((start, mode))
    seen = set()
    work = list(seeds)
    while work:
        key = work.pop()
        if key in seen or key not in by_start:
            continue
        seen.add(key)
        blk = by_start[key]
        last = superset[(blk.insn_starts[-1], blk.mode)]
        succs = list(last.targets)
        if last.kind in CAN_FALL_THROUGH:
            succs.append((blk.end, blk.mode))
        for succ in succs:
            if succ in by_start and succ not in seen:
                work.append(succ)
    return frozenset(seen)


def build_context(image, result):
    """MatchContext from an image and a candidates.CandidateResult."""
    blocks = result.candidate_set.blocks
    edges = set()
    for sec in image.sections:
        edges.add(sec.vaddr)
        edges.add(sec.end)
    return MatchContext(
        image=image,
        blocks=blocks,
        superset=result.superset,
        call_counts=_count(result.call_targets),
        jump_counts=_count(result.jump_targets),
        literal_counts=_count(a.addr for a in result.literal_accesses),
        table_regions=result.table_regions,
        section_edges=frozenset(edges),
        reachable=_entry_reachable(image, blocks, result.superset),
    )


def _printable(byte):
    return 0x20 <= byte <= 0x7E


def _m_size(ctx, block):
    return 1


def _m_called(ctx, block):
    if not block.is_code:
        return 0
    return ctx.call_counts.get((block.start, block.mode), 0)


def _m_jumped(ctx, block):
    if not block.is_code:
        return 0
    return ctx.jump_counts.get((block.start, block.mode), 0)


def _m_fallthrough_from_block(ctx, block):
    if not block.is_code:
        return 0
    count = 0
    for other in ctx.blocks:
        if other.is_code and other.mode is block.mode and other.end == block.start and other is not block:
            last = ctx.superset[(other.insn_starts[-1], other.mode)]
            if last.kind in CAN_FALL_THROUGH:
                count += 1
    return count


def _m_entry_reachable(ctx, block):
    return 1 if block.is_code and (block.start, block.mode) in ctx.reachable else 0


def _m_table_ref(ctx, block):
    if block.is_code:
        return 0
    count = 0
    for start, end in ctx.table_regions:
        if start <= block.start and block.end <= end:
            count += 1
    return count


def _m_literal_ref(ctx, block):
    if block.is_code:
        return 0
    return ctx.literal_counts.get(block.start, 0)


def _m_string_content(ctx, block):
    if block.is_code or block.size < 3:
        return 0
    data = ctx.image.try_read(block.start, block.size)
    if data is None or data[-1] != 0:
        return 0
    return 1 if all(_printable(b) for b in data[:-1]) else 0


def _m_repeated_content(ctx, block):
    if block.is_code or block.size < 2:
        return 0
    data = ctx.image.try_read(block.start, block.size)
    if data is None:
        return 0
    return 1 if all(b == data[0] for b in data) else 0


def _m_fits_between(ctx, block):
    other_starts = {b.start for b in ctx.blocks if b is not block}
    other_ends = {b.end for b in ctx.blocks if b is not block}
    left = block.start in other_ends or block.start in ctx.section_edges
    right = block.end in other_starts or block.end in ctx.section_edges
    return 1 if left and right else 0


def _m_unlikely_pattern(ctx, block):
    if not block.is_code:
        return 0
    count = 0
    for addr in block.insn_starts:
        insn = ctx.superset[(addr, block.mode)]
        raw = ctx.image.read(addr, insn.size)
        if block.mode is Mode.A:
            op = raw[0]
            if 0x20 <= op < 0x40 and (raw[1] > 0x0F or raw[2] > 0x0F):
                count += 1  # ALU naming nonexistent registers
            elif op == 0x09 and raw[1] & 1 == 0:
                count += 1  # exchange to the mode already active
    return count


MATCHERS = {
    "size": _m_size,
    "called": _m_called,
    "jumped": _m_jumped,
    "fallthrough_from_block": _m_fallthrough_from_block,
    "entry_reachable": _m_entry_reachable,
    "table_ref": _m_table_ref,
    "literal_ref": _m_literal_ref,
    "string_content": _m_string_content,
    "repeated_content": _m_repeated_content,
    "fits_between": _m_fits_between,
    "unlikely_pattern": _m_unlikely_pattern,
}


def match_counts(ctx, block, registry=REGISTRY):
    """Nonzero match counts, as {heuristic name: count}."""
    counts = {}
    for heur in registry:
        n = MATCHERS[heur.name](ctx, block)
        if n:
            counts[heur.name] = n
    return counts


def block_weight(block, counts, weights, registry=REGISTRY):
    """Exact integer weight of one block under a concrete weight vector."""
    total = 0
    for heur in registry:
        n = counts.get(heur.name, 0)
        if not n:
            continue
        term = n * weights[heur.name]
        if heur.proportional:
            term *= block.size
        total += term
    if not INT64_MIN <= total <= INT64_MAX:
        raise WeightOverflow(f"block weight {total} exceeds signed 64-bit range")
    return total


def check_weights(weights, registry=REGISTRY):
    """Validate a weight vector against the registry's sign classes."""
    for heur in registry:
        if heur.name not in weights:
            raise ParseError(f"missing weight for heuristic '{heur.name}'")
        w = weights[heur.name]
        if not isinstance(w, int):
            raise ParseError(f"weight for '{heur.name}' must be an integer")
        if heur.positive and w < 0:
            raise ParseError(f"heuristic '{heur.name}' requires a non-negative weight")
        if not heur.positive and w > 0:
            raise ParseError(f"heuristic '{heur.name}' requires a non-positive weight")
    extra = set(weights) - {h.name for h in registry}
    if extra:
        raise ParseError(f"unknown heuristic names in weights: {sorted(extra)}")


# --- weights file format -----------------------------------------------------
#
#   W <name> <weight> <simple|proportional> <pos|neg>
#
# One line per heuristic, '#' comments allowed. The kind/class columns are
# redundant with the registry and verified on load.


def format_weights(weights, registry=REGISTRY):
    lines = []
    for heur in registry:
        kind = "proportional" if heur.proportional else "simple"
        cls = "pos" if heur.positive else "neg"
        lines.append(f"W {heur.name} {weights[heur.name]} {kind} {cls}")
    return "\n".join(lines) + "\n"


def parse_weights(text, registry=REGISTRY):
    weights = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5 or parts[0] != "W":
            raise ParseError(f"line {lineno}: expected 'W <name> <weight> <kind> <class>'")
        _, name, value, kind, cls = parts
        if name not in {h.name for h in registry}:
            raise ParseError(f"line {lineno}: unknown heuristic '{name}'")
        heur = next(h for h in registry if h.name == name)
        try:
            weight = int(value)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: bad weight '{value}'") from exc
        expect_kind = "proportional" if heur.proportional else "simple"
        expect_cls = "pos" if heur.positive else "neg"
        if kind != expect_kind:
            raise ParseError(f"line {lineno}: '{name}' is {expect_kind}, not {kind}")
        if cls != expect_cls:
            raise ParseError(f"line {lineno}: '{name}' is {expect_cls}-class, not {cls}")
        if name in weights:
            raise ParseError(f"line {lineno}: duplicate weight for '{name}'")
        weights[name] = weight
    check_weights(weights, registry)
    return weights


def load_weights(path, registry=REGISTRY):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_weights(fh.read(), registry)


def save_weights(path, weights, registry=REGISTRY):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_weights(weights, registry))
