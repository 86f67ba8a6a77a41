"""Exact conflict resolution over weighted candidate blocks.

Candidate blocks are intervals over the address space; overlapping candidates
are mutually exclusive. The resolver picks the maximum-total-weight set of
non-overlapping blocks by dynamic programming over blocks sorted by
(end, start, mode), with an explicit take/leave decision bit per block so the
recovery walk is unambiguous: ties prefer taking the later block.

Byte-overlap twins (a prefixed block and the plain block hiding inside its
second half) are deliberately kept out of the optimization -- only the
prefixed member competes -- and the plain member is re-added to the output
afterwards when its partner was selected.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

from .heuristics import (
    INT64_MAX,
    INT64_MIN,
    REGISTRY,
    WeightOverflow,
    block_weight,
    build_context,
    match_counts,
)
from .model import Block, BlockInvariantError, Mode, ParseError, block_order


def compute_pred(blocks):
    """1-based predecessor indices for blocks already in canonical order.

    pred[i] is the number of blocks (equivalently: the largest 1-based index)
    whose interval ends at or before blocks[i] starts; 0 means none.
    """
    ends = [b.end for b in blocks]
    return [bisect_right(ends, b.start) for b in blocks]


@dataclass(frozen=True)
class ScheduleResult:
    order: tuple  # blocks in canonical order
    pred: tuple  # 1-based predecessor index per block
    weights: tuple  # weight per block, same order
    take: tuple  # DP decision bit per block
    selected: tuple  # chosen blocks, in canonical order
    total: int


def solve_schedule(blocks, weight_of):
    """Maximum-weight non-overlapping subset via the take/leave recurrence."""
    order = tuple(block_order(blocks))
    n = len(order)
    pred = compute_pred(order)
    w = [weight_of(b) for b in order]
    opt = [0] * (n + 1)
    take = [False] * (n + 1)
    for i in range(1, n + 1):
        with_i = w[i - 1] + opt[pred[i - 1]]
        if not INT64_MIN <= with_i <= INT64_MAX:
            raise WeightOverflow(f"schedule total {with_i} exceeds signed 64-bit range")
        if with_i >= opt[i - 1]:
            opt[i] = with_i
            take[i] = True
        else:
            opt[i] = opt[i - 1]
    selected = []
    i = n
    while i > 0:
        if take[i]:
            selected.append(order[i - 1])
            i = pred[i - 1]
        else:
            i -= 1
    selected.reverse()
    return ScheduleResult(
        order=order,
        pred=tuple(pred),
        weights=tuple(w),
        take=tuple(take[1:]),
        selected=tuple(selected),
        total=opt[n],
    )


def _is_plain_twin(block, twins):
    partner = twins.get(block)
    return partner is not None and partner.start == block.start - 4


def competing_blocks(cands):
    """Blocks that take part in conflict resolution.

    The plain half of a prefix twin never competes on its own: it is re-added
    to the output exactly when its prefixed partner wins (the two describe the
    same machine code reached with and without the prefix byte).
    """
    twins = cands.twins
    return [b for b in cands.blocks if not _is_plain_twin(b, twins)]


@dataclass(frozen=True)
class Resolution:
    blocks: tuple  # final output blocks, canonical order (twins re-added)
    schedule: ScheduleResult
    counts: dict  # block -> {heuristic: match count}
    block_weights: dict  # block -> weight


def resolve(image, result, weights, registry=REGISTRY):
    """Weigh all candidates and resolve conflicts for one image."""
    ctx = build_context(image, result)
    cands = result.candidate_set
    counts = {b: match_counts(ctx, b, registry) for b in cands.blocks}
    per_block = {b: block_weight(b, counts[b], weights, registry) for b in cands.blocks}

    sched = solve_schedule(competing_blocks(cands), per_block.__getitem__)

    twins = cands.twins
    final = list(sched.selected)
    chosen = set(sched.selected)
    for blk in sched.selected:
        partner = twins.get(blk)
        if partner is not None and partner not in chosen:
            final.append(partner)
    return Resolution(
        blocks=tuple(block_order(final)),
        schedule=sched,
        counts=counts,
        block_weights=per_block,
    )


def instruction_keys(blocks):
    """(addr, mode) for every instruction start in the given code blocks."""
    keys = set()
    for blk in blocks:
        if blk.is_code:
            for addr in blk.insn_starts:
                keys.add((addr, blk.mode))
    return keys


# --- disassembly dump format -------------------------------------------------
#
#   B <A|T|D> <start-hex> <end-hex> [<insn-start-hex> ...]
#   TOTAL <weight>
#
# Blocks appear in canonical order; code blocks list every instruction start.
# Candidate dumps use the same B lines without the trailing TOTAL.


def _format_block_line(blk):
    parts = [f"B {blk.mode} {blk.start:#x} {blk.end:#x}"]
    if blk.is_code:
        parts.extend(f"{a:#x}" for a in blk.insn_starts)
    return " ".join(parts)


def _parse_block_line(parts, lineno):
    if parts[0] != "B" or len(parts) < 4:
        raise ParseError(f"line {lineno}: expected 'B <mode> <start> <end> ...'")
    try:
        mode = Mode.parse(parts[1])
        start = int(parts[2], 16)
        end = int(parts[3], 16)
        insns = tuple(int(p, 16) for p in parts[4:])
        return Block(start, end, mode, insns)
    except (ValueError, BlockInvariantError) as exc:
        raise ParseError(f"line {lineno}: {exc}") from exc


def format_blocks(blocks):
    return "".join(_format_block_line(blk) + "\n" for blk in block_order(blocks))


def parse_blocks(text):
    blocks = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        blocks.append(_parse_block_line(line.split(), lineno))
    return tuple(blocks)


def format_disassembly(blocks, total):
    return format_blocks(blocks) + f"TOTAL {total}\n"


def parse_disassembly(text):
    blocks = []
    total = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "TOTAL":
            if total is not None or len(parts) != 2:
                raise ParseError(f"line {lineno}: malformed TOTAL line")
            try:
                total = int(parts[1])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad total '{parts[1]}'") from exc
            continue
        blocks.append(_parse_block_line(parts, lineno))
    if total is None:
        raise ParseError("missing TOTAL line")
    return tuple(blocks), total


def load_disassembly(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_disassembly(fh.read())


def save_disassembly(path, blocks, total):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_disassembly(blocks, total))
