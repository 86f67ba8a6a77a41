"""Candidate block generation: superset decode, invalidation, traversal, data rules.

The stages compose as a pipeline over one image:

  superset_decode -> backward_invalidate -> initial_starts -> forward_traverse
  (iterated with restarts after each new data block) -> split_common_suffixes

The result deliberately overapproximates: every plausible code or data block
becomes a candidate and conflicts are left to the scheduler.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .image import RawImage
from .isa import (
    BLOCK_ENDERS,
    Kind,
    NEEDS_FALLTHROUGH,
    TABLE_ENTRY_SIZE,
    superset_decode,
)
from .model import Block, CandidateSet, Mode, other_mode


@dataclass
class CandidateConfig:
    """Tunables for candidate generation; defaults match the documented rules."""

    string_run_threshold: int = 8  # unreferenced printable+NUL runs longer than this
    accessed_string_min: int = 2  # min printable chars for an accessed string
    repeat_run_threshold: int = 8  # identical-byte runs longer than this
    max_rounds: int = 64  # safety bound on traversal/data iterations


def backward_invalidate(image, superset):
    """Fixpoint set of invalidated (addr, mode) keys.

    An instruction is invalid when a required successor (fallthrough address
    for fallthrough kinds and conditional jumps, direct target for transfers)
    lies inside an executable section but has no valid decode, or is itself
    invalidated. Terminators have no required successors and survive.
    """
    required = {}
    reverse = {}
    for key, insn in superset.items():
        reqs = []
        if insn.kind in NEEDS_FALLTHROUGH:
            reqs.append((insn.end, insn.mode))
        for target in insn.targets:
            reqs.append(target)
        required[key] = reqs
        for req in reqs:
            reverse.setdefault(req, []).append(key)

    invalid = set()

    def bad(req):
        return image.in_executable(req[0]) and (req not in superset or req in invalid)

    work = deque()
    for key, reqs in required.items():
        if any(bad(r) for r in reqs):
            invalid.add(key)
            work.append(key)
    while work:
        key = work.popleft()
        for pred in reverse.get(key, ()):
            if pred not in invalid and any(bad(r) for r in required[pred]):
                invalid.add(pred)
                work.append(pred)
    return invalid


def initial_starts(image, superset, invalid):
    """Deterministic list of seed (addr, mode) pairs.

    Union of declared entry points, every 4-aligned in-image word whose value
    lands in an executable section (tried in both code modes), and the direct
    targets of every non-invalidated transfer in the superset.
    """
    starts = set(image.entry_points)
    for sec in image.sections:
        base = sec.vaddr + (-sec.vaddr % 4)
        for addr in range(base, sec.end - 3, 4):
            word = image.read_word(addr)
            if word is not None and image.in_executable(word):
                starts.add((word, Mode.A))
                starts.add((word, Mode.T))
    for key, insn in superset.items():
        if key in invalid:
            continue
        for target, tmode in insn.targets:
            if image.in_executable(target):
                starts.add((target, tmode))
    return sorted(starts, key=lambda s: (s[0], s[1].rank))


def _walk_block(superset, invalid, start_key):
    """Maximal fallthrough run from a valid start; returns (insns, end, last)."""
    insns = []
    cur = superset[start_key]
    mode = start_key[1]
    while True:
        insns.append(cur.addr)
        if cur.kind in BLOCK_ENDERS:
            return insns, cur.end, cur
        nxt = (cur.end, mode)
        if nxt not in superset or nxt in invalid:
            # Only possible at a section boundary; mid-section holes would have
            # invalidated the current instruction already.
            return insns, cur.end, cur
        cur = superset[nxt]


def forward_traverse(image, superset, invalid, starts):
    """Grow code blocks from seeds, following direct transfers and the linear
    continuation after every block; a failed continuation retries the other
    code mode exactly once. Returns ({start_key: Block}, processed starts)."""
    blocks = {}
    processed = set()
    queue = deque(starts)

    def valid(key):
        return key in superset and key not in invalid

    def push(key):
        if key not in processed:
            queue.append(key)

    while queue:
        key = queue.popleft()
        if key in processed:
            continue
        processed.add(key)
        if not valid(key):
            continue
        insns, end, last = _walk_block(superset, invalid, key)
        mode = key[1]
        blocks[key] = Block(key[0], end, mode, tuple(insns))
        for target, tmode in last.targets:
            if image.in_executable(target):
                push((target, tmode))
        cont = (end, mode)
        if valid(cont):
            push(cont)
        else:
            retry = (end, other_mode(mode))
            if valid(retry):
                push(retry)
    return blocks, processed


def split_common_suffixes(blocks):
    """Cut converging code blocks so no two same-mode blocks share a start.

    An instruction start is a cut point exactly where two blocks meet: one
    block begins there while another passes through it, or two blocks arrive
    at it from different preceding instructions (possible when instruction
    lengths disagree, e.g. prefixed against plain decodes). Past a meeting
    point all same-mode blocks decode identically, so the shared suffix
    collapses into a single block and everything before it stays intact.
    Data blocks pass through untouched.
    """
    head = object()  # predecessor sentinel for a block's first instruction
    data = []
    chains = {}
    for blk in blocks:
        if blk.is_code:
            chains.setdefault((blk.start, blk.end, blk.mode), blk)
        else:
            data.append(blk)
    marks = {}
    for blk in chains.values():
        prev = head
        for addr in blk.insn_starts:
            marks.setdefault((addr, blk.mode), set()).add(prev)
            prev = addr
    pieces = {}
    for blk in chains.values():
        starts = blk.insn_starts
        bounds = [0]
        bounds.extend(i for i in range(1, len(starts)) if len(marks[(starts[i], blk.mode)]) > 1)
        bounds.append(len(starts))
        for lo, hi in zip(bounds, bounds[1:]):
            end = starts[hi] if hi < len(starts) else blk.end
            piece = Block(starts[lo], end, blk.mode, starts[lo:hi])
            pieces[(piece.start, piece.end, piece.mode)] = piece
    return list(pieces.values()) + data


def _is_printable(byte):
    return 0x20 <= byte <= 0x7E


def _content_blocks(image, cfg):
    """Unreferenced data candidates: long printable+NUL runs and repeated runs."""
    out = []
    for sec in image.sections:
        data = image.blob[sec.file_offset : sec.file_offset + sec.size]
        i = 0
        while i < sec.size:  # identical-byte runs
            j = i
            while j < sec.size and data[j] == data[i]:
                j += 1
            if j - i > cfg.repeat_run_threshold:
                out.append(Block(sec.vaddr + i, sec.vaddr + j, Mode.DATA))
            i = j
        i = 0
        while i < sec.size:  # printable runs ending in NUL
            if not _is_printable(data[i]):
                i += 1
                continue
            j = i
            while j < sec.size and _is_printable(data[j]):
                j += 1
            if j < sec.size and data[j] == 0 and j - i > cfg.string_run_threshold:
                out.append(Block(sec.vaddr + i, sec.vaddr + j + 1, Mode.DATA))
            i = j + 1
    return out


def _string_at(image, addr, minimum):
    """Printable+NUL content at addr, or None; returns total size with NUL."""
    chars = 0
    while True:
        raw = image.try_read(addr + chars, 1)
        if raw is None:
            return None
        if raw[0] == 0:
            return chars + 1 if chars >= minimum else None
        if not _is_printable(raw[0]):
            return None
        chars += 1


def _table_entry_blocks(image, superset, invalid, insn, other_bases):
    """Per-entry data blocks of one jump table, plus the covered region.

    Bounded tables emit exactly the declared entry count. Unbounded tables
    extend while each entry still points at potentially valid code and the
    running upper bound (least discovered target >= base, and any other table
    base past ours) is not crossed.
    """
    base = insn.accesses[0].addr
    mode = insn.mode
    entries = []
    if insn.table_bound is not None:
        for i in range(insn.table_bound):
            addr = base + i * TABLE_ENTRY_SIZE
            if image.try_read(addr, TABLE_ENTRY_SIZE) is None:
                break
            entries.append(addr)
    else:
        bound = min((b for b in other_bases if b > base), default=None)
        addr = base
        while True:
            word = image.read_word(addr)
            if word is None:
                break
            key = (word, mode)
            if key not in superset or key in invalid:
                break
            if word >= base and (bound is None or word < bound):
                bound = word
            if bound is not None and addr + TABLE_ENTRY_SIZE > bound:
                break
            entries.append(addr)
            addr += TABLE_ENTRY_SIZE
    blocks = [Block(a, a + TABLE_ENTRY_SIZE, Mode.DATA) for a in entries]
    region = (base, entries[-1] + TABLE_ENTRY_SIZE) if entries else None
    return blocks, region


@dataclass(frozen=True)
class CandidateResult:
    """Candidate set plus the cross-reference context later stages reuse."""

    candidate_set: CandidateSet
    superset: dict
    invalid: frozenset
    literal_accesses: tuple = ()  # DataAccess records from candidate code blocks
    table_regions: tuple = ()  # (start, end) byte ranges covered by tables
    call_targets: tuple = ()  # (addr, mode) of direct call targets, with repeats
    jump_targets: tuple = ()  # (addr, mode) of jump/mode-switch targets, with repeats


def _detect_twins(code_blocks, superset):
    """Pair prefixed blocks with their unprefixed byte-overlap twins."""
    by_key = {(b.start, b.end, b.mode): b for b in code_blocks}
    pairs = []
    for blk in code_blocks:
        if blk.mode is not Mode.A:
            continue
        first = superset.get((blk.start, Mode.A))
        if first is None or first.size != 8:
            continue
        twin = by_key.get((blk.start + 4, blk.end, Mode.A))
        if twin is None:
            continue
        if blk.insn_starts[1:] == twin.insn_starts[1:] and twin.insn_starts[0] == blk.start + 4:
            pairs.append((blk, twin))
    return pairs


def generate_candidates(image, cfg=None):
    """Full candidate generation for one image."""
    cfg = cfg or CandidateConfig()
    superset = superset_decode(image)
    invalid = backward_invalidate(image, superset)
    seeds = initial_starts(image, superset, invalid)

    data_blocks = {}
    for blk in _content_blocks(image, cfg):
        data_blocks[(blk.start, blk.end)] = blk

    pending = list(seeds)
    for blk in data_blocks.values():
        pending.extend(((blk.end, Mode.A), (blk.end, Mode.T)))

    code_blocks = {}
    processed = set()
    literal_accesses = []
    table_regions = []
    for _ in range(cfg.max_rounds):
        new_blocks, newly_processed = forward_traverse(image, superset, invalid, pending)
        processed |= newly_processed
        code_blocks.update(new_blocks)
        pending = []

        table_insns = []
        accesses = []
        for blk in code_blocks.values():
            for addr in blk.insn_starts:
                insn = superset[(addr, blk.mode)]
                if insn.kind is Kind.JUMP_TABLE:
                    table_insns.append(insn)
                elif insn.kind in (Kind.LOAD, Kind.STORE):
                    accesses.extend(insn.accesses)
        other_bases = sorted({i.accesses[0].addr for i in table_insns})

        new_data = []
        regions = []
        for insn in sorted(table_insns, key=lambda i: (i.addr, i.mode.rank)):
            blocks, region = _table_entry_blocks(image, superset, invalid, insn, other_bases)
            new_data.extend(blocks)
            if region is not None:
                regions.append(region)
        table_regions = sorted(set(regions))
        literal_accesses = sorted(set(accesses), key=lambda a: (a.addr, a.size))

        for access in literal_accesses:
            if image.section_at(access.addr) is None:
                continue
            strsize = _string_at(image, access.addr, cfg.accessed_string_min)
            if strsize is not None:
                new_data.append(Block(access.addr, access.addr + strsize, Mode.DATA))
            elif image.try_read(access.addr, access.size) is not None:
                new_data.append(Block(access.addr, access.addr + access.size, Mode.DATA))

        grew = False
        for blk in new_data:
            key = (blk.start, blk.end)
            if key not in data_blocks:
                data_blocks[key] = blk
                grew = True
                for restart in ((blk.end, Mode.A), (blk.end, Mode.T)):
                    if restart not in processed:
                        pending.append(restart)
        if not grew and not pending:
            break

    final_blocks = split_common_suffixes(list(code_blocks.values()) + list(data_blocks.values()))

    call_targets = []
    jump_targets = []
    access_records = []
    final_code = [b for b in final_blocks if b.is_code]
    for blk in final_code:
        last = superset[(blk.insn_starts[-1], blk.mode)]
        if last.kind is Kind.DIRECT_CALL:
            call_targets.extend(last.targets)
        elif last.kind in (Kind.DIRECT_JUMP, Kind.COND_JUMP, Kind.MODE_SWITCH):
            jump_targets.extend(last.targets)
        for addr in blk.insn_starts:
            insn = superset[(addr, blk.mode)]
            if insn.kind in (Kind.LOAD, Kind.STORE):
                access_records.extend(insn.accesses)

    pairs = _detect_twins(final_code, superset)
    twin_flagged = {}
    for a, b in pairs:
        twin_flagged[a] = Block(a.start, a.end, a.mode, a.insn_starts, has_prefix_twin=True)
        twin_flagged[b] = Block(b.start, b.end, b.mode, b.insn_starts, has_prefix_twin=True)
    rebuilt = [twin_flagged.get(b, b) for b in final_blocks]
    twins = {}
    for a, b in pairs:
        twins[twin_flagged[a]] = twin_flagged[b]
        twins[twin_flagged[b]] = twin_flagged[a]

    cands = CandidateSet(tuple(rebuilt), twins)
    return CandidateResult(
        candidate_set=cands,
        superset=superset,
        invalid=frozenset(invalid),
        literal_accesses=tuple(sorted(access_records, key=lambda a: (a.addr, a.size, a.kind))),
        table_regions=tuple(table_regions),
        call_targets=tuple(sorted(call_targets, key=lambda t: (t[0], t[1].rank))),
        jump_targets=tuple(sorted(jump_targets, key=lambda t: (t[0], t[1].rank))),
    )
