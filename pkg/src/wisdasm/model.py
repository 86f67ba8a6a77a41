"""Core data model: candidate blocks, ground truth, block partitions, soundness.

Addresses are plain ints. An instruction is identified by its (address, mode)
pair; sizes follow deterministically from the decoder. Blocks carry the decoded
instruction start addresses so later stages never need to re-decode.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class ModelError(Exception):
    """Base class for model-level errors."""


class BlockInvariantError(ModelError):
    """A block or candidate set violates a structural invariant."""


class AmbiguousInstructionOwner(ModelError):
    """A true instruction is claimed by more than one code block."""


class MissedInstruction(ModelError):
    """A true instruction is not contained in any candidate code block."""


class ParseError(ModelError):
    """A structured text file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Mode(enum.Enum):
    """Decode mode of a block: two code modes plus data."""

    A = "A"
    T = "T"
    DATA = "D"

    @property
    def rank(self):
        return _MODE_RANK[self]

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, text):
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown mode '{text}' (expected A, T, or D)") from None


_MODE_RANK = {Mode.A: 0, Mode.T: 1, Mode.DATA: 2}

CODE_MODES = (Mode.A, Mode.T)


def other_mode(mode):
    return Mode.T if mode is Mode.A else Mode.A


@dataclass(frozen=True)
class Block:
    """Half-open byte range [start, end) of one decode mode.

    Code blocks own their instruction start addresses (strictly increasing,
    first equals `start`). Data blocks have no instructions. `has_prefix_twin`
    marks one half of a prefix-overlap pair; the twin map lives on the
    candidate set.
    """

    start: int
    end: int
    mode: Mode
    insn_starts: tuple = ()
    has_prefix_twin: bool = False

    def __post_init__(self):
        if self.start >= self.end:
            raise BlockInvariantError(f"empty block range {self.start:#x}..{self.end:#x}")
        if self.mode is Mode.DATA:
            if self.insn_starts:
                raise BlockInvariantError("data block with instruction starts")
            return
        starts = tuple(self.insn_starts)
        object.__setattr__(self, "insn_starts", starts)
        if not starts:
            raise BlockInvariantError("code block without instruction starts")
        if starts[0] != self.start:
            raise BlockInvariantError("first instruction must sit at block start")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise BlockInvariantError("instruction starts must strictly increase")
        if starts[-1] >= self.end:
            raise BlockInvariantError("instruction start beyond block end")

    @property
    def size(self):
        return self.end - self.start

    @property
    def is_code(self):
        return self.mode is not Mode.DATA

    def overlaps(self, other):
        return self.start < other.end and other.start < self.end

    def order_key(self):
        return (self.end, self.start, self.mode.rank)

    def __repr__(self):
        kind = self.mode.value
        return f"Block({kind} {self.start:#x}..{self.end:#x} n={len(self.insn_starts)})"


def block_order(blocks):
    """Sort blocks by (end, start, mode) with A < T < DATA; a strict total order.

    Raises BlockInvariantError if two distinct blocks compare equal.
    """
    ordered = sorted(blocks, key=Block.order_key)
    for a, b in zip(ordered, ordered[1:]):
        if a.order_key() == b.order_key():
            raise BlockInvariantError(f"duplicate block key {a!r} / {b!r}")
    return ordered


@dataclass(frozen=True)
class CandidateSet:
    """All candidate blocks of one image, plus the prefix-twin pairing.

    Code blocks never share an instruction (same address and mode); data
    blocks may overlap anything. `twins` maps each half of a prefix-twin
    block pair to its partner block (prefixed to unprefixed and vice versa,
    both in mode A).
    """

    blocks: tuple
    twins: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        seen = {}
        for blk in self.blocks:
            if not blk.is_code:
                continue
            for addr in blk.insn_starts:
                key = (addr, blk.mode)
                if key in seen:
                    raise BlockInvariantError(
                        f"instruction {addr:#x}/{blk.mode} owned by {seen[key]!r} and {blk!r}"
                    )
                seen[key] = blk

    def sorted_blocks(self):
        return block_order(self.blocks)

    def code_blocks(self):
        return [b for b in self.blocks if b.is_code]

    def data_blocks(self):
        return [b for b in self.blocks if not b.is_code]


@dataclass(frozen=True)
class TrueInstruction:
    addr: int
    mode: Mode
    size: int

    def __post_init__(self):
        if self.mode is Mode.DATA:
            raise BlockInvariantError("true instructions must be code")
        if self.size <= 0:
            raise BlockInvariantError("true instruction with non-positive size")


@dataclass(frozen=True)
class GroundTruth:
    """True instructions, ignored starts, and prefix-twin address pairs."""

    true_insns: tuple
    ignored: frozenset = frozenset()
    twin_pairs: tuple = ()

    def __post_init__(self):
        insns = tuple(sorted(set(self.true_insns), key=lambda i: (i.addr, i.mode.rank)))
        object.__setattr__(self, "true_insns", insns)
        object.__setattr__(self, "ignored", frozenset(self.ignored))
        pairs = tuple(sorted(set(tuple(sorted(p)) for p in self.twin_pairs)))
        object.__setattr__(self, "twin_pairs", pairs)
        twin_ok = set(pairs) | {(b, a) for a, b in pairs}
        prev = None
        for insn in insns:
            if prev is not None and insn.addr < prev.addr + prev.size:
                if (prev.addr, insn.addr) not in twin_ok:
                    raise BlockInvariantError(
                        f"true instructions overlap: {prev.addr:#x}+{prev.size} vs {insn.addr:#x}"
                    )
            else:
                prev = insn
                continue
            # Overlapping twin: keep whichever reaches further as the overlap frontier.
            if insn.addr + insn.size > prev.addr + prev.size:
                prev = insn

    def true_keys(self):
        """Set of (addr, mode) identities of all true instructions."""
        return {(i.addr, i.mode) for i in self.true_insns}


@dataclass(frozen=True)
class BlockPartition:
    """Candidate blocks split into true / false / undetermined sets."""

    true_blocks: frozenset
    false_blocks: frozenset
    undetermined: frozenset


def derive_partition(cands, gt):
    """Partition candidates against ground truth.

    True blocks are those owning at least one true instruction; false blocks
    are the remaining code blocks that still have a non-ignored instruction
    start; everything else (data blocks, fully ignored code blocks) is
    undetermined. Raises AmbiguousInstructionOwner / MissedInstruction when a
    true instruction has several or no owners.
    """
    owner = {}
    for blk in cands.blocks:
        if not blk.is_code:
            continue
        for addr in blk.insn_starts:
            owner.setdefault((addr, blk.mode), []).append(blk)
    true_blocks = set()
    for insn in gt.true_insns:
        claims = owner.get((insn.addr, insn.mode), [])
        if not claims:
            raise MissedInstruction(f"no candidate block contains {insn.addr:#x}/{insn.mode}")
        if len(claims) > 1:
            raise AmbiguousInstructionOwner(
                f"instruction {insn.addr:#x}/{insn.mode} owned by {len(claims)} blocks"
            )
        true_blocks.add(claims[0])
    false_blocks = set()
    undetermined = set()
    for blk in cands.blocks:
        if blk in true_blocks:
            continue
        if blk.is_code and any(a not in gt.ignored for a in blk.insn_starts):
            false_blocks.add(blk)
        else:
            undetermined.add(blk)
    return BlockPartition(frozenset(true_blocks), frozenset(false_blocks), frozenset(undetermined))


@dataclass(frozen=True)
class SoundnessReport:
    """Result of checking a candidate set against ground truth.

    A candidate set is sound iff it misses no true instruction and no block
    mixes true with spurious instructions. Instruction starts listed in
    `ignored` never count as evidence either way.
    """

    missed: tuple
    incorrect_blocks: tuple

    @property
    def sound(self):
        return not self.missed and not self.incorrect_blocks


def check_soundness(cands, gt):
    true_keys = gt.true_keys()
    covered = set()
    incorrect = []
    for blk in cands.blocks:
        if not blk.is_code:
            continue
        has_true = has_spurious = False
        for addr in blk.insn_starts:
            if (addr, blk.mode) in true_keys:
                has_true = True
                covered.add((addr, blk.mode))
            elif addr not in gt.ignored:
                has_spurious = True
        if has_true and has_spurious:
            incorrect.append(blk)
    missed = sorted(true_keys - covered)
    return SoundnessReport(tuple(missed), tuple(block_order(incorrect)))


# --- ground truth sidecar files ---------------------------------------------
#
#   I <hex-addr> <mode A|T> <size-bytes>     one true instruction
#   X <hex-addr>                             one ignored start
#   P <hex-addr1> <hex-addr2>                one prefix-twin pair
#
# '#' starts a comment; blank lines are skipped.


def parse_sidecar(text):
    insns = []
    ignored = set()
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        tag = fields[0]
        try:
            if tag == "I":
                if len(fields) != 4:
                    raise ValueError("expected: I <addr> <A|T> <size>")
                addr = int(fields[1], 16)
                mode = Mode(fields[2])
                if mode is Mode.DATA:
                    raise ValueError("true instructions must be mode A or T")
                insns.append(TrueInstruction(addr, mode, int(fields[3])))
            elif tag == "X":
                if len(fields) != 2:
                    raise ValueError("expected: X <addr>")
                ignored.add(int(fields[1], 16))
            elif tag == "P":
                if len(fields) != 3:
                    raise ValueError("expected: P <addr1> <addr2>")
                pairs.append((int(fields[1], 16), int(fields[2], 16)))
            else:
                raise ValueError(f"unknown record tag {tag!r}")
        except (ValueError, BlockInvariantError) as exc:
            raise ParseError(str(exc), line=lineno) from exc
    try:
        return GroundTruth(tuple(insns), frozenset(ignored), tuple(pairs))
    except BlockInvariantError as exc:
        raise ParseError(str(exc)) from exc


def format_sidecar(gt):
    lines = ["# ground truth sidecar"]
    for insn in gt.true_insns:
        lines.append(f"I {insn.addr:x} {insn.mode} {insn.size}")
    for addr in sorted(gt.ignored):
        lines.append(f"X {addr:x}")
    for a, b in gt.twin_pairs:
        lines.append(f"P {a:x} {b:x}")
    return "\n".join(lines) + "\n"


def load_sidecar(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_sidecar(fh.read())


def save_sidecar(gt, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_sidecar(gt))
