"""Synthetic MiniISA binaries with exact instruction-level ground truth.

The generator plans a binary as a list of functions plus interleaved data
(literal pools, constant islands, strings, jump tables, padding), lays the
plan out at concrete addresses, and only then encodes bytes, so every
pc-relative operand is exact and the emitted sidecar is correct by
construction. Per-binary generation is deterministic in (seed, index).

Feature menu:
  * two code modes with cross-mode `bx` transitions,
  * per-function literal pools and in-body constant islands (data between
    instructions, loaded word-by-word and jumped over by a conditional
    branch),
  * bounded and unbounded jump tables, always laid out before the functions
    their entries point at,
  * dispatch tables for functions that are never called directly,
  * NUL padding runs between items (recorded as ignored addresses),
  * ASCII string constants, inline or in a separate non-executable section,
  * optional prefix-twin function entries (reached both with and without the
    prefix byte) and, behind `overlap_decoys`, deliberately unsound layouts
    (code reachable from no start, and a data word that falls through into
    unreferenced code) for exercising failure accounting.

The module also ships two hand-assembled references: an interleaving fixture
with a known candidate window, and a pair of byte-identical images labeled
with opposing truths whose pooled constraints no weight assignment can
satisfy.
"""

from __future__ import annotations

import hashlib
import os
import random
from dataclasses import dataclass, field, fields

from . import isa
from .candidates import generate_candidates
from .heuristics import build_context, match_counts
from .image import RawImage, Section, load_image, save_image
from .inference import build_problem, infer_optimized
from .model import (
    GroundTruth,
    Mode,
    ModelError,
    ParseError,
    TrueInstruction,
    check_soundness,
    derive_partition,
    load_sidecar,
    save_sidecar,
)
from .schedule import competing_blocks, instruction_keys, resolve


class ConfigInvalid(ModelError):
    """A generator configuration value is out of range."""


class GenerationError(ModelError):
    """The generator could not produce a binary with the requested properties."""


MODE_MIXES = ("a", "t", "mixed")
SPLIT_TRAIN = "train"
SPLIT_VALIDATE = "validate"


@dataclass(frozen=True)
class GenConfig:
    """Knobs for one synthetic binary / corpus.

    Rates are probabilities in [0, 1]; ranges are inclusive (lo, hi) pairs.
    `plant`, when set, is a full weight vector the generated corpus is
    guaranteed to be consistent with: each binary is re-sampled until its
    candidate set is sound, its inferred constraints are all satisfied by the
    planted weights, and conflict resolution under them reproduces the ground
    truth exactly. `plant` cannot be combined with the adversarial toggles,
    which exist to produce binaries that violate those very properties.
    """

    seed: int = 0
    binaries: int = 20
    train_split: float = 0.2
    base_address: int = 0x10000
    functions: tuple = (3, 6)
    body_ops: tuple = (3, 8)
    mode_mix: str = "mixed"
    data_rate: float = 0.35
    table_rate: float = 0.3
    unbounded_mix: float = 0.5
    literal_rate: float = 0.6
    string_rate: float = 0.4
    padding_rate: float = 0.5
    padding_len: tuple = (9, 18)
    rodata_rate: float = 0.3
    call_rate: float = 0.55
    tail_jump_rate: float = 0.12
    prefix_twins: bool = False
    overlap_decoys: bool = False
    plant: dict | None = None
    plant_attempts: int = 40

    def validate(self):
        for name in (
            "train_split",
            "data_rate",
            "table_rate",
            "unbounded_mix",
            "literal_rate",
            "string_rate",
            "padding_rate",
            "rodata_rate",
            "call_rate",
            "tail_jump_rate",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigInvalid(f"{name} must be in [0, 1], got {value!r}")
        for name in ("functions", "body_ops", "padding_len"):
            rng = getattr(self, name)
            if len(rng) != 2 or not (1 <= rng[0] <= rng[1]):
                raise ConfigInvalid(f"{name} must be a (lo, hi) range with 1 <= lo <= hi")
        if self.mode_mix not in MODE_MIXES:
            raise ConfigInvalid(f"mode_mix must be one of {MODE_MIXES}")
        if self.binaries < 0:
            raise ConfigInvalid("binaries must be non-negative")
        if self.base_address % 4 or self.base_address <= 0:
            raise ConfigInvalid("base_address must be positive and 4-aligned")
        if self.plant_attempts < 1:
            raise ConfigInvalid("plant_attempts must be at least 1")
        if self.padding_len[0] <= 8:
            raise ConfigInvalid("padding runs must be longer than 8 bytes")
        if self.plant is not None and self.overlap_decoys:
            raise ConfigInvalid("plant cannot be combined with adversarial toggles")


def config_text(cfg):
    """Canonical one-line rendering of a config (hash input)."""
    parts = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, dict):
            value = tuple(sorted(value.items()))
        parts.append(f"{f.name}={value!r}")
    return "genconfig " + " ".join(parts)


def config_hash(cfg, index=None):
    text = config_text(cfg)
    if index is not None:
        text += f" index={index}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# --- plan-level IR ------------------------------------------------------------


@dataclass
class _Word:
    """A planted data word (pool slot, island slot); address set at layout."""

    value: int
    addr: int = 0


@dataclass
class _Table:
    """A planted jump table; entries are function indices."""

    mode: Mode
    bounded: bool
    entries: list
    addr: int = 0


@dataclass
class _Blob:
    """A planted NUL-terminated string."""

    data: bytes
    addr: int = 0


@dataclass
class _Op:
    kind: str
    width: int
    payload: tuple = ()
    target: int | None = None  # function index for call/jmp/bx/twin_jcc
    skip: int = 0  # ops jumped over by a conditional branch
    cell: object = None  # _Word/_Blob/_Table reference
    words: tuple = ()  # island _Word cells
    addr: int = 0
    resolved: int = 0  # conditional-branch target address


@dataclass
class _Func:
    index: int
    mode: Mode
    ops: list = field(default_factory=list)
    pool: list = field(default_factory=list)  # _Word cells
    tables: list = field(default_factory=list)  # bounded _Table objects
    ending_table: _Table | None = None
    twin_entry: bool = False
    addr: int = 0
    end: int = 0


_A_WIDTHS = {
    "nop": 4, "alu": 4, "movi": 4, "ldr": 4, "str": 4, "jcc": 4, "skip": 4,
    "jmp": 4, "call": 4, "bx": 4, "jtab": 4, "ret": 4, "hlt": 4,
    "twin_jcc": 4, "twin": 8,
}
_T_WIDTHS = {
    "nop": 2, "alu": 2, "movi": 2, "ldr": 2, "str": 2, "jcc": 2, "skip": 2,
    "jmp": 2, "call": 2, "bx": 2, "jtab": 2, "ret": 2, "hlt": 2,
}


def _op(mode, kind, **kw):
    width = (_A_WIDTHS if mode is Mode.A else _T_WIDTHS)[kind]
    return _Op(kind, width, **kw)


def _island_op(mode, cells):
    return _Op("island", 4 * len(cells), words=tuple(cells))


def _rand_word(rng):
    # Small values never collide with code addresses (all >= base_address).
    return rng.randrange(0x1000, 0xFFFF)


def _core_group(rng, mode):
    r = rng.random()
    if r < 0.45:
        if mode is Mode.A:
            payload = (rng.randrange(32), rng.randrange(16), rng.randrange(16), rng.randrange(256))
        else:
            payload = (rng.randrange(16), rng.randrange(256))
        return [_op(mode, "alu", payload=payload)]
    if r < 0.75:
        payload = (rng.randrange(16), rng.randrange(0x10000)) if mode is Mode.A else (rng.randrange(256),)
        return [_op(mode, "movi", payload=payload)]
    if r < 0.88:
        return [_op(mode, "nop")]
    # A short conditional skip over one instruction.
    return [_op(mode, "jcc", skip=1), _op(mode, "nop")]


class _Plan:
    """All rng-driven decisions for one binary, before layout and encoding."""

    def __init__(self, rng, cfg):
        self.rng = rng
        self.cfg = cfg
        self.funcs = []
        self.terminals = set()  # indices of appended landing functions
        self.twin_funcs = set()
        self.root_tables = {}  # Mode -> _Table
        self.strings = []  # shared _Blob pool
        self.decoys = None  # (host, trap_word, victim, hidden)
        self.use_rodata = False
        self.items = []  # layout items
        self._build()

    def _build(self):
        modes = self._draw_modes()
        endings = self._draw_endings(modes)
        self._add_terminals(modes, endings)
        self.funcs = [_Func(i, m) for i, m in enumerate(modes)]
        referrers = self._wire(modes, endings)
        self._choose_twins(referrers)
        self._plan_strings()
        self._build_bodies(endings, referrers)
        if self.cfg.overlap_decoys:
            self._plan_decoys()
        self._assemble_items()

    def _draw_modes(self):
        rng, cfg = self.rng, self.cfg
        count = rng.randint(*cfg.functions)
        if cfg.mode_mix == "a":
            return [Mode.A] * count
        if cfg.mode_mix == "t":
            return [Mode.T] * count
        t_count = min(3, max(1, sum(1 for _ in range(count - 1) if rng.random() < 0.4)))
        a_count = max(1, count - t_count)
        # Layout order doubles as index order: the entry function, then the
        # contiguous second-mode cluster, then the remaining functions.
        return [Mode.A] + [Mode.T] * t_count + [Mode.A] * (a_count - 1)

    def _draw_endings(self, modes):
        """Ending spec per function: ("ret"/"hlt"/("jmp", i)/("jtab", unbounded))."""
        rng, cfg = self.rng, self.cfg
        endings = []
        for i, mode in enumerate(modes):
            later_same = [j for j in range(i + 1, len(modes)) if modes[j] == mode]
            r = rng.random()
            if r < cfg.table_rate:
                unbounded = mode is Mode.T or rng.random() < cfg.unbounded_mix
                endings.append(("jtab", unbounded))
            elif r < cfg.table_rate + cfg.tail_jump_rate and later_same:
                endings.append(("jmp", rng.choice(later_same)))
            elif rng.random() < 0.15:
                endings.append(("hlt", None))
            else:
                endings.append(("ret", None))
        return endings

    def _add_terminals(self, modes, endings):
        """Append one-instruction landing functions for unbounded ending tables
        that would otherwise have no later same-mode target."""
        for mode in (Mode.T, Mode.A):
            needs = any(
                e[0] == "jtab" and e[1] and not any(x is mode for x in modes[i + 1 :])
                for i, (e, m) in enumerate(zip(endings, modes))
                if m is mode
            )
            if not needs:
                continue
            if mode is Mode.T:
                pos = max(i for i, m in enumerate(modes) if m is Mode.T) + 1
            else:
                pos = len(modes)
            modes.insert(pos, mode)
            endings.insert(pos, ("hlt", None))
            self.terminals = {t if t < pos else t + 1 for t in self.terminals}
            self.terminals.add(pos)
            for k, e in enumerate(endings):
                if e[0] == "jmp" and e[1] >= pos:
                    endings[k] = ("jmp", e[1] + 1)

    def _wire(self, modes, endings):
        """Choose how every non-entry function becomes reachable.

        Returns {function index: transfer op specs injected into its body}.
        Functions reached by a tail jump or as the first target of an
        unbounded ending table are already covered; the rest get a direct
        call or a slot in their mode's root dispatch table.
        """
        rng, cfg = self.rng, self.cfg
        injected = {f.index: [] for f in self.funcs}
        covered = {0}
        for i, e in enumerate(endings):
            if e[0] == "jmp":
                covered.add(e[1])
            if e[0] == "jtab" and e[1]:
                later = [j for j in range(i + 1, len(modes)) if modes[j] == modes[i]]
                if later:
                    covered.add(later[0])
        t_indices = [i for i, m in enumerate(modes) if m is Mode.T]
        hub = t_indices[0] if t_indices else None
        if hub is not None and hub != 0:
            injected[0].append(("bx", hub))
            covered.add(hub)
            if rng.random() < 0.5:
                injected[hub].append(("bx", 0))
        dispatched = {Mode.A: [], Mode.T: []}
        for i in range(1, len(modes)):
            if i in covered:
                continue
            mode = modes[i]
            if mode is Mode.T:
                prev_t = [j for j in t_indices if j < i]
                if prev_t and rng.random() < cfg.call_rate:
                    injected[prev_t[-1]].append(("call", i))
                else:
                    dispatched[Mode.T].append(i)
            else:
                earlier = [j for j in range(i) if modes[j] is Mode.A]
                if earlier and rng.random() < cfg.call_rate:
                    injected[rng.choice(earlier)].append(("call", i))
                else:
                    dispatched[Mode.A].append(i)
        if cfg.prefix_twins and not self._called_a_funcs(injected, modes):
            candidates = [
                i for i in range(1, len(modes)) if modes[i] is Mode.A and i not in self.terminals
            ]
            if candidates:
                pick = candidates[0]
                if pick in dispatched[Mode.A]:
                    dispatched[Mode.A].remove(pick)
                injected[0].append(("call", pick))
        for mode, members in dispatched.items():
            if not members:
                continue
            table = _Table(mode, bounded=False, entries=list(members))
            self.root_tables[mode] = table
            owner = hub if mode is Mode.T else 0
            injected[owner].append(("jcc_jtab", table))
        return injected

    @staticmethod
    def _called_a_funcs(injected, modes):
        return [
            spec[1]
            for specs in injected.values()
            for spec in specs
            if spec[0] == "call" and modes[spec[1]] is Mode.A
        ]

    def _choose_twins(self, referrers):
        """Pick called non-terminal mode-A functions whose entry will exist in
        prefixed and plain form; their caller gains a conditional branch to
        the plain entry four bytes past the function start."""
        if not self.cfg.prefix_twins:
            return
        rng = self.rng
        modes = [f.mode for f in self.funcs]
        callers = {}
        for j, specs in referrers.items():
            for spec in specs:
                if spec[0] == "call" and modes[spec[1]] is Mode.A:
                    callers.setdefault(spec[1], j)
        eligible = sorted(i for i in callers if i not in self.terminals)
        picked = [i for i in eligible if rng.random() < 0.8]
        if not picked and eligible:
            picked = [eligible[0]]
        for i in picked:
            self.twin_funcs.add(i)
            self.funcs[i].twin_entry = True
            referrers[callers[i]].append(("twin_jcc", i))

    def _plan_strings(self):
        rng = self.rng
        self.use_rodata = rng.random() < self.cfg.rodata_rate
        for _ in range(rng.randint(2, 4)):
            length = rng.randint(9, 14)
            text = bytes(rng.choice(b"abcdefghijklmnopqrstuvwxyz _-") for _ in range(length))
            self.strings.append(_Blob(text + b"\x00"))

    def _build_bodies(self, endings, referrers):
        rng, cfg = self.rng, self.cfg
        for f in self.funcs:
            if f.index in self.terminals:
                f.ops = [_op(f.mode, "hlt")]
                continue
            groups = []
            if f.twin_entry:
                inner = (rng.randrange(32), rng.randrange(16), rng.randrange(16), rng.randrange(256))
                groups.append([_op(Mode.A, "twin", payload=inner)])
            for _ in range(rng.randint(*cfg.body_ops)):
                groups.append(_core_group(rng, f.mode))
            if rng.random() < cfg.literal_rate:
                self._add_pool(f, groups)
            if f.mode is Mode.A and self.strings and rng.random() < cfg.string_rate:
                blob = rng.choice(self.strings)
                groups.append([_op(f.mode, "ldr", cell=blob, payload=(rng.randrange(16),))])
            if rng.random() < cfg.data_rate:
                self._add_island(f, groups)
            self._finish_body(f, groups, endings[f.index], referrers[f.index])

    def _add_pool(self, f, groups):
        rng = self.rng
        for _ in range(rng.randint(1, 3)):
            cell = _Word(_rand_word(rng))
            f.pool.append(cell)
            kind = "str" if rng.random() < 0.3 else "ldr"
            payload = (rng.randrange(16),) if f.mode is Mode.A else ()
            groups.append([_op(f.mode, kind, cell=cell, payload=payload)])

    def _add_island(self, f, groups):
        """Constant data embedded between instructions: every island word is
        loaded by a preceding instruction and the whole island is jumped over
        unconditionally (a conditional guard would make the island a required
        fallthrough, which no real program has)."""
        rng = self.rng
        cells = [_Word(_rand_word(rng)) for _ in range(rng.randint(1, 2))]
        group = []
        for cell in cells:
            payload = (rng.randrange(16),) if f.mode is Mode.A else ()
            group.append(_op(f.mode, "ldr", cell=cell, payload=payload))
        group.append(_op(f.mode, "skip", skip=1))
        group.append(_island_op(f.mode, cells))
        groups.append(group)

    def _finish_body(self, f, groups, ending, transfers):
        rng = self.rng
        lowest = 1 if f.twin_entry else 0  # nothing may precede a twin entry
        for spec in transfers:
            if spec[0] == "jcc_jtab":
                group = [_op(f.mode, "jcc", skip=1), _op(f.mode, "jtab", cell=spec[1])]
            elif spec[0] == "bx":
                group = [_op(f.mode, "jcc", skip=1), _op(f.mode, "bx", target=spec[1])]
            elif spec[0] == "twin_jcc":
                group = [_op(f.mode, "twin_jcc", target=spec[1])]
            else:
                group = [_op(f.mode, "call", target=spec[1])]
            groups.insert(rng.randrange(lowest, len(groups) + 1), group)
        groups.append(self._ending_group(f, ending))
        ops = []
        offset = 0
        for g in groups:
            if f.mode is Mode.T and g[-1].kind == "island":
                # Island words must land 4-aligned; pad in front of the whole
                # group so the skip distance of its guard branch is preserved.
                lead = sum(op.width for op in g[:-1])
                if (offset + lead) % 4:
                    g.insert(0, _op(f.mode, "nop"))
            for op in g:
                ops.append(op)
                offset += op.width
        f.ops = ops

    def _ending_group(self, f, ending):
        rng = self.rng
        kind, arg = ending
        if kind == "jmp":
            return [_op(f.mode, "jmp", target=arg)]
        if kind == "jtab":
            later_same = [g.index for g in self.funcs if g.mode is f.mode and g.index > f.index]
            if arg and later_same:  # unbounded
                entries = [later_same[0]]
                entries.extend(i for i in later_same[1:] if rng.random() < 0.3)
                f.ending_table = _Table(f.mode, False, entries)
                return [_op(f.mode, "jtab", cell=f.ending_table)]
            if not arg and f.mode is Mode.A:
                pool = [g.index for g in self.funcs if g.mode is Mode.A]
                k = min(len(pool), rng.randint(2, 4))
                table = _Table(Mode.A, True, [rng.choice(pool) for _ in range(k)])
                f.tables.append(table)
                return [_op(f.mode, "jtab", cell=table)]
            kind = "ret"  # no landing function available: degrade gracefully
        if kind == "hlt":
            return [_op(f.mode, "hlt")]
        return [_op(f.mode, "ret")]

    def _plan_decoys(self):
        """Two deliberately unsound layouts.

        The fallthrough trap: a data word placed hard against the end of its
        host function, followed by an unreferenced function. The linear
        continuation after the host covers the trap word and the function
        behind it in one block, so the result mixes spurious and real starts.

        The hidden function: real code placed behind a run of bytes that
        decode in no mode, reachable from no traversal start, so its
        instructions are missing from every candidate.
        """
        mode = Mode.T if any(f.mode is Mode.T for f in self.funcs) else Mode.A
        host = next(f for f in reversed(self.funcs) if f.mode is mode)
        victim = _Func(-1, mode)
        victim.ops = [
            _op(mode, "alu", payload=(1, 2) if mode is Mode.T else (1, 2, 3, 4)),
            _op(mode, "alu", payload=(2, 3) if mode is Mode.T else (2, 3, 4, 5)),
            _op(mode, "ret"),
        ]
        hidden = _Func(-2, mode)
        hidden.ops = [
            _op(mode, "movi", payload=(7,) if mode is Mode.T else (7, 9)),
            _op(mode, "ret"),
        ]
        trap_word = b"\x00\x00" if mode is Mode.T else b"\x00\x00\x00\x00"
        self.decoys = (host, trap_word, victim, hidden)

    def _assemble_items(self):
        rng, cfg = self.rng, self.cfg
        items = []

        def pad():
            if not items or rng.random() >= cfg.padding_rate:
                return
            items.append(("pad", rng.randint(*cfg.padding_len)))

        t_funcs = [f for f in self.funcs if f.mode is Mode.T]
        hub = t_funcs[0] if t_funcs else None
        for f in self.funcs:
            # Padding goes in front of a function so a code-labeled pad run
            # always falls through into a real instruction.
            pad()
            items.append(("func", f))
            if self.decoys and f is self.decoys[0]:
                items.append(("raw", self.decoys[1]))
                items.append(("func", self.decoys[2]))
            if f.index == 0 and f.mode is Mode.A and Mode.A in self.root_tables:
                items.append(("table", self.root_tables[Mode.A]))
            if hub is not None and f is hub and Mode.T in self.root_tables:
                items.append(("table", self.root_tables[Mode.T]))
        if self.strings and not self.use_rodata:
            items.append(("strings",))
        if self.decoys:
            items.append(("raw", b"\xff" * 8))
            items.append(("func", self.decoys[3]))
        self.items = items


# --- layout and encoding -------------------------------------------------------


def _layout(plan, base):
    """Assign addresses to every op, data cell, table, blob, and raw run.

    Returns (end address, ignored addresses, raw placements); raw placements
    are (start, bytes) pairs. Padding bytes and alignment gaps are ignored.
    """
    cursor = base
    ignored = set()
    raws = []

    def align(n):
        nonlocal cursor
        gap = -cursor % n
        ignored.update(range(cursor, cursor + gap))
        cursor += gap

    for item in plan.items:
        kind = item[0]
        if kind == "func":
            f = item[1]
            align(4)
            f.addr = cursor
            for op in f.ops:
                op.addr = cursor
                cursor += op.width
                if op.kind == "island":
                    for i, cell in enumerate(op.words):
                        cell.addr = op.addr + 4 * i
            if f.pool or f.tables or f.ending_table:
                align(4)
            for cell in f.pool:
                cell.addr = cursor
                cursor += 4
            for table in f.tables + ([f.ending_table] if f.ending_table else []):
                table.addr = cursor
                cursor += 4 * len(table.entries)
            f.end = cursor
            for i, op in enumerate(f.ops):
                if op.skip:
                    op.resolved = f.ops[i + 1 + op.skip].addr
        elif kind == "table":
            align(4)
            item[1].addr = cursor
            cursor += 4 * len(item[1].entries)
        elif kind == "pad":
            length = item[1]
            ignored.update(range(cursor, cursor + length))
            cursor += length
        elif kind == "raw":
            raws.append((cursor, item[1]))
            cursor += len(item[1])
        elif kind == "strings":
            for blob in plan.strings:
                align(4)
                blob.addr = cursor
                cursor += len(blob.data)
    align(4)
    return cursor, ignored, raws


def _encode_op(op, f, funcs):
    a, kind = op.addr, op.kind
    if kind == "island":
        return b"".join(c.value.to_bytes(4, "little") for c in op.words)
    if f.mode is Mode.A:
        if kind == "nop":
            return isa.a_nop()
        if kind == "alu":
            return isa.a_alu(*op.payload)
        if kind == "movi":
            return isa.a_movi(*op.payload)
        if kind == "ldr":
            return isa.a_ldr(a, op.cell.addr, *op.payload)
        if kind == "str":
            return isa.a_str(a, op.cell.addr, *op.payload)
        if kind == "jcc":
            return isa.a_jcc(a, op.resolved)
        if kind == "skip":
            return isa.a_jmp(a, op.resolved)
        if kind == "twin_jcc":
            return isa.a_jcc(a, funcs[op.target].addr + 4)
        if kind == "jmp":
            return isa.a_jmp(a, funcs[op.target].addr)
        if kind == "call":
            return isa.a_call(a, funcs[op.target].addr)
        if kind == "bx":
            target = funcs[op.target]
            return isa.a_bx(a, target.addr, target.mode)
        if kind == "jtab":
            return isa.a_jtab(a, op.cell.addr, len(op.cell.entries) if op.cell.bounded else 0)
        if kind == "twin":
            return isa.a_pfx() + isa.a_alu(*op.payload)
        if kind == "ret":
            return isa.a_ret()
        if kind == "hlt":
            return isa.a_hlt()
    else:
        if kind == "nop":
            return isa.t_nop()
        if kind == "alu":
            return isa.t_alu(*op.payload)
        if kind == "movi":
            return isa.t_movi(*op.payload)
        if kind == "ldr":
            return isa.t_ldr(a, op.cell.addr)
        if kind == "str":
            return isa.t_str(a, op.cell.addr)
        if kind == "jcc":
            return isa.t_bcc(a, op.resolved)
        if kind == "skip":
            return isa.t_b(a, op.resolved)
        if kind == "jmp":
            return isa.t_b(a, funcs[op.target].addr)
        if kind == "call":
            return isa.t_call(a, funcs[op.target].addr)
        if kind == "bx":
            return isa.t_bx(a, funcs[op.target].addr)
        if kind == "jtab":
            return isa.t_jtab(a, op.cell.addr)
        if kind == "ret":
            return isa.t_ret()
        if kind == "hlt":
            return isa.t_hlt()
    raise GenerationError(f"cannot encode op {kind!r} in mode {f.mode}")


def _encode(plan, base, size, raws):
    buf = bytearray(size - base)
    truth = []
    twin_pairs = []

    def put(addr, data):
        buf[addr - base : addr - base + len(data)] = data

    funcs = plan.funcs
    for item in plan.items:
        kind = item[0]
        if kind == "func":
            f = item[1]
            for op in f.ops:
                put(op.addr, _encode_op(op, f, funcs))
                if op.kind == "island":
                    continue
                if op.kind == "twin":
                    truth.append(TrueInstruction(op.addr, Mode.A, 8))
                    truth.append(TrueInstruction(op.addr + 4, Mode.A, 4))
                    twin_pairs.append((op.addr, op.addr + 4))
                else:
                    truth.append(TrueInstruction(op.addr, f.mode, op.width))
            for cell in f.pool:
                put(cell.addr, cell.value.to_bytes(4, "little"))
            for table in f.tables + ([f.ending_table] if f.ending_table else []):
                _put_table(put, table, funcs)
        elif kind == "table":
            _put_table(put, item[1], funcs)
        elif kind == "strings":
            for blob in plan.strings:
                put(blob.addr, blob.data)
    for addr, data in raws:
        put(addr, data)
    return bytes(buf), truth, twin_pairs


def _put_table(put, table, funcs):
    for i, entry in enumerate(table.entries):
        put(table.addr + 4 * i, funcs[entry].addr.to_bytes(4, "little"))


def _generate_once(cfg, index, attempt):
    rng = random.Random(f"{cfg.seed}:{index}:{attempt}")
    plan = _Plan(rng, cfg)
    base = cfg.base_address
    text_end, ignored, raws = _layout(plan, base)
    sections = [Section("text", base, text_end - base, 0, True)]
    if plan.strings and plan.use_rodata:
        # Place the string blobs in a non-executable section past the text.
        cursor = ro_base = text_end + 16
        for blob in plan.strings:
            cursor += -cursor % 4
            blob.addr = cursor
            cursor += len(blob.data)
        sections.append(Section("rodata", ro_base, cursor - ro_base, text_end - base, False))
    blob, truth, twin_pairs = _encode(plan, base, text_end, raws)
    whole = bytearray(blob)
    if plan.strings and plan.use_rodata:
        ro = sections[1]
        ro_blob = bytearray(ro.size)
        for b in plan.strings:
            ro_blob[b.addr - ro.vaddr : b.addr - ro.vaddr + len(b.data)] = b.data
        whole.extend(ro_blob)
    entry = plan.funcs[0]
    image = RawImage(tuple(sections), bytes(whole), ((entry.addr, entry.mode),))
    gt = GroundTruth(tuple(truth), frozenset(ignored), tuple(twin_pairs))
    _self_check(image, gt)
    return image, gt


def _self_check(image, gt):
    """Every emitted instruction must re-decode with the recorded identity."""
    for insn in gt.true_insns:
        decoded = isa.decode(image, insn.addr, insn.mode)
        if decoded is None or decoded.size != insn.size:
            raise GenerationError(
                f"planted instruction at {insn.addr:#x}/{insn.mode} does not re-decode"
            )


def plant_consistent(image, gt, weights):
    """True when `weights` reproduce the ground truth on this binary.

    Checks, in order: candidate soundness, a well-defined block partition,
    every inferred constraint satisfied by the planted weights, and exact
    end-to-end recovery under conflict resolution.
    """
    try:
        result = generate_candidates(image)
        if not check_soundness(result.candidate_set, gt).sound:
            return False
        partition = derive_partition(result.candidate_set, gt)
        ctx = build_context(image, result)
        competing = competing_blocks(result.candidate_set)
        counts = {b: match_counts(ctx, b) for b in competing}
        problem = build_problem(competing, partition, counts)
        constraints = infer_optimized(problem)
    except ModelError:
        return False
    if any(not c.satisfied(weights) for c in constraints):
        return False
    produced = instruction_keys(resolve(image, result, weights).blocks)
    wanted = gt.true_keys()
    if not wanted <= produced:
        return False
    return all(k[0] in gt.ignored for k in produced - wanted)


def generate(cfg, index=0):
    """One (RawImage, GroundTruth) pair, deterministic in (cfg.seed, index)."""
    cfg.validate()
    if cfg.plant is None:
        try:
            return _generate_once(cfg, index, 0)
        except isa.EncodingRangeError as exc:
            raise GenerationError(f"binary {index}: {exc}") from exc
    for attempt in range(cfg.plant_attempts):
        try:
            image, gt = _generate_once(cfg, index, attempt)
        except (isa.EncodingRangeError, ModelError):
            continue
        if plant_consistent(image, gt, cfg.plant):
            return image, gt
    raise GenerationError(
        f"binary {index}: no plant-consistent layout in {cfg.plant_attempts} attempts"
    )


# --- corpus files ----------------------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    binary_id: str
    image_path: str
    sidecar_path: str
    split: str
    config_hash: str


def split_ids(cfg):
    """Deterministic train/validate assignment over binary indices."""
    rng = random.Random(f"{cfg.seed}:split")
    train = set(rng.sample(range(cfg.binaries), round(cfg.binaries * cfg.train_split)))
    return [SPLIT_TRAIN if i in train else SPLIT_VALIDATE for i in range(cfg.binaries)]


def gen_corpus(cfg, out_dir):
    """Write cfg.binaries image/sidecar pairs plus a manifest; returns its path."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    splits = split_ids(cfg)
    entries = []
    for i in range(cfg.binaries):
        image, gt = generate(cfg, i)
        binary_id = f"bin{i:04d}"
        image_name = f"{binary_id}.image"
        sidecar_name = f"{binary_id}.truth"
        save_image(image, os.path.join(out_dir, image_name), f"{binary_id}.bin")
        save_sidecar(gt, os.path.join(out_dir, sidecar_name))
        entries.append(
            CorpusEntry(binary_id, image_name, sidecar_name, splits[i], config_hash(cfg, i))
        )
    manifest_path = os.path.join(out_dir, "manifest.txt")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(format_corpus_manifest(config_hash(cfg), entries))
    return manifest_path


def format_corpus_manifest(config_tag, entries):
    lines = ["CORPUS 1", f"CONFIG {config_tag}"]
    for e in entries:
        lines.append(f"BIN {e.binary_id} {e.image_path} {e.sidecar_path} {e.split} {e.config_hash}")
    return "\n".join(lines) + "\n"


def parse_corpus_manifest(text):
    entries = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if not header_seen:
            if parts != ["CORPUS", "1"]:
                raise ParseError("manifest must start with 'CORPUS 1'", lineno)
            header_seen = True
        elif parts[0] == "CONFIG":
            if len(parts) != 2:
                raise ParseError("CONFIG takes one hash field", lineno)
        elif parts[0] == "BIN":
            if len(parts) != 6:
                raise ParseError("BIN takes id, image, sidecar, split, hash", lineno)
            _, binary_id, image_path, sidecar_path, split, chash = parts
            if split not in (SPLIT_TRAIN, SPLIT_VALIDATE):
                raise ParseError(f"unknown split tag {split!r}", lineno)
            entries.append(CorpusEntry(binary_id, image_path, sidecar_path, split, chash))
        else:
            raise ParseError(f"unknown manifest record {parts[0]!r}", lineno)
    if not header_seen:
        raise ParseError("empty corpus manifest")
    return tuple(entries)


def load_corpus(manifest_path):
    """Parse a manifest; returns (entries, directory)."""
    with open(manifest_path, encoding="utf-8") as fh:
        entries = parse_corpus_manifest(fh.read())
    return entries, os.path.dirname(os.path.abspath(manifest_path))


def load_corpus_binary(entry, directory):
    """Load one corpus member's image and ground truth."""
    image = load_image(os.path.join(directory, entry.image_path))
    gt = load_sidecar(os.path.join(directory, entry.sidecar_path))
    return image, gt


# --- hand-assembled reference fixture --------------------------------------------

FIXTURE_WINDOW = (0x19754, 0x19764)


def reference_interleaving_fixture():
    """A 28-byte image whose candidate set reproduces the canonical
    eight-block two-mode interleaving window used by the golden tests.

    Layout (base 0x19748, entry points in both modes):
      0x19748  A: call 0x19758
      0x1974c  T: ldr [0x19754]; bcc 0x19756
      0x19750  T: bcc 0x1975a; hlt
      0x19754  data word, loaded above, undecodable in mode T
      0x19758  A: nop; nop; ret      <- the called code; its trailing bytes
                                        also decode in mode T and branch back
                                        into the window, creating the overlaps
    """
    base = 0x19748
    blob = bytearray()
    blob += isa.a_call(0x19748, 0x19758)
    blob += isa.t_ldr(0x1974C, 0x19754) + isa.t_bcc(0x1974E, 0x19756)
    blob += isa.t_bcc(0x19750, 0x1975A) + isa.t_hlt()
    blob += isa.a_alu(0, 0, 0, 0)
    blob += isa.a_nop(0x00, 0x10, 0x00)
    blob += isa.a_nop(0x00, 0x03, 0xF6)
    blob += isa.a_ret(0x00, 0x03, 0xF4)
    image = RawImage(
        (Section("text", base, len(blob), 0, True),),
        bytes(blob),
        ((0x19748, Mode.A), (0x1974C, Mode.T)),
    )
    truth = (
        TrueInstruction(0x19748, Mode.A, 4),
        TrueInstruction(0x1974C, Mode.T, 2),
        TrueInstruction(0x1974E, Mode.T, 2),
        TrueInstruction(0x19750, Mode.T, 2),
        TrueInstruction(0x19752, Mode.T, 2),
        TrueInstruction(0x19758, Mode.A, 4),
        TrueInstruction(0x1975C, Mode.A, 4),
        TrueInstruction(0x19760, Mode.A, 4),
    )
    return image, GroundTruth(truth)


def contradiction_fixture_pair():
    """Two byte-identical images labeled with opposing ground truths.

    The first labels the interleaving window's mode-A chain as the real code,
    the second the overlapping mode-T chain. Identical bytes mean identical
    candidate sets and heuristic match counts, so the two binaries demand
    strictly opposite weight orderings: no weight assignment satisfies the
    union of their constraints.
    """
    image, truth_a = reference_interleaving_fixture()
    prologue = tuple(t for t in truth_a.true_insns if t.addr < 0x19754)
    t_chain = tuple(
        TrueInstruction(addr, Mode.T, 2)
        for addr in (0x19756, 0x19758, 0x1975A, 0x1975C, 0x1975E, 0x19760, 0x19762)
    )
    return (image, truth_a), (image, GroundTruth(prologue + t_chain))


def write_contradiction_corpus(out_dir):
    """Materialize the contradiction pair as a two-binary training corpus."""
    os.makedirs(out_dir, exist_ok=True)
    tag = hashlib.sha256(b"contradiction-fixture").hexdigest()[:16]
    entries = []
    for i, (image, gt) in enumerate(contradiction_fixture_pair()):
        binary_id = f"bin{i:04d}"
        save_image(image, os.path.join(out_dir, f"{binary_id}.image"), f"{binary_id}.bin")
        save_sidecar(gt, os.path.join(out_dir, f"{binary_id}.truth"))
        entries.append(
            CorpusEntry(binary_id, f"{binary_id}.image", f"{binary_id}.truth", SPLIT_TRAIN, tag)
        )
    manifest_path = os.path.join(out_dir, "manifest.txt")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(format_corpus_manifest(tag, entries))
    return manifest_path
