"""MiniISA: a two-mode fixed-width instruction set for the disassembly engine.

Mode A instructions are 4 bytes at 4-aligned addresses, mode T instructions
2 bytes at 2-aligned addresses; operands are little endian. The first byte is
the opcode. Opcode bytes >= 0x40 never decode in A, bytes >= 0x20 never decode
in T, so most random bytes are invalid in at least one mode.

The one exception to the fixed widths is the prefix byte PFX (A mode): it
decodes together with the following A instruction as a single 8-byte
instruction, producing byte-overlapping "twin" decodes at a and a+4. The full
table lives in docs/isa.md.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .image import OutOfSection
from .model import Mode


class Kind(enum.Enum):
    FALLTHROUGH = "fallthrough"
    LOAD = "load"
    STORE = "store"
    DIRECT_JUMP = "direct_jump"
    COND_JUMP = "cond_jump"
    DIRECT_CALL = "direct_call"
    MODE_SWITCH = "mode_switch"
    JUMP_TABLE = "jump_table"
    RETURN = "return"
    HALT = "halt"


# Kinds that terminate a block (anything that redirects or stops control flow).
BLOCK_ENDERS = frozenset(
    {
        Kind.DIRECT_JUMP,
        Kind.COND_JUMP,
        Kind.DIRECT_CALL,
        Kind.MODE_SWITCH,
        Kind.JUMP_TABLE,
        Kind.RETURN,
        Kind.HALT,
    }
)

# Kinds whose execution can continue at the next address (used both by the
# backward invalidation rules and by the fallthrough heuristic).
CAN_FALL_THROUGH = frozenset({Kind.FALLTHROUGH, Kind.LOAD, Kind.STORE, Kind.COND_JUMP, Kind.DIRECT_CALL})

# Kinds invalidated when the *next* address has no valid decode: plain
# fallthrough always needs a successor; a conditional jump needs both paths.
NEEDS_FALLTHROUGH = frozenset({Kind.FALLTHROUGH, Kind.LOAD, Kind.STORE, Kind.COND_JUMP})


@dataclass(frozen=True)
class DataAccess:
    addr: int
    size: int
    kind: str  # "literal" or "table_entry"


@dataclass(frozen=True)
class DecodedInstruction:
    addr: int
    mode: Mode
    size: int
    kind: Kind
    mnemonic: str
    targets: tuple = ()  # direct control transfers: ((addr, Mode), ...)
    accesses: tuple = ()  # DataAccess records
    table_bound: int | None = None  # entry count for bounded jump tables

    @property
    def end(self):
        return self.addr + self.size


A_WIDTH = 4
T_WIDTH = 2
TABLE_ENTRY_SIZE = 4
A_OPCODE_LIMIT = 0x40
T_OPCODE_LIMIT = 0x20
PFX_OPCODE = 0x0B

_A_ALU_RANGE = range(0x20, 0x40)
_T_ALU_RANGE = range(0x10, 0x20)


def _sext(value, bits):
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def _align4(addr):
    return addr & ~3


def decode(image, addr, mode):
    """Decode one instruction, or return None if the encoding is invalid.

    Raises OutOfSection when addr is not inside an executable section.
    """
    if mode is Mode.A:
        return _decode_a(image, addr, allow_prefix=True)
    if mode is Mode.T:
        return _decode_t(image, addr)
    raise ValueError("decode mode must be A or T")


def _read_code(image, addr, n):
    sec = image.section_at(addr)
    if sec is None or not sec.executable:
        raise OutOfSection(f"decode at {addr:#x} outside executable sections")
    if addr + n > sec.end:
        return None
    return image.read(addr, n)


def _decode_a(image, addr, allow_prefix):
    if addr % A_WIDTH:
        return None
    raw = _read_code(image, addr, A_WIDTH)
    if raw is None:
        return None
    op = raw[0]
    if op >= A_OPCODE_LIMIT:
        return None
    pc = addr + A_WIDTH
    if op == 0x00:
        return DecodedInstruction(addr, Mode.A, A_WIDTH, Kind.FALLTHROUGH, "nop")
    if op == 0x01:
        return DecodedInstruction(addr, Mode.A, A_WIDTH, Kind.HALT, "hlt")
    if op == 0x02:
        return DecodedInstruction(addr, Mode.A, A_WIDTH, Kind.RETURN, "ret")
    if op in (0x03, 0x04, 0x05):
        off = _sext(int.from_bytes(raw[1:4], "little"), 24)
        target = pc + off * A_WIDTH
        kind, name = {
            0x03: (Kind.DIRECT_JUMP, "jmp"),
            0x04: (Kind.COND_JUMP, "jcc"),
            0x05: (Kind.DIRECT_CALL, "call"),
        }[op]
        return DecodedInstruction(addr, Mode.A, A_WIDTH, kind, f"{name} {target:#x}", targets=((target, Mode.A),))
    if op in (0x06, 0x07):
        off = _sext(int.from_bytes(raw[2:4], "little"), 16)
        loc = pc + off * 4
        kind = Kind.LOAD if op == 0x06 else Kind.STORE
        name = "ldr" if op == 0x06 else "str"
        return DecodedInstruction(
            addr, Mode.A, A_WIDTH, kind, f"{name} r{raw[1]}, [{loc:#x}]",
            accesses=(DataAccess(loc, 4, "literal"),),
        )
    if op == 0x08:
        bound = raw[1]
        off = _sext(int.from_bytes(raw[2:4], "little"), 16)
        base = pc + off * 4
        return DecodedInstruction(
            addr, Mode.A, A_WIDTH, Kind.JUMP_TABLE, f"jtab [{base:#x}], {bound}",
            accesses=(DataAccess(base, TABLE_ENTRY_SIZE, "table_entry"),),
            table_bound=bound if bound else None,
        )
    if op == 0x09:
        tmode = Mode.T if raw[1] & 1 else Mode.A
        off = _sext(int.from_bytes(raw[2:4], "little"), 16)
        target = pc + off * 2
        return DecodedInstruction(
            addr, Mode.A, A_WIDTH, Kind.MODE_SWITCH, f"bx {target:#x} ({tmode})",
            targets=((target, tmode),),
        )
    if op == 0x0A:
        imm = int.from_bytes(raw[2:4], "little")
        return DecodedInstruction(addr, Mode.A, A_WIDTH, Kind.FALLTHROUGH, f"movi r{raw[1]}, {imm:#x}")
    if op == PFX_OPCODE:
        if not allow_prefix:
            return None
        try:
            inner = _decode_a(image, addr + A_WIDTH, allow_prefix=False)
        except OutOfSection:
            # The prefix byte sits in the last word of the section, so the
            # combined instruction cannot fit: there is no prefixed form.
            inner = None
        if inner is None:
            return None
        return DecodedInstruction(
            addr, Mode.A, 2 * A_WIDTH, inner.kind, f"pfx {inner.mnemonic}",
            targets=inner.targets, accesses=inner.accesses, table_bound=inner.table_bound,
        )
    if op in _A_ALU_RANGE:
        return DecodedInstruction(addr, Mode.A, A_WIDTH, Kind.FALLTHROUGH, f"alu{op - 0x20} r{raw[1]}, r{raw[2]}, {raw[3]}")
    return None


def _decode_t(image, addr):
    if addr % T_WIDTH:
        return None
    raw = _read_code(image, addr, T_WIDTH)
    if raw is None:
        return None
    op, arg = raw[0], raw[1]
    if op >= T_OPCODE_LIMIT:
        return None
    pc = addr + T_WIDTH
    if op == 0x00:
        return DecodedInstruction(addr, Mode.T, T_WIDTH, Kind.FALLTHROUGH, "tnop")
    if op == 0x01:
        return DecodedInstruction(addr, Mode.T, T_WIDTH, Kind.HALT, "thlt")
    if op == 0x02:
        return DecodedInstruction(addr, Mode.T, T_WIDTH, Kind.RETURN, "tret")
    if op in (0x03, 0x04, 0x05):
        target = pc + _sext(arg, 8) * T_WIDTH
        kind, name = {
            0x03: (Kind.DIRECT_JUMP, "tb"),
            0x04: (Kind.COND_JUMP, "tbcc"),
            0x05: (Kind.DIRECT_CALL, "tcall"),
        }[op]
        return DecodedInstruction(addr, Mode.T, T_WIDTH, kind, f"{name} {target:#x}", targets=((target, Mode.T),))
    if op in (0x06, 0x07):
        loc = _align4(pc) + arg * 4
        kind = Kind.LOAD if op == 0x06 else Kind.STORE
        name = "tldr" if op == 0x06 else "tstr"
        return DecodedInstruction(
            addr, Mode.T, T_WIDTH, kind, f"{name} [{loc:#x}]",
            accesses=(DataAccess(loc, 4, "literal"),),
        )
    if op == 0x08:
        base = _align4(pc) + arg * 4
        return DecodedInstruction(
            addr, Mode.T, T_WIDTH, Kind.JUMP_TABLE, f"tjtab [{base:#x}]",
            accesses=(DataAccess(base, TABLE_ENTRY_SIZE, "table_entry"),),
            table_bound=None,
        )
    if op == 0x09:
        target = _align4(pc) + _sext(arg, 8) * 4
        return DecodedInstruction(
            addr, Mode.T, T_WIDTH, Kind.MODE_SWITCH, f"tbx {target:#x} (A)",
            targets=((target, Mode.A),),
        )
    if op == 0x0A:
        return DecodedInstruction(addr, Mode.T, T_WIDTH, Kind.FALLTHROUGH, f"tmovi {arg:#x}")
    if op in _T_ALU_RANGE:
        return DecodedInstruction(addr, Mode.T, T_WIDTH, Kind.FALLTHROUGH, f"talu{op - 0x10} {arg}")
    return None


def superset_decode(image):
    """Every valid decode at every executable-section address, both code modes.

    Returns {(addr, mode): DecodedInstruction}. Unaligned or invalid encodings
    simply do not appear.
    """
    out = {}
    for sec in image.executable_sections():
        for addr in range(sec.vaddr + (-sec.vaddr % A_WIDTH), sec.end, A_WIDTH):
            insn = _decode_a(image, addr, allow_prefix=True)
            if insn is not None:
                out[(addr, Mode.A)] = insn
        for addr in range(sec.vaddr + (-sec.vaddr % T_WIDTH), sec.end, T_WIDTH):
            insn = _decode_t(image, addr)
            if insn is not None:
                out[(addr, Mode.T)] = insn
    return out


# --- assembler helpers (used by the corpus generator and tests) -------------


class EncodingRangeError(Exception):
    """A pc-relative operand does not fit its field."""


def _fit(value, bits, what):
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not lo <= value <= hi:
        raise EncodingRangeError(f"{what} offset {value} outside [{lo}, {hi}]")
    return value & ((1 << bits) - 1)


def _fit_unsigned(value, bits, what):
    if not 0 <= value < (1 << bits):
        raise EncodingRangeError(f"{what} field {value} outside [0, {(1 << bits) - 1}]")
    return value


def _rel(addr, target, unit, bits, what):
    delta = target - (addr + A_WIDTH)
    if delta % unit:
        raise EncodingRangeError(f"{what} target {target:#x} not {unit}-aligned to pc")
    return _fit(delta // unit, bits, what)


def a_nop(b1=0, b2=0, b3=0):
    return bytes((0x00, b1, b2, b3))


def a_hlt(b1=0, b2=0, b3=0):
    return bytes((0x01, b1, b2, b3))


def a_ret(b1=0, b2=0, b3=0):
    return bytes((0x02, b1, b2, b3))


def _a_branch(op, addr, target, what):
    enc = _rel(addr, target, A_WIDTH, 24, what)
    return bytes((op,)) + enc.to_bytes(3, "little")


def a_jmp(addr, target):
    return _a_branch(0x03, addr, target, "jmp")


def a_jcc(addr, target):
    return _a_branch(0x04, addr, target, "jcc")


def a_call(addr, target):
    return _a_branch(0x05, addr, target, "call")


def _reg(value, what):
    return _fit_unsigned(value, 4, f"{what} register")


def _a_mem(op, addr, loc, reg, what):
    delta = loc - (addr + A_WIDTH)
    if delta % 4:
        raise EncodingRangeError(f"{what} location {loc:#x} not word-aligned to pc")
    enc = _fit(delta // 4, 16, what)
    return bytes((op, _reg(reg, what))) + enc.to_bytes(2, "little")


def a_ldr(addr, loc, reg=0):
    return _a_mem(0x06, addr, loc, reg, "ldr")


def a_str(addr, loc, reg=0):
    return _a_mem(0x07, addr, loc, reg, "str")


def a_jtab(addr, base, bound=0):
    delta = base - (addr + A_WIDTH)
    if delta % 4:
        raise EncodingRangeError(f"jtab base {base:#x} not word-aligned to pc")
    enc = _fit(delta // 4, 16, "jtab")
    return bytes((0x08, _fit_unsigned(bound, 8, "jtab bound"))) + enc.to_bytes(2, "little")


def a_bx(addr, target, tmode):
    delta = target - (addr + A_WIDTH)
    if delta % 2:
        raise EncodingRangeError(f"bx target {target:#x} not half-aligned to pc")
    enc = _fit(delta // 2, 16, "bx")
    return bytes((0x09, 1 if tmode is Mode.T else 0)) + enc.to_bytes(2, "little")


def a_movi(reg=0, imm=0):
    return bytes((0x0A, _reg(reg, "movi"))) + int(imm).to_bytes(2, "little")


def a_pfx(b1=0, b2=0, b3=0):
    return bytes((PFX_OPCODE, b1, b2, b3))


def a_alu(op=0, r1=0, r2=0, imm=0):
    if op not in range(0x20):
        raise EncodingRangeError("alu op outside [0, 31]")
    return bytes((0x20 + op, _reg(r1, "alu"), _reg(r2, "alu"), _fit_unsigned(imm, 8, "alu imm")))


def t_nop(arg=0):
    return bytes((0x00, arg))


def t_hlt(arg=0):
    return bytes((0x01, arg))


def t_ret(arg=0):
    return bytes((0x02, arg))


def _t_branch(op, addr, target, what):
    delta = target - (addr + T_WIDTH)
    if delta % T_WIDTH:
        raise EncodingRangeError(f"{what} target {target:#x} not half-aligned")
    return bytes((op, _fit(delta // T_WIDTH, 8, what)))


def t_b(addr, target):
    return _t_branch(0x03, addr, target, "tb")


def t_bcc(addr, target):
    return _t_branch(0x04, addr, target, "tbcc")


def t_call(addr, target):
    return _t_branch(0x05, addr, target, "tcall")


def _t_mem(op, addr, loc, what):
    delta = loc - _align4(addr + T_WIDTH)
    if delta % 4:
        raise EncodingRangeError(f"{what} location {loc:#x} not word-aligned")
    return bytes((op, _fit_unsigned(delta // 4, 8, what)))


def t_ldr(addr, loc):
    return _t_mem(0x06, addr, loc, "tldr")


def t_str(addr, loc):
    return _t_mem(0x07, addr, loc, "tstr")


def t_jtab(addr, base):
    return _t_mem(0x08, addr, base, "tjtab")


def t_bx(addr, target):
    delta = target - _align4(addr + T_WIDTH)
    if delta % 4:
        raise EncodingRangeError(f"tbx target {target:#x} not word-aligned")
    return bytes((0x09, _fit(delta // 4, 8, "tbx")))


def t_movi(imm=0):
    return bytes((0x0A, imm & 0xFF))


def t_alu(op=0, arg=0):
    if op not in range(0x10):
        raise EncodingRangeError("talu op outside [0, 15]")
    return bytes((0x10 + op, arg))
