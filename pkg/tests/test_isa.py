"""Instruction encodings: width law, decode/encode agreement, edge handling."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wisdasm import isa
from wisdasm.image import make_image
from wisdasm.isa import (
    A_WIDTH,
    EncodingRangeError,
    Kind,
    T_WIDTH,
    decode,
    superset_decode,
)
from wisdasm.model import Mode

BASE = 0x40000


def image_of(data, base=BASE):
    return make_image([("text", base, bytes(data), True)])


# --- fixed-width law and simple forms ---------------------------------------


@pytest.mark.parametrize(
    "raw,kind,mnemonic",
    [
        (isa.a_nop(), Kind.FALLTHROUGH, "nop"),
        (isa.a_hlt(), Kind.HALT, "hlt"),
        (isa.a_ret(), Kind.RETURN, "ret"),
        (isa.a_movi(3, 0x1234), Kind.FALLTHROUGH, "movi r3, 0x1234"),
        (isa.a_alu(5, 1, 2, 9), Kind.FALLTHROUGH, "alu5 r1, r2, 9"),
    ],
)
def test_a_simple_forms(raw, kind, mnemonic):
    insn = decode(image_of(raw), BASE, Mode.A)
    assert (insn.size, insn.kind, insn.mnemonic) == (A_WIDTH, kind, mnemonic)
    assert insn.targets == () and insn.accesses == ()


@pytest.mark.parametrize(
    "raw,kind",
    [
        (isa.t_nop(), Kind.FALLTHROUGH),
        (isa.t_hlt(), Kind.HALT),
        (isa.t_ret(), Kind.RETURN),
        (isa.t_movi(7), Kind.FALLTHROUGH),
        (isa.t_alu(3, 1), Kind.FALLTHROUGH),
    ],
)
def test_t_simple_forms(raw, kind):
    insn = decode(image_of(raw), BASE, Mode.T)
    assert (insn.size, insn.kind) == (T_WIDTH, kind)


# --- transfer targets round-trip ---------------------------------------------

a_offsets = st.integers(-500, 500)
t_offsets = st.integers(-120, 120)


@given(a_offsets, st.sampled_from(["jmp", "jcc", "call"]))
def test_a_branch_target_round_trip(off, which):
    target = BASE + A_WIDTH + off * A_WIDTH
    enc = {"jmp": isa.a_jmp, "jcc": isa.a_jcc, "call": isa.a_call}[which]
    insn = decode(image_of(enc(BASE, target)), BASE, Mode.A)
    kind = {"jmp": Kind.DIRECT_JUMP, "jcc": Kind.COND_JUMP, "call": Kind.DIRECT_CALL}[which]
    assert insn.kind is kind
    assert insn.targets == ((target, Mode.A),)


@given(t_offsets, st.sampled_from(["b", "bcc", "call"]))
def test_t_branch_target_round_trip(off, which):
    target = BASE + T_WIDTH + off * T_WIDTH
    enc = {"b": isa.t_b, "bcc": isa.t_bcc, "call": isa.t_call}[which]
    insn = decode(image_of(enc(BASE, target)), BASE, Mode.T)
    assert insn.targets == ((target, Mode.T),)


@given(a_offsets, st.sampled_from([Mode.A, Mode.T]))
def test_a_mode_exchange_round_trip(off, tmode):
    target = BASE + A_WIDTH + off * 2
    insn = decode(image_of(isa.a_bx(BASE, target, tmode)), BASE, Mode.A)
    assert insn.kind is Kind.MODE_SWITCH
    assert insn.targets == ((target, tmode),)


@given(t_offsets)
def test_t_interworking_switches_to_default_mode(off):
    target = ((BASE + T_WIDTH + 3) & ~3) + off * 4
    insn = decode(image_of(isa.t_bx(BASE, target)), BASE, Mode.T)
    assert insn.kind is Kind.MODE_SWITCH
    assert insn.targets == ((target, Mode.A),)


def test_branch_range_is_checked():
    with pytest.raises(EncodingRangeError):
        isa.t_b(BASE, BASE + 0x8000)
    with pytest.raises(EncodingRangeError):
        isa.a_jmp(BASE, BASE + 1)  # misaligned displacement


# --- memory access forms -----------------------------------------------------


@given(st.integers(-100, 100), st.integers(0, 15))
def test_a_load_access_round_trip(off, reg):
    loc = BASE + A_WIDTH + off * 4
    insn = decode(image_of(isa.a_ldr(BASE, loc, reg)), BASE, Mode.A)
    assert insn.kind is Kind.LOAD
    assert len(insn.accesses) == 1
    assert (insn.accesses[0].addr, insn.accesses[0].size) == (loc, 4)


@given(st.integers(0, 120))
def test_t_load_is_aligned_and_forward(scaled):
    loc = ((BASE + T_WIDTH + 3) & ~3) + scaled * 4
    insn = decode(image_of(isa.t_ldr(BASE, loc)), BASE, Mode.T)
    assert insn.accesses[0].addr == loc


@given(st.integers(-100, 100), st.integers(0, 255))
def test_a_jump_table_round_trip(off, bound):
    table = BASE + A_WIDTH + off * 4
    insn = decode(image_of(isa.a_jtab(BASE, table, bound)), BASE, Mode.A)
    assert insn.kind is Kind.JUMP_TABLE
    assert insn.accesses[0].addr == table
    assert insn.table_bound == (bound if bound else None)


def test_t_jump_table_is_always_unbounded():
    base = (BASE + T_WIDTH + 3) & ~3
    insn = decode(image_of(isa.t_jtab(BASE, base)), BASE, Mode.T)
    assert insn.kind is Kind.JUMP_TABLE
    assert insn.table_bound is None


# --- invalid encodings and alignment -----------------------------------------


def test_undefined_opcodes_decode_to_none():
    img = image_of(bytes([isa.A_OPCODE_LIMIT, 0, 0, 0]))
    assert decode(img, BASE, Mode.A) is None
    img = image_of(bytes([isa.T_OPCODE_LIMIT, 0, 0, 0]))
    assert decode(img, BASE, Mode.T) is None


def test_misaligned_addresses_do_not_decode():
    img = image_of(isa.a_nop() + isa.a_nop())
    assert decode(img, BASE + 2, Mode.A) is None
    assert decode(img, BASE + 1, Mode.T) is None


def test_truncated_tail_does_not_decode():
    img = image_of(isa.a_nop() + isa.t_nop())  # 6 bytes: A at +4 would need 8
    assert decode(img, BASE + 4, Mode.A) is None
    assert decode(img, BASE + 4, Mode.T) is not None


# --- prefixed instructions ----------------------------------------------------


def test_prefix_wraps_inner_instruction():
    target = BASE + 0x40
    img = image_of(isa.a_pfx() + isa.a_jmp(BASE + 4, target) + isa.a_nop())
    insn = decode(img, BASE, Mode.A)
    assert (insn.size, insn.kind) == (2 * A_WIDTH, Kind.DIRECT_JUMP)
    assert insn.targets == ((target, Mode.A),)
    assert insn.mnemonic.startswith("pfx ")


def test_prefix_cannot_nest():
    img = image_of(isa.a_pfx() + isa.a_pfx() + isa.a_nop() + isa.a_nop())
    assert decode(img, BASE, Mode.A) is None  # inner prefix is not an instruction


def test_prefix_in_final_word_has_no_decode():
    # The combined instruction would run past the section end: there is no
    # prefixed interpretation, and superset decoding must not error out.
    img = image_of(isa.a_nop() + isa.a_pfx())
    assert decode(img, BASE + 4, Mode.A) is None
    superset = superset_decode(img)
    assert (BASE + 4, Mode.A) not in superset
    assert (BASE, Mode.A) in superset


def test_prefix_before_invalid_inner_has_no_decode():
    img = image_of(isa.a_pfx() + bytes([0x3F + 1, 0, 0, 0]))
    assert decode(img, BASE, Mode.A) is None


# --- superset decoding --------------------------------------------------------


def test_superset_covers_every_alignment_in_both_modes():
    blob = isa.a_nop() + isa.a_ret() + isa.t_nop() + isa.t_ret()
    img = make_image(
        [("text", BASE, blob, True), ("rodata", BASE + 0x100, bytes(8), False)]
    )
    superset = superset_decode(img)
    for addr in range(BASE, BASE + len(blob), 2):
        key = (addr, Mode.T)
        assert key in superset and superset[key].size == T_WIDTH
    for addr in range(BASE, BASE + len(blob), 4):
        assert (addr, Mode.A) in superset
    assert all(img.in_executable(addr) for addr, _ in superset)


def test_superset_skips_undecodable_slots():
    blob = bytes([0x3F + 1, 0xFF, 0xFF, 0xFF])  # invalid in A; T at +2 invalid too
    superset = superset_decode(image_of(blob))
    assert (BASE, Mode.A) not in superset
    assert (BASE + 2, Mode.T) not in superset
