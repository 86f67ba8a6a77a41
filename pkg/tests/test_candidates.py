"""Candidate generation: invalidation, traversal, suffix cuts, data blocks."""

import pytest

from helpers import seeded
from wisdasm import isa
from wisdasm.candidates import (
    CandidateConfig,
    backward_invalidate,
    generate_candidates,
    split_common_suffixes,
)
from wisdasm.corpus import GenConfig, generate
from wisdasm.image import make_image
from wisdasm.isa import superset_decode
from wisdasm.model import Block, Mode, check_soundness

BASE = 0x30000


def image_of(blob, base=BASE, entries=()):
    return make_image([("text", base, bytes(blob), True)], entry_points=entries)


# --- backward invalidation -----------------------------------------------------


def test_fallthrough_off_section_end_stays_valid():
    # A run of plain instructions ending flush with the section: the last one
    # falls through to a non-section address, which must NOT invalidate it.
    blob = isa.a_nop() + isa.a_nop() + isa.a_nop()
    img = image_of(blob)
    invalid = backward_invalidate(img, superset_decode(img))
    assert (BASE + 8, Mode.A) not in invalid
    assert (BASE, Mode.A) not in invalid


def test_invalidation_propagates_through_fallthrough_chain():
    # Three fallthrough instructions, then an undecodable word inside the
    # section. The chain dies backwards from the hole.
    blob = isa.a_nop() + isa.a_nop() + isa.a_nop() + bytes([0x7F, 0xEE, 0xEE, 0xEE])
    img = image_of(blob)
    superset = superset_decode(img)
    assert (BASE + 12, Mode.A) not in superset
    invalid = backward_invalidate(img, superset)
    for addr in (BASE, BASE + 4, BASE + 8):
        assert (addr, Mode.A) in invalid


def test_terminator_stops_invalidation():
    # Same hole, but a RET before it: the RET needs no successor, so the
    # instructions before it survive.
    blob = isa.a_nop() + isa.a_ret() + bytes([0x7F, 0xEE, 0xEE, 0xEE])
    img = image_of(blob)
    invalid = backward_invalidate(img, superset_decode(img))
    assert (BASE, Mode.A) not in invalid
    assert (BASE + 4, Mode.A) not in invalid


def test_jump_to_invalid_in_section_target_invalidates():
    target = BASE + 8
    blob = isa.a_jmp(BASE, target) + isa.a_ret() + bytes([0x7F, 0xEE, 0xEE, 0xEE])
    img = image_of(blob)
    invalid = backward_invalidate(img, superset_decode(img))
    assert (BASE, Mode.A) in invalid  # its target slot has no decode


def test_jump_out_of_section_does_not_invalidate():
    blob = isa.a_jmp(BASE, BASE + 0x1000) + isa.a_ret()
    img = image_of(blob)
    invalid = backward_invalidate(img, superset_decode(img))
    assert (BASE, Mode.A) not in invalid


# --- traversal and block building ----------------------------------------------


def entry_candidates(blob, entries):
    img = image_of(blob, entries=entries)
    return img, generate_candidates(img)


def test_blocks_follow_calls_and_stop_at_terminators():
    f2 = BASE + 12
    blob = (
        isa.a_call(BASE, f2)
        + isa.a_ret()
        + isa.a_movi(1, 0x1333)
        + isa.a_movi(2, 0x1333)
        + isa.a_ret()
    )
    img, result = entry_candidates(blob, (((BASE), Mode.A),))
    starts = {(b.start, b.mode): b for b in result.candidate_set.blocks if b.is_code}
    entry_block = starts[(BASE, Mode.A)]
    assert entry_block.insn_starts == (BASE,)  # call ends its block
    assert (f2, Mode.A) in starts
    assert starts[(f2, Mode.A)].insn_starts == (f2, f2 + 4)
    # The fallthrough run from BASE+8 is cut where the called code begins, so
    # both traversals share the single suffix block.
    assert starts[(BASE + 8, Mode.A)].insn_starts == (BASE + 8,)
    assert result.call_targets.count((f2, Mode.A)) == 1


def test_conditional_jump_ends_block_but_continues_both_ways():
    target = BASE + 12
    blob = isa.a_jcc(BASE, target) + isa.a_ret() + isa.a_nop() + isa.a_ret()
    _, result = entry_candidates(blob, ((BASE, Mode.A),))
    starts = {(b.start, b.mode) for b in result.candidate_set.blocks if b.is_code}
    assert {(BASE, Mode.A), (BASE + 4, Mode.A), (target, Mode.A)} <= starts
    assert (target, Mode.A) in result.jump_targets


def test_no_two_same_mode_blocks_share_an_instruction_start():
    # Exercised across random corpora: the suffix-splitting guarantee that
    # backs the whole-block partition (CandidateSet enforces it on build).
    for i in range(12):
        cfg = GenConfig(seed=303, binaries=12, prefix_twins=True, overlap_decoys=True)
        image, _ = generate(cfg, i)
        result = generate_candidates(image)
        seen = set()
        for blk in result.candidate_set.blocks:
            if not blk.is_code:
                continue
            for addr in blk.insn_starts:
                assert (addr, blk.mode) not in seen
                seen.add((addr, blk.mode))


def test_split_common_suffixes_cuts_at_meeting_points():
    # Two A blocks converge at 0x30008; the shared suffix becomes one block.
    long = Block(BASE, BASE + 16, Mode.A, (BASE, BASE + 4, BASE + 8, BASE + 12))
    joiner = Block(BASE + 8, BASE + 16, Mode.A, (BASE + 8, BASE + 12))
    pieces = split_common_suffixes([long, joiner])
    spans = sorted((b.start, b.end) for b in pieces)
    assert spans == [(BASE, BASE + 8), (BASE + 8, BASE + 16)]


def test_split_keeps_data_and_disjoint_blocks_untouched():
    blk = Block(BASE, BASE + 8, Mode.A, (BASE, BASE + 4))
    other = Block(BASE + 8, BASE + 12, Mode.T, (BASE + 8, BASE + 10))
    d = Block(BASE, BASE + 4, Mode.DATA)
    assert set(split_common_suffixes([blk, other, d])) == {blk, other, d}


# --- jump tables -----------------------------------------------------------------


def table_image(bound, entries, tail=()):
    """jtab at BASE, table immediately after the code, targets after that."""
    tbase = BASE + 8
    body = isa.a_jtab(BASE, tbase, bound) + isa.a_ret()
    words = b"".join(int.to_bytes(t, 4, "little") for t in entries)
    return image_of(body + words + b"".join(tail), entries=((BASE, Mode.A),))


def test_bounded_table_emits_per_entry_blocks():
    target = BASE + 8 + 3 * 4
    img = table_image(3, [target, target, target], tail=[isa.a_ret()])
    result = generate_candidates(img)
    tbase = BASE + 8
    entry_blocks = {
        (b.start, b.end) for b in result.candidate_set.blocks if not b.is_code
    }
    for i in range(3):
        assert (tbase + i * 4, tbase + (i + 1) * 4) in entry_blocks
    assert result.table_regions == ((tbase, tbase + 12),)
    starts = {(b.start, b.mode) for b in result.candidate_set.blocks if b.is_code}
    assert (target, Mode.A) in starts  # table entries seed traversal


def test_unbounded_table_stops_at_first_non_code_word():
    tbase = BASE + 8
    target = tbase + 4 * 4
    img = table_image(0, [target, target, target, 0xFFFFFFFF], tail=[isa.a_ret()])
    result = generate_candidates(img)
    entry_blocks = sorted(
        (b.start, b.end)
        for b in result.candidate_set.blocks
        if not b.is_code and tbase <= b.start < target
    )
    assert entry_blocks == [(tbase + i * 4, tbase + (i + 1) * 4) for i in range(3)]


def test_unbounded_table_never_scans_past_its_least_target():
    # The first discovered target bounds the scan: entries stop there even if
    # the following words still look like valid code pointers.
    tbase = BASE + 8
    target = tbase + 2 * 4  # table runs into its own jump target
    img = table_image(0, [target, target], tail=[isa.a_ret(), isa.a_ret()])
    result = generate_candidates(img)
    entry_blocks = [
        b for b in result.candidate_set.blocks if not b.is_code and b.start >= tbase
    ]
    assert {(b.start, b.end) for b in entry_blocks} == {
        (tbase, tbase + 4),
        (tbase + 4, tbase + 8),
    }


# --- content data blocks ----------------------------------------------------------


def test_long_string_run_becomes_data_candidate():
    text = b"padding-string-content!\x00"
    blob = isa.a_ret() + text + bytes(-len(text) % 4)
    result = generate_candidates(image_of(blob))
    spans = {(b.start, b.end) for b in result.candidate_set.blocks if not b.is_code}
    assert (BASE + 4, BASE + 4 + len(text)) in spans


def test_repeated_byte_run_becomes_data_candidate():
    blob = isa.a_ret() + bytes([0xEE] * 12)
    result = generate_candidates(image_of(blob))
    spans = {(b.start, b.end) for b in result.candidate_set.blocks if not b.is_code}
    assert (BASE + 4, BASE + 16) in spans


def test_short_runs_are_not_data_candidates():
    cfg = CandidateConfig()
    blob = isa.a_ret() + b"tiny\x00" + bytes([0xEE] * cfg.repeat_run_threshold)
    blob += bytes(-len(blob) % 4)
    result = generate_candidates(image_of(blob))
    spans = {(b.start, b.end) for b in result.candidate_set.blocks if not b.is_code}
    assert not any(s == BASE + 4 for s, _ in spans)


def test_literal_access_emits_data_block_and_is_recorded():
    loc = BASE + 8
    blob = isa.a_ldr(BASE, loc) + isa.a_ret() + int.to_bytes(0xDEADBEEF, 4, "little")
    result = generate_candidates(image_of(blob, entries=((BASE, Mode.A),)))
    spans = {(b.start, b.end) for b in result.candidate_set.blocks if not b.is_code}
    assert (loc, loc + 4) in spans
    assert any(a.addr == loc for a in result.literal_accesses)


# --- prefix twins -----------------------------------------------------------------


def twin_image():
    # Entry block runs a prefixed instruction; a jump targets the inner
    # (unprefixed) address, creating the byte-overlapping twin block.
    inner = BASE + 4
    blob = (
        isa.a_pfx()
        + isa.a_movi(1, 7)
        + isa.a_ret()
        + isa.a_jmp(BASE + 12, inner)
    )
    return image_of(blob, entries=((BASE, Mode.A), (BASE + 12, Mode.A)))


def test_prefix_twins_are_detected_and_paired():
    result = generate_candidates(twin_image())
    twins = result.candidate_set.twins
    assert twins
    (prefixed, plain), = [
        (a, b) for a, b in twins.items() if a.start < b.start
    ]
    assert prefixed.start + 4 == plain.start
    assert prefixed.end == plain.end
    assert prefixed.insn_starts[1:] == plain.insn_starts[1:]
    assert twins[plain] is prefixed


def test_twin_soundness_against_twin_pair_truth():
    image, gt = generate(GenConfig(seed=21, binaries=4, prefix_twins=True), 1)
    result = generate_candidates(image)
    assert check_soundness(result.candidate_set, gt).sound


def test_generated_corpora_are_deterministic_and_sound(default_corpus):
    rng = seeded("candidates-default")
    from wisdasm.corpus import load_corpus, load_corpus_binary

    entries, directory = load_corpus(default_corpus)
    sample = rng.sample(entries, 4)
    for entry in sample:
        image, gt = load_corpus_binary(entry, directory)
        result = generate_candidates(image)
        assert check_soundness(result.candidate_set, gt).sound
