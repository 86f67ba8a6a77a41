"""Conflict resolution: predecessor indices, the DP, dumps, twin handling."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import brute_max_weight, random_blocks, random_weight_of, seeded
from wisdasm import isa
from wisdasm.candidates import generate_candidates
from wisdasm.heuristics import DEFAULT_WEIGHTS
from wisdasm.image import make_image
from wisdasm.model import Block, CandidateSet, Mode, ParseError, block_order
from wisdasm.oracle import oracle_wis
from wisdasm.schedule import (
    competing_blocks,
    compute_pred,
    format_blocks,
    format_disassembly,
    instruction_keys,
    load_disassembly,
    parse_blocks,
    parse_disassembly,
    resolve,
    save_disassembly,
    solve_schedule,
)


def code(start, end, mode=Mode.A):
    return Block(start, end, mode, (start,))


# --- predecessor indices ------------------------------------------------------


def test_pred_golden_for_interleaving_window(fig4):
    assert list(fig4.problem.pred) == [0, 0, 0, 3, 4, 5, 3, 6]


@given(st.integers(0, 10_000))
def test_pred_matches_definition_on_random_instances(seed):
    rng = seeded(f"pred-{seed}")
    order = block_order(random_blocks(rng, rng.randint(1, 14)))
    pred = compute_pred(order)
    for i, blk in enumerate(order):
        compatible = [j for j in range(i) if order[j].end <= blk.start]
        assert pred[i] == (compatible[-1] + 1 if compatible else 0)
        # Everything at or before the predecessor is compatible too.
        assert all(order[j].end <= blk.start for j in range(pred[i]))


# --- the weighted-interval DP ---------------------------------------------------


def test_solve_schedule_trivial_cases():
    assert solve_schedule([], lambda b: 0).total == 0
    blk = code(0, 4)
    res = solve_schedule([blk], {blk: 7}.__getitem__)
    assert res.selected == (blk,) and res.total == 7
    res = solve_schedule([blk], {blk: -3}.__getitem__)
    assert res.selected == () and res.total == 0


def test_negative_weights_never_beat_the_empty_schedule():
    blocks = [code(0, 4), code(4, 8), code(8, 12)]
    res = solve_schedule(blocks, lambda b: -5)
    assert res.selected == () and res.total == 0


def test_tie_break_selects_the_later_block():
    a = code(0, 4)
    b = code(0, 4, Mode.T)
    res = solve_schedule([a, b], lambda blk: 10)
    assert res.selected == (b,)  # same weight, same span: the latter wins


def test_solve_matches_brute_force_small():
    for trial in range(60):
        rng = seeded(f"sched-brute-{trial}")
        blocks = random_blocks(rng, rng.randint(1, 9))
        weight_of = random_weight_of(rng, blocks)
        assert solve_schedule(blocks, weight_of).total == brute_max_weight(
            blocks, weight_of
        )


@given(st.integers(0, 10_000))
def test_solve_matches_memoized_oracle(seed):
    rng = seeded(f"sched-oracle-{seed}")
    blocks = random_blocks(rng, rng.randint(1, 16))
    weight_of = random_weight_of(rng, blocks)
    res = solve_schedule(blocks, weight_of)
    assert res.total == oracle_wis(blocks, weight_of).total
    # The selection itself must be feasible and achieve the reported total.
    assert sum(weight_of(b) for b in res.selected) == res.total
    for x, y in zip(res.selected, res.selected[1:]):
        assert x.end <= y.start


# --- dump format -----------------------------------------------------------------


def sample_blocks():
    return (
        code(0x10, 0x18),
        Block(0x10, 0x16, Mode.T, (0x10, 0x12, 0x14)),
        Block(0x18, 0x20, Mode.DATA),
    )


def test_block_lines_round_trip():
    blocks = sample_blocks()
    text = format_blocks(blocks)
    assert parse_blocks(text) == tuple(block_order(blocks))
    assert parse_blocks("# comment\n\n" + text) == tuple(block_order(blocks))


def test_disassembly_requires_total_and_verifies_layout():
    blocks = sample_blocks()
    text = format_disassembly(block_order(blocks), 123)
    parsed, total = parse_disassembly(text)
    assert total == 123 and parsed == tuple(block_order(blocks))
    with pytest.raises(ParseError):
        parse_disassembly(format_blocks(blocks))  # no TOTAL line
    with pytest.raises(ParseError):
        parse_disassembly(text + "TOTAL 1\n")
    with pytest.raises(ParseError):
        parse_blocks("B A 0x10 0x18\n")  # code block with no starts
    with pytest.raises(ParseError):
        parse_blocks("B D 0x10 0x18 0x10\n")  # data block with starts


def test_save_load_disassembly(tmp_path):
    path = tmp_path / "out.disasm"
    blocks = tuple(block_order(sample_blocks()))
    save_disassembly(str(path), blocks, 99)
    assert load_disassembly(str(path)) == (blocks, 99)


def test_instruction_keys_lists_code_starts_only():
    blocks = sample_blocks()
    keys = instruction_keys(blocks)
    assert (0x10, Mode.A) in keys and (0x12, Mode.T) in keys
    assert not any(mode is Mode.DATA for _, mode in keys)


# --- resolution with prefix twins -------------------------------------------------


BASE = 0x60000


def twin_candidates():
    inner = BASE + 4
    blob = (
        isa.a_pfx()
        + isa.a_movi(1, 7)
        + isa.a_ret()
        + isa.a_jmp(BASE + 12, inner)
    )
    img = make_image(
        [("text", BASE, blob, True)],
        entry_points=((BASE, Mode.A), (BASE + 12, Mode.A)),
    )
    return img, generate_candidates(img)


def test_plain_twin_never_competes_alone():
    _, result = twin_candidates()
    cands = result.candidate_set
    competing = competing_blocks(cands)
    assert len(competing) < len(cands.blocks)
    plain_halves = [
        b for b in cands.twins if cands.twins[b].start == b.start - 4
    ]
    for blk in plain_halves:
        assert blk not in competing


def test_winning_prefixed_block_pulls_its_twin_into_the_output():
    img, result = twin_candidates()
    resolution = resolve(img, result, DEFAULT_WEIGHTS)
    produced = instruction_keys(resolution.blocks)
    prefixed = [b for b, p in result.candidate_set.twins.items() if p.start > b.start]
    (pblock,) = prefixed
    assert pblock in resolution.blocks
    # The inner (unprefixed) interpretation rides along with the winner.
    assert (pblock.start + 4, Mode.A) in produced
    assert resolution.schedule.total == sum(
        resolution.block_weights[b] for b in resolution.schedule.selected
    )
