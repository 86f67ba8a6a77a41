"""Constraint inference: golden window, decomposition, subsumption, caps."""

import pytest

from conftest import RESTRICTED
from helpers import (
    SYNTH6,
    random_expr,
    random_problem,
    schedule_end_behavior,
    seeded,
    sign_respecting_weights,
)
from wisdasm.inference import (
    EMPTY_SCHEDULE,
    FALSE_LABEL,
    TRUE_LABEL,
    UNDET_LABEL,
    InstanceTooLarge,
    ScheduleCapExceeded,
    ScheduleProblem,
    SymbolicSchedule,
    best_schedule,
    decompose,
    infer_naive,
    infer_optimized,
    subsumes_constraint,
    subsumes_schedule,
)
from wisdasm.linexpr import Constraint, LinearExpr
from wisdasm.lp import solve_weights
from wisdasm.model import Mode


def rexpr(**terms):
    return LinearExpr.build(terms, RESTRICTED)


# --- the worked interleaving window ----------------------------------------------


def test_window_blocks_and_labels(fig4):
    spans = [(b.mode, b.start, b.end) for b in fig4.blocks]
    assert spans == [
        (Mode.A, 0x19754, 0x19758),
        (Mode.DATA, 0x19754, 0x19758),
        (Mode.T, 0x19756, 0x19758),
        (Mode.T, 0x19758, 0x1975A),
        (Mode.T, 0x1975A, 0x19760),
        (Mode.T, 0x19760, 0x19762),
        (Mode.A, 0x19758, 0x19764),
        (Mode.T, 0x19762, 0x19764),
    ]
    assert fig4.partition.true_blocks == {fig4.block(7)}
    assert fig4.partition.false_blocks == {
        fig4.block(i) for i in (1, 3, 4, 5, 6, 8)
    }
    assert fig4.partition.undetermined == {fig4.block(2)}


def test_window_symbolic_weights_match_the_worked_example(fig4):
    assert fig4.problem.exprs == (
        rexpr(size=4),
        rexpr(size=4, literal_ref=1),
        rexpr(size=2, jumped=1),
        rexpr(size=2),
        rexpr(size=6, jumped=1),
        rexpr(size=2),
        rexpr(size=12, called=1),
        rexpr(size=2),
    )


def test_window_decomposes_into_two_independent_subproblems(fig4):
    assert decompose(fig4.problem) == [(1, 3), (4, 8)]


EXAMPLE_DIFF = rexpr(size=2, called=1, literal_ref=1, jumped=-1)


def test_window_constraint_present_in_naive_output(fig4):
    naive = infer_naive(fig4.problem, registry=RESTRICTED)
    assert any(c.diff == EXAMPLE_DIFF for c in naive)


def test_window_constraint_implied_by_optimized_output(fig4):
    optimized = infer_optimized(fig4.problem, registry=RESTRICTED)
    assert len(optimized) <= len(infer_naive(fig4.problem, registry=RESTRICTED))
    target = Constraint(EXAMPLE_DIFF)
    assert any(subsumes_constraint(c, target, RESTRICTED) for c in optimized)


def test_window_constraints_solve_and_recover(fig4):
    report = solve_weights(infer_optimized(fig4.problem, registry=RESTRICTED), RESTRICTED)
    assert report.objective == 0
    assert report.violated == 0
    assert schedule_end_behavior(fig4.problem, report.weights)


# --- schedule bookkeeping -----------------------------------------------------------


def sched(score, members=(), **terms):
    return SymbolicSchedule(LinearExpr.build(terms, SYNTH6), score, tuple(members))


def test_best_schedule_prefers_score_then_positive_mass():
    low = sched(0, (1,), h_size=50)
    high = sched(1, (2,), h_size=1)
    heavy = sched(1, (3,), h_size=3)
    assert best_schedule([low, high, heavy], SYNTH6) == heavy
    assert best_schedule([low, high], SYNTH6) == high


def test_subsumes_schedule_requires_provable_dominance_and_score_order():
    base = sched(1, (1,), h_size=2)
    heavier = sched(0, (2,), h_size=3)
    assert subsumes_schedule(heavier, base, SYNTH6)  # always >=, lower score
    assert not subsumes_schedule(base, heavier, SYNTH6)
    mixed = sched(0, (3,), h_size=1, h_bad=1)  # negative-class coefficient up
    assert not subsumes_schedule(mixed, base, SYNTH6)


def test_subsumption_probes_never_violate_weight_order():
    rng = seeded("subsume-schedules")
    checked = 0
    while checked < 400:
        a = sched(rng.randint(-1, 2), (1,), **{})
        a = SymbolicSchedule(random_expr(rng, SYNTH6), a.score, a.members)
        b = SymbolicSchedule(random_expr(rng, SYNTH6), rng.randint(-1, 2), (2,))
        if not subsumes_schedule(a, b, SYNTH6):
            continue
        weights = sign_respecting_weights(rng, SYNTH6)
        assert a.weight.evaluate(weights) >= b.weight.evaluate(weights)
        checked += 1


def test_constraint_subsumption_is_implication():
    rng = seeded("subsume-constraints")
    checked = 0
    while checked < 400:
        c1 = Constraint.greater(random_expr(rng, SYNTH6), random_expr(rng, SYNTH6))
        c2 = Constraint.greater(random_expr(rng, SYNTH6), random_expr(rng, SYNTH6))
        if not subsumes_constraint(c1, c2, SYNTH6):
            continue
        weights = sign_respecting_weights(rng, SYNTH6)
        if c1.satisfied(weights):
            assert c2.satisfied(weights)
        checked += 1


# --- naive inference semantics -----------------------------------------------------


def two_block_problem(label_a, label_b, expr_a, expr_b):
    from wisdasm.model import Block

    a = Block(0, 4, Mode.A, (0,))
    b = Block(0, 4, Mode.T, (0, 2))
    return ScheduleProblem((a, b), (0, 0), (expr_a, expr_b), (label_a, label_b))


def test_naive_emits_best_against_every_lower_score_schedule():
    problem = two_block_problem(
        TRUE_LABEL, FALSE_LABEL, rexpr(size=4), rexpr(size=4, jumped=2)
    )
    naive = infer_naive(problem, registry=RESTRICTED)
    diffs = {c.diff for c in naive}
    # Optimal is {a}; losers are {}, {b}: two constraints.
    assert diffs == {rexpr(size=1), rexpr(jumped=-2)}


def test_required_block_constraint_includes_the_empty_schedule():
    problem = ScheduleProblem(
        two_block_problem(TRUE_LABEL, UNDET_LABEL, rexpr(size=4), rexpr())
            .order[:1],
        (0,),
        (rexpr(size=4),),
        (TRUE_LABEL,),
    )
    naive = infer_naive(problem, registry=RESTRICTED)
    assert {c.diff for c in naive} == {rexpr(size=1)}  # SW(b) > 0
    optimized = infer_optimized(problem, registry=RESTRICTED)
    assert {c.diff for c in optimized} == {rexpr(size=1)}


def test_degenerate_equal_weights_yield_unsatisfiable_constraint():
    problem = two_block_problem(
        TRUE_LABEL, FALSE_LABEL, rexpr(size=4), rexpr(size=4)
    )
    naive = infer_naive(problem, registry=RESTRICTED)
    assert any(c.is_degenerate for c in naive)
    report = solve_weights(naive, RESTRICTED)
    assert report.objective > 0 and report.violated >= 1


# --- decomposition -------------------------------------------------------------------


def test_decompose_cut_points_are_valid_on_random_instances():
    for trial in range(80):
        rng = seeded(f"decомpose-{trial}")
        problem = random_problem(rng, rng.randint(1, 16), SYNTH6)
        ranges = decompose(problem)
        assert ranges[0][0] == 1 and ranges[-1][1] == problem.size
        for (_, hi), (lo2, _) in zip(ranges, ranges[1:]):
            assert lo2 == hi + 1
        for lo, hi in ranges:
            for j in range(hi + 1, problem.size + 1):
                assert problem.pred[j - 1] >= hi or problem.pred[j - 1] >= lo - 1
        # Stronger: no block after a cut reaches back across it.
        for _, hi in ranges[:-1]:
            assert all(problem.pred[j - 1] >= hi for j in range(hi + 1, problem.size + 1))


# --- naive vs optimized ---------------------------------------------------------------


def feasible_assignment(constraints, registry):
    report = solve_weights(constraints, registry)
    return report.weights if report.objective == 0 else None


def test_optimized_never_larger_and_agrees_with_naive():
    agreements = 0
    for trial in range(120):
        rng = seeded(f"naive-opt-{trial}")
        problem = random_problem(rng, rng.randint(1, 11), SYNTH6)
        try:
            naive = infer_naive(problem, registry=SYNTH6)
            optimized = infer_optimized(problem, registry=SYNTH6)
        except Exception:
            continue
        assert len(optimized) <= len(naive)
        weights = feasible_assignment(optimized, SYNTH6)
        naive_feasible = feasible_assignment(naive, SYNTH6) is not None
        assert (weights is not None) == naive_feasible
        if weights is None:
            continue
        # A solution of the pruned set must satisfy the full reference set.
        assert all(c.satisfied(weights) for c in naive)
        assert schedule_end_behavior(problem, weights)
        agreements += 1
    assert agreements >= 40  # the comparison must actually exercise solutions


# --- caps ------------------------------------------------------------------------------


def wide_problem(n):
    from wisdasm.model import Block

    blocks = tuple(
        Block(i * 4, i * 4 + 8, Mode.A, (i * 4,)) if i % 2 == 0
        else Block(i * 4, i * 4 + 8, Mode.T, (i * 4, i * 4 + 2))
        for i in range(n)
    )
    order = tuple(sorted(blocks, key=lambda b: b.order_key()))
    from wisdasm.schedule import compute_pred

    rng = seeded(f"wide-{n}")
    exprs = tuple(random_expr(rng, SYNTH6, max_terms=2) for _ in order)
    return ScheduleProblem(order, tuple(compute_pred(order)), exprs, (UNDET_LABEL,) * n)


def test_naive_cap_raises_instance_too_large():
    with pytest.raises(InstanceTooLarge):
        infer_naive(wide_problem(24), cap=64, registry=SYNTH6)


def test_optimized_cap_raises_schedule_cap_exceeded():
    with pytest.raises(ScheduleCapExceeded):
        infer_optimized(wide_problem(24), cap=2, registry=SYNTH6)


def test_empty_problem_yields_no_constraints():
    empty = ScheduleProblem((), (), (), ())
    assert infer_naive(empty, registry=SYNTH6) == ()
    assert infer_optimized(empty, registry=SYNTH6) == ()
    assert best_schedule([EMPTY_SCHEDULE], SYNTH6) is EMPTY_SCHEDULE
