"""Shared builders for the test suite.

Everything here is deliberately primitive: random instances are produced with
plain `random.Random` so the acceptance loops are reproducible, and the brute
references enumerate from definitions rather than reusing production code.
"""

import itertools
import random

from wisdasm.heuristics import Heuristic
from wisdasm.inference import (
    FALSE_LABEL,
    TRUE_LABEL,
    UNDET_LABEL,
    ScheduleProblem,
)
from wisdasm.linexpr import LinearExpr
from wisdasm.model import Block, Mode, block_order
from wisdasm.schedule import compute_pred

# Small mixed-sign registry for synthetic inference/LP instances (|H| = 6).
SYNTH6 = (
    Heuristic("h_size", positive=True, proportional=True, default_weight=1),
    Heuristic("h_call", positive=True, proportional=False, default_weight=8),
    Heuristic("h_jump", positive=True, proportional=False, default_weight=4),
    Heuristic("h_lit", positive=True, proportional=False, default_weight=6),
    Heuristic("h_odd", positive=False, proportional=False, default_weight=-5),
    Heuristic("h_bad", positive=False, proportional=False, default_weight=-9),
)

# Twelve-variable registry for the solver scale test.
SYNTH12 = tuple(
    Heuristic(f"v{i:02d}", positive=(i % 3 != 2), proportional=False, default_weight=0)
    for i in range(12)
)


def random_blocks(rng, n, *, addr_cap=120, span_cap=12, data_rate=0.25):
    """n interval blocks with pairwise distinct order keys.

    Code blocks carry a single instruction start at their beginning; the
    scheduling layer only looks at the interval and the weight.
    """
    out = {}
    while len(out) < n:
        start = rng.randrange(0, addr_cap, 2)
        end = start + rng.randrange(2, span_cap + 1, 2)
        if rng.random() < data_rate:
            blk = Block(start, end, Mode.DATA)
        else:
            mode = rng.choice((Mode.A, Mode.T))
            blk = Block(start, end, mode, (start,))
        out.setdefault(blk.order_key(), blk)
    return list(out.values())


def random_weight_of(rng, blocks, lo=-50, hi=50):
    """Random integer weight per block, as a lookup function."""
    table = {b: rng.randint(lo, hi) for b in blocks}
    return table.__getitem__


def brute_max_weight(blocks, weight_of):
    """Literal maximum over every non-overlapping subset (definitional)."""
    best = 0
    for r in range(1, len(blocks) + 1):
        for combo in itertools.combinations(blocks, r):
            if any(a.overlaps(b) for a, b in itertools.combinations(combo, 2)):
                continue
            best = max(best, sum(weight_of(b) for b in combo))
    return best


def random_expr(rng, registry, max_terms=3, max_coeff=4):
    """Sparse symbolic block weight: natural coefficients (match counts)."""
    names = rng.sample([h.name for h in registry], rng.randint(0, max_terms))
    return LinearExpr.build(
        {name: rng.randint(1, max_coeff) for name in names}, registry
    )


def random_problem(rng, n, registry, *, true_rate=0.6, false_rate=0.4):
    """Random labeled scheduling instance.

    True labels are drawn from a non-overlapping subset (as real ground truth
    partitions are), so a full-score schedule always exists; feasibility of
    the induced constraints is still up to the random symbolic weights.
    """
    order = tuple(block_order(random_blocks(rng, n)))
    taken = []
    labels = []
    for blk in order:
        if all(not blk.overlaps(t) for t in taken) and rng.random() < true_rate:
            taken.append(blk)
            labels.append(TRUE_LABEL)
        elif rng.random() < false_rate:
            labels.append(FALSE_LABEL)
        else:
            labels.append(UNDET_LABEL)
    exprs = tuple(random_expr(rng, registry) for _ in order)
    return ScheduleProblem(order, tuple(compute_pred(order)), exprs, labels=tuple(labels))


def sign_respecting_weights(rng, registry, magnitude=40):
    """Random weight vector obeying each heuristic's sign class."""
    out = {}
    for h in registry:
        v = rng.randint(0, magnitude)
        out[h.name] = v if h.positive else -v
    return out


def schedule_end_behavior(problem, weights):
    """Theorem-style end check: conflict resolution under `weights` keeps
    every true-labeled block and drops every false-labeled one."""
    from wisdasm.schedule import solve_schedule

    by_block = {
        blk: expr.evaluate(weights)
        for blk, expr in zip(problem.order, problem.exprs)
    }
    selected = set(solve_schedule(problem.order, by_block.__getitem__).selected)
    for blk, label in zip(problem.order, problem.labels):
        if label == TRUE_LABEL and blk not in selected:
            return False
        if label == FALSE_LABEL and blk in selected:
            return False
    return True


def seeded(tag):
    """Independent deterministic RNG per test site."""
    return random.Random(f"wisdasm-tests:{tag}")
