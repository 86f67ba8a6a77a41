"""Exhaustive reference solvers backing the cross-checking test suites.

These deliberately avoid the production algorithms. The maximum-weight search
recurses over blocks in start order carrying the last covered end (memoized,
so it is equivalent to inspecting every non-overlapping subset), and the
schedule enumerator materializes each feasible subset literally from the
definition. No predecessor arrays, no decomposition, no frontier collapsing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .inference import FALSE_LABEL, TRUE_LABEL, SymbolicSchedule
from .linexpr import LinearExpr
from .model import ModelError, block_order

ORACLE_LIMIT = 18


class OracleLimitExceeded(ModelError):
    """Instance is larger than the configured exhaustive-search bound."""


@dataclass(frozen=True)
class OracleSchedule:
    """Exact maximum with one witness subset (canonical order)."""

    total: int
    selected: tuple


def _check_limit(n, limit):
    if n > limit:
        raise OracleLimitExceeded(f"{n} blocks exceed the oracle limit of {limit}")


def oracle_wis(blocks, weight_of, limit=ORACLE_LIMIT):
    """Exact maximum total weight over all non-overlapping subsets."""
    order = sorted(blocks, key=lambda b: (b.start, b.end, b.mode.rank))
    _check_limit(len(order), limit)
    n = len(order)
    weights = [weight_of(b) for b in order]

    @lru_cache(maxsize=None)
    def best(i, frontier):
        if i == n:
            return 0
        value = best(i + 1, frontier)
        blk = order[i]
        if frontier is None or blk.start >= frontier:
            taken = weights[i] + best(i + 1, blk.end)
            if taken > value:
                value = taken
        return value

    total = best(0, None)
    selected = []
    frontier = None
    for i, blk in enumerate(order):
        if (frontier is None or blk.start >= frontier) and weights[i] + best(
            i + 1, blk.end
        ) > best(i + 1, frontier):
            selected.append(blk)
            frontier = blk.end
    best.cache_clear()
    return OracleSchedule(total, tuple(block_order(selected)))


def enumerate_feasible(blocks, limit=ORACLE_LIMIT):
    """Every non-overlapping subset of `blocks`, each in canonical order.

    The empty subset is always yielded (an empty instance has exactly one
    schedule). Subsets appear in a deterministic exclude-before-include
    recursion order.
    """
    order = sorted(blocks, key=lambda b: (b.start, b.end, b.mode.rank))
    _check_limit(len(order), limit)
    n = len(order)

    def rec(i, frontier, chosen):
        if i == n:
            yield tuple(chosen)
            return
        yield from rec(i + 1, frontier, chosen)
        blk = order[i]
        if frontier is None or blk.start >= frontier:
            chosen.append(blk)
            yield from rec(i + 1, blk.end, chosen)
            chosen.pop()

    yield from rec(0, None, [])


def oracle_schedules(problem, limit=ORACLE_LIMIT):
    """All feasible symbolic schedules of a labeled problem, by definition.

    Member indices are 1-based positions in the problem's canonical order;
    the weight is the plain sum of member expressions and the score counts
    true members, collapsing to -1 as soon as any false member appears.
    """
    _check_limit(problem.size, limit)
    index_of = {blk: i + 1 for i, blk in enumerate(problem.order)}
    schedules = []
    for subset in enumerate_feasible(problem.order, limit):
        members = tuple(sorted(index_of[blk] for blk in subset))
        weight = LinearExpr.zero()
        score = 0
        for idx in members:
            weight = weight + problem.exprs[idx - 1]
            label = problem.labels[idx - 1]
            if label == FALSE_LABEL:
                score = -1
            elif label == TRUE_LABEL and score >= 0:
                score += 1
        schedules.append(SymbolicSchedule(weight, score, members))
    schedules.sort(key=lambda s: s.members)
    return schedules
