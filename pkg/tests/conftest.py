"""Shared fixtures: the canonical interleaving window and small corpora."""

import pytest
from hypothesis import HealthCheck, settings

from wisdasm.candidates import generate_candidates
from wisdasm.corpus import (
    FIXTURE_WINDOW,
    GenConfig,
    gen_corpus,
    reference_interleaving_fixture,
)
from wisdasm.heuristics import BY_NAME, DEFAULT_WEIGHTS, build_context, match_counts
from wisdasm.inference import build_problem
from wisdasm.model import CandidateSet, GroundTruth, derive_partition

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("suite")

# The four-heuristic registry of the worked interleaving example: block size
# (proportional) plus jump-target / literal-reference / call-target markers.
RESTRICTED = (BY_NAME["size"], BY_NAME["jumped"], BY_NAME["literal_ref"], BY_NAME["called"])


class Fig4:
    """The eight-block two-mode window, fully analyzed once per session."""

    def __init__(self):
        self.image, self.full_truth = reference_interleaving_fixture()
        self.result = generate_candidates(self.image)
        lo, hi = FIXTURE_WINDOW
        window = [
            b for b in self.result.candidate_set.blocks if lo <= b.start and b.end <= hi
        ]
        self.cands = CandidateSet(window, twins={})
        self.truth = GroundTruth(
            tuple(t for t in self.full_truth.true_insns if lo <= t.addr < hi)
        )
        self.partition = derive_partition(self.cands, self.truth)
        ctx = build_context(self.image, self.result)
        self.counts = {b: match_counts(ctx, b, RESTRICTED) for b in window}
        self.problem = build_problem(window, self.partition, self.counts, RESTRICTED)
        # b1..b8 in canonical order, matching the published numbering.
        self.blocks = self.problem.order

    def block(self, number):
        return self.blocks[number - 1]


@pytest.fixture(scope="session")
def fig4():
    return Fig4()


@pytest.fixture(scope="session")
def plant_corpus(tmp_path_factory):
    """Twelve-binary corpus generated consistent with the default weights."""
    out = tmp_path_factory.mktemp("plant")
    cfg = GenConfig(seed=1006, binaries=12, plant=dict(DEFAULT_WEIGHTS))
    return gen_corpus(cfg, str(out))


@pytest.fixture(scope="session")
def default_corpus(tmp_path_factory):
    """Small corpus with default (non-adversarial) generation settings."""
    out = tmp_path_factory.mktemp("default")
    return gen_corpus(GenConfig(seed=7, binaries=10), str(out))
