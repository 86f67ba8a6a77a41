"""Corpus-scale pipelines: per-binary disassembly, training, and evaluation.

Every corpus operation fans out per binary — optionally across a thread
pool — and merges per-binary results in binary-id order, so reports and
weight files come out byte-identical for any worker count. A cooperative
deadline bounds each binary's pipeline; a binary that overruns it or fails
outright is tallied as a failure without disturbing the other binaries'
results. Machine-readable report text excludes wall-clock fields so
repeated runs diff clean; timings ride alongside in the report objects
and only surface in the human-readable summaries.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from .candidates import generate_candidates
from .corpus import SPLIT_TRAIN, load_corpus
from .heuristics import REGISTRY, WeightOverflow, build_context, check_weights, match_counts
from .image import load_image
from .inference import build_problem, infer_optimized
from .lp import solve_weights
from .model import (
    ModelError,
    ParseError,
    check_soundness,
    derive_partition,
    load_sidecar,
)
from .schedule import competing_blocks, instruction_keys, resolve

DEFAULT_TIMEOUT = 60.0

SOUND = "sound"
UNSOUND = "unsound"
FAILURE = "failure"


class MissingGroundTruth(ModelError):
    """A corpus entry's ground-truth sidecar is absent or unreadable."""


class BinaryTimeout(ModelError):
    """A single binary's pipeline exceeded its cooperative time budget."""


class Deadline:
    """Cooperative per-binary time budget, checked between pipeline stages."""

    def __init__(self, seconds=None):
        self.expires = None if not seconds or seconds <= 0 else time.monotonic() + seconds

    def check(self):
        if self.expires is not None and time.monotonic() > self.expires:
            raise BinaryTimeout("time budget exhausted")


# Per-binary faults that must be tallied, not propagated: domain errors
# (including timeouts), weight overflows, and unreadable corpus files.
_BINARY_FAULTS = (ModelError, WeightOverflow, OSError)


def _describe(exc):
    return f"{type(exc).__name__}: {exc}"


def _load_binary(entry, directory):
    image = load_image(os.path.join(directory, entry.image_path))
    try:
        gt = load_sidecar(os.path.join(directory, entry.sidecar_path))
    except OSError as exc:
        raise MissingGroundTruth(f"{entry.sidecar_path}: {exc}") from exc
    return image, gt


def _chosen_entries(manifest_path, split):
    entries, directory = load_corpus(manifest_path)
    chosen = [e for e in entries if split is None or e.split == split]
    return sorted(chosen, key=lambda e: e.binary_id), directory


def _fan_out(work, entries, jobs):
    """Apply `work` to every entry, preserving input order in the output."""
    if jobs and jobs > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, entries))
    return [work(e) for e in entries]


# --- single-binary pipelines --------------------------------------------------


def disassemble_image(image, weights, registry=REGISTRY):
    """Candidate generation plus conflict resolution for one image."""
    result = generate_candidates(image)
    return result, resolve(image, result, weights, registry)


def infer_image_constraints(image, gt, registry=REGISTRY, cap=None, deadline=None):
    """Weight constraints implied by one labeled binary.

    Runs candidate generation, heuristic matching, block labeling, and
    symbolic schedule inference; returns the canonical constraint tuple.
    """
    deadline = deadline or Deadline()
    result = generate_candidates(image)
    deadline.check()
    cands = result.candidate_set
    ctx = build_context(image, result)
    counts = {b: match_counts(ctx, b, registry) for b in cands.blocks}
    deadline.check()
    partition = derive_partition(cands, gt)
    problem = build_problem(competing_blocks(cands), partition, counts, registry)
    deadline.check()
    if cap is None:
        return infer_optimized(problem, registry=registry)
    return infer_optimized(problem, cap, registry)


# --- training ------------------------------------------------------------------


@dataclass(frozen=True)
class BinaryTrain:
    """One binary's contribution to a training run."""

    binary_id: str
    constraints: tuple = ()
    error: str = ""  # nonempty iff this binary failed
    runtime: float = 0.0

    @property
    def failed(self):
        return bool(self.error)


@dataclass(frozen=True)
class TrainReport:
    """Pooled constraints, the weight solve, and per-binary outcomes."""

    binaries: tuple  # BinaryTrain records in binary-id order
    pooled: tuple  # deduplicated constraints in pooled order
    solve: object  # lp.SolveReport
    elapsed: float = 0.0

    @property
    def failures(self):
        return tuple(b for b in self.binaries if b.failed)

    def zero_heuristics(self, registry=REGISTRY):
        return tuple(h.name for h in registry if self.solve.weights.get(h.name) == 0)


def train_corpus(
    manifest_path,
    jobs=1,
    timeout=DEFAULT_TIMEOUT,
    registry=REGISTRY,
    split=SPLIT_TRAIN,
    cap=None,
):
    """Infer constraints across a corpus split and solve for weights.

    Per-binary failures (including timeouts) land in the failure tally and
    contribute no constraints; every other binary is unaffected. The pooled
    constraint list — and therefore the solved weights — is identical for
    any worker count.
    """
    started = time.monotonic()
    chosen, directory = _chosen_entries(manifest_path, split)

    def work(entry):
        t0 = time.monotonic()
        try:
            image, gt = _load_binary(entry, directory)
            constraints = infer_image_constraints(
                image, gt, registry, cap=cap, deadline=Deadline(timeout)
            )
            return BinaryTrain(entry.binary_id, constraints, runtime=time.monotonic() - t0)
        except _BINARY_FAULTS as exc:
            return BinaryTrain(entry.binary_id, error=_describe(exc), runtime=time.monotonic() - t0)

    results = _fan_out(work, chosen, jobs)
    pooled = []
    seen = set()
    for res in results:
        for constraint in res.constraints:
            if constraint not in seen:
                seen.add(constraint)
                pooled.append(constraint)
    report = solve_weights(pooled, registry)
    return TrainReport(tuple(results), tuple(pooled), report, time.monotonic() - started)


# --- evaluation ------------------------------------------------------------------


@dataclass(frozen=True)
class BinaryEval:
    """Instruction-recovery counts for one binary."""

    binary_id: str
    tp: int = 0
    fp: int = 0
    fn: int = 0
    soundness: str = FAILURE  # sound | unsound | failure
    error: str = ""
    runtime: float = 0.0

    @property
    def failed(self):
        return self.soundness == FAILURE

    @property
    def correct(self):
        return not self.failed and self.fp == 0 and self.fn == 0


@dataclass(frozen=True)
class EvalReport:
    """Per-binary counts plus pooled metrics (counts pooled before dividing)."""

    binaries: tuple  # BinaryEval records in binary-id order
    elapsed: float = 0.0

    def _pooled(self):
        ok = [b for b in self.binaries if not b.failed]
        return sum(b.tp for b in ok), sum(b.fp for b in ok), sum(b.fn for b in ok)

    @property
    def pooled_tp(self):
        return self._pooled()[0]

    @property
    def pooled_fp(self):
        return self._pooled()[1]

    @property
    def pooled_fn(self):
        return self._pooled()[2]

    @property
    def precision(self):
        tp, fp, _ = self._pooled()
        return Fraction(tp, tp + fp) if tp + fp else Fraction(1)

    @property
    def recall(self):
        tp, _, fn = self._pooled()
        return Fraction(tp, tp + fn) if tp + fn else Fraction(1)

    @property
    def evaluated(self):
        return sum(1 for b in self.binaries if not b.failed)

    @property
    def correct_count(self):
        return sum(1 for b in self.binaries if b.correct)

    @property
    def correct_rate(self):
        return Fraction(self.correct_count, self.evaluated) if self.evaluated else Fraction(1)

    @property
    def sound_count(self):
        return sum(1 for b in self.binaries if b.soundness == SOUND)

    @property
    def unsound_count(self):
        return sum(1 for b in self.binaries if b.soundness == UNSOUND)

    @property
    def failure_count(self):
        return sum(1 for b in self.binaries if b.failed)


def eval_corpus(
    manifest_path,
    weights,
    split=None,
    jobs=1,
    timeout=DEFAULT_TIMEOUT,
    registry=REGISTRY,
):
    """Disassemble a corpus split and score it against ground truth.

    True/false positives and false negatives count (address, mode)
    instruction identities in the resolved output versus the sidecar;
    instructions whose start address is ignored count in no bucket.
    Soundness is judged on the candidate set before conflict resolution.
    """
    check_weights(weights, registry)
    started = time.monotonic()
    chosen, directory = _chosen_entries(manifest_path, split)

    def work(entry):
        t0 = time.monotonic()
        deadline = Deadline(timeout)
        try:
            image, gt = _load_binary(entry, directory)
            result = generate_candidates(image)
            deadline.check()
            sound = check_soundness(result.candidate_set, gt).sound
            resolution = resolve(image, result, weights, registry)
            deadline.check()
            out_keys = {k for k in instruction_keys(resolution.blocks) if k[0] not in gt.ignored}
            true_keys = {k for k in gt.true_keys() if k[0] not in gt.ignored}
            tp = len(out_keys & true_keys)
            return BinaryEval(
                entry.binary_id,
                tp=tp,
                fp=len(out_keys) - tp,
                fn=len(true_keys) - tp,
                soundness=SOUND if sound else UNSOUND,
                runtime=time.monotonic() - t0,
            )
        except _BINARY_FAULTS as exc:
            return BinaryEval(
                entry.binary_id, error=_describe(exc), runtime=time.monotonic() - t0
            )

    results = _fan_out(work, chosen, jobs)
    return EvalReport(tuple(results), time.monotonic() - started)


# --- report text ------------------------------------------------------------------
#
# Machine-readable (deterministic, no timings):
#
#   TRAIN 1                          EVAL 1
#   BINARIES <n>                     BIN <id> <tp> <fp> <fn> <verdict>
#   CONSTRAINTS <n>                  FAIL <id> <message...>
#   OBJECTIVE <fraction>             POOLED <tp> <fp> <fn>
#   SATISFIED <n>                    PRECISION <fraction>
#   VIOLATED <n>                     RECALL <fraction>
#   FAILURES <n>                     CORRECT <count> <evaluated>
#   FAIL <id> <message...>           TALLY <sound> <unsound> <failure>
#   ZERO <heuristic-name>
#
# '#' starts a comment; blank lines are skipped.


def format_train_report(report, registry=REGISTRY):
    lines = [
        "TRAIN 1",
        f"BINARIES {len(report.binaries)}",
        f"CONSTRAINTS {len(report.pooled)}",
        f"OBJECTIVE {report.solve.objective}",
        f"SATISFIED {report.solve.satisfied}",
        f"VIOLATED {report.solve.violated}",
        f"FAILURES {len(report.failures)}",
    ]
    lines.extend(f"FAIL {b.binary_id} {b.error}" for b in report.failures)
    lines.extend(f"ZERO {name}" for name in report.zero_heuristics(registry))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TrainSummary:
    """The machine-readable slice of a training report, as parsed back in."""

    binaries: int
    constraints: int
    objective: Fraction
    satisfied: int
    violated: int
    failures: tuple  # (binary_id, message) pairs
    zero_heuristics: tuple


def _report_lines(text, header):
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line.split()))
    if not lines or lines[0][1] != [header, "1"]:
        raise ParseError(f"report must start with '{header} 1'")
    return lines[1:]


def _int_field(parts, lineno):
    if len(parts) != 2:
        raise ParseError(f"line {lineno}: {parts[0]} takes one value")
    try:
        return int(parts[1])
    except ValueError as exc:
        raise ParseError(f"line {lineno}: bad {parts[0]} value {parts[1]!r}") from exc


def parse_train_report(text):
    fields = {}
    failures = []
    zeros = []
    for lineno, parts in _report_lines(text, "TRAIN"):
        key = parts[0]
        if key == "FAIL":
            if len(parts) < 3:
                raise ParseError(f"line {lineno}: FAIL takes an id and a message")
            failures.append((parts[1], " ".join(parts[2:])))
        elif key == "ZERO":
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: ZERO takes one heuristic name")
            zeros.append(parts[1])
        elif key == "OBJECTIVE":
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: OBJECTIVE takes one value")
            try:
                fields[key] = Fraction(parts[1])
            except (ValueError, ZeroDivisionError) as exc:
                raise ParseError(f"line {lineno}: bad objective {parts[1]!r}") from exc
        elif key in ("BINARIES", "CONSTRAINTS", "SATISFIED", "VIOLATED", "FAILURES"):
            fields[key] = _int_field(parts, lineno)
        else:
            raise ParseError(f"line {lineno}: unknown record {key!r}")
    missing = {"BINARIES", "CONSTRAINTS", "OBJECTIVE", "SATISFIED", "VIOLATED", "FAILURES"} - set(
        fields
    )
    if missing:
        raise ParseError(f"train report missing {sorted(missing)}")
    if fields["FAILURES"] != len(failures):
        raise ParseError("FAILURES count disagrees with FAIL lines")
    return TrainSummary(
        binaries=fields["BINARIES"],
        constraints=fields["CONSTRAINTS"],
        objective=fields["OBJECTIVE"],
        satisfied=fields["SATISFIED"],
        violated=fields["VIOLATED"],
        failures=tuple(failures),
        zero_heuristics=tuple(zeros),
    )


def format_eval_report(report):
    lines = ["EVAL 1"]
    lines.extend(
        f"BIN {b.binary_id} {b.tp} {b.fp} {b.fn} {b.soundness}" for b in report.binaries
    )
    lines.extend(f"FAIL {b.binary_id} {b.error}" for b in report.binaries if b.failed)
    tp, fp, fn = report._pooled()
    lines.append(f"POOLED {tp} {fp} {fn}")
    lines.append(f"PRECISION {report.precision}")
    lines.append(f"RECALL {report.recall}")
    lines.append(f"CORRECT {report.correct_count} {report.evaluated}")
    lines.append(f"TALLY {report.sound_count} {report.unsound_count} {report.failure_count}")
    return "\n".join(lines) + "\n"


def parse_eval_report(text):
    binaries = []
    errors = {}
    aggregates = {}
    for lineno, parts in _report_lines(text, "EVAL"):
        key = parts[0]
        if key == "BIN":
            if len(parts) != 6 or parts[5] not in (SOUND, UNSOUND, FAILURE):
                raise ParseError(f"line {lineno}: expected 'BIN <id> <tp> <fp> <fn> <verdict>'")
            try:
                tp, fp, fn = (int(p) for p in parts[2:5])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad BIN counts") from exc
            binaries.append(BinaryEval(parts[1], tp, fp, fn, parts[5]))
        elif key == "FAIL":
            if len(parts) < 3:
                raise ParseError(f"line {lineno}: FAIL takes an id and a message")
            errors[parts[1]] = " ".join(parts[2:])
        elif key in ("POOLED", "PRECISION", "RECALL", "CORRECT", "TALLY"):
            aggregates[key] = (lineno, parts[1:])
        else:
            raise ParseError(f"line {lineno}: unknown record {key!r}")
    binaries = [
        BinaryEval(b.binary_id, b.tp, b.fp, b.fn, b.soundness, errors.pop(b.binary_id, ""))
        for b in binaries
    ]
    if errors:
        raise ParseError(f"FAIL lines for unknown binaries: {sorted(errors)}")
    report = EvalReport(tuple(binaries))
    checks = {
        "POOLED": [str(v) for v in report._pooled()],
        "PRECISION": [str(report.precision)],
        "RECALL": [str(report.recall)],
        "CORRECT": [str(report.correct_count), str(report.evaluated)],
        "TALLY": [
            str(report.sound_count),
            str(report.unsound_count),
            str(report.failure_count),
        ],
    }
    for key, expected in checks.items():
        if key not in aggregates:
            raise ParseError(f"eval report missing {key}")
        lineno, got = aggregates[key]
        if got != expected:
            raise ParseError(
                f"line {lineno}: {key} {' '.join(got)} disagrees with BIN lines"
                f" (expected {' '.join(expected)})"
            )
    return report


def format_train_summary(report, registry=REGISTRY):
    """Human-readable training summary (includes timings)."""
    lines = [
        f"trained on {len(report.binaries)} binaries"
        f" ({len(report.failures)} failed) in {report.elapsed:.2f}s",
        f"pooled {len(report.pooled)} constraints;"
        f" objective {report.solve.objective}"
        f" ({report.solve.satisfied} satisfied, {report.solve.violated} violated)",
    ]
    zeros = report.zero_heuristics(registry)
    if zeros:
        lines.append("zero-weight heuristics: " + ", ".join(zeros))
    for b in report.failures:
        lines.append(f"  failed {b.binary_id}: {b.error}")
    return "\n".join(lines) + "\n"


def format_eval_summary(report):
    """Human-readable evaluation summary (includes timings)."""
    lines = [
        f"evaluated {len(report.binaries)} binaries"
        f" ({report.failure_count} failed) in {report.elapsed:.2f}s",
        f"precision {float(report.precision):.4f}"
        f"  recall {float(report.recall):.4f}"
        f"  correct {report.correct_count}/{report.evaluated}",
        f"soundness: {report.sound_count} sound,"
        f" {report.unsound_count} unsound, {report.failure_count} failures",
    ]
    slow = max(report.binaries, key=lambda b: b.runtime, default=None)
    if slow is not None and slow.runtime > 0:
        lines.append(f"slowest binary: {slow.binary_id} ({slow.runtime:.2f}s)")
    return "\n".join(lines) + "\n"
