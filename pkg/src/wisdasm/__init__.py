"""Two-mode flat-binary disassembler with learned conflict resolution.

The pipeline decodes every address in both instruction modes, prunes
impossible decodings, walks the survivors into candidate code and data
blocks, scores each block with a fixed registry of heuristics, and picks
the best non-overlapping subset by exact weighted-interval scheduling.
The heuristic weights themselves are learned: labeled binaries yield
symbolic weight constraints, and an exact rational LP turns the pooled
constraints into integer weights.

Ships with a synthetic corpus generator with exact ground truth, a
brute-force oracle for cross-checking, an HTTP service, and a CLI.
"""

from .candidates import CandidateConfig, CandidateResult, generate_candidates
from .corpus import (
    ConfigInvalid,
    CorpusEntry,
    GenConfig,
    GenerationError,
    gen_corpus,
    generate,
    load_corpus,
    load_corpus_binary,
)
from .heuristics import (
    DEFAULT_WEIGHTS,
    REGISTRY,
    Heuristic,
    WeightOverflow,
    load_weights,
    save_weights,
)
from .image import RawImage, Section, load_image, make_image, save_image
from .inference import (
    ScheduleProblem,
    SymbolicSchedule,
    build_problem,
    decompose,
    infer_naive,
    infer_optimized,
)
from .linexpr import Constraint, LinearExpr, load_constraints, save_constraints
from .lp import SolveReport, SolverInternalError, solve_weights
from .model import (
    AmbiguousInstructionOwner,
    Block,
    BlockInvariantError,
    BlockPartition,
    CandidateSet,
    GroundTruth,
    MissedInstruction,
    Mode,
    ModelError,
    ParseError,
    SoundnessReport,
    TrueInstruction,
    check_soundness,
    derive_partition,
    load_sidecar,
    save_sidecar,
)
from .oracle import OracleLimitExceeded, oracle_schedules, oracle_wis
from .pipeline import (
    BinaryEval,
    BinaryTimeout,
    BinaryTrain,
    EvalReport,
    MissingGroundTruth,
    TrainReport,
    disassemble_image,
    eval_corpus,
    infer_image_constraints,
    train_corpus,
)
from .schedule import (
    Resolution,
    ScheduleResult,
    load_disassembly,
    resolve,
    save_disassembly,
    solve_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousInstructionOwner",
    "BinaryEval",
    "BinaryTimeout",
    "BinaryTrain",
    "Block",
    "BlockInvariantError",
    "BlockPartition",
    "CandidateConfig",
    "CandidateResult",
    "CandidateSet",
    "ConfigInvalid",
    "Constraint",
    "CorpusEntry",
    "DEFAULT_WEIGHTS",
    "EvalReport",
    "GenConfig",
    "GenerationError",
    "GroundTruth",
    "Heuristic",
    "LinearExpr",
    "MissedInstruction",
    "MissingGroundTruth",
    "Mode",
    "ModelError",
    "OracleLimitExceeded",
    "ParseError",
    "REGISTRY",
    "RawImage",
    "Resolution",
    "ScheduleProblem",
    "ScheduleResult",
    "Section",
    "SolveReport",
    "SolverInternalError",
    "SoundnessReport",
    "SymbolicSchedule",
    "TrainReport",
    "TrueInstruction",
    "WeightOverflow",
    "build_problem",
    "check_soundness",
    "decompose",
    "derive_partition",
    "disassemble_image",
    "eval_corpus",
    "gen_corpus",
    "generate",
    "generate_candidates",
    "infer_image_constraints",
    "infer_naive",
    "infer_optimized",
    "load_constraints",
    "load_corpus",
    "load_corpus_binary",
    "load_disassembly",
    "load_image",
    "load_sidecar",
    "load_weights",
    "make_image",
    "oracle_schedules",
    "oracle_wis",
    "resolve",
    "save_constraints",
    "save_disassembly",
    "save_image",
    "save_sidecar",
    "save_weights",
    "solve_schedule",
    "solve_weights",
    "train_corpus",
]
