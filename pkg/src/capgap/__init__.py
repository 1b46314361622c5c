"""Capability-gap diagnostics for fine-tuning datasets.

Decomposes a fine-tuning goal into atomic subgoals, scores every training
sample against every subgoal, surfaces under-supported capabilities with
remediation and targeted synthesis, and validates its own detection with a
controlled-corruption harness and separation statistics.
"""

from .clarify import (
    ClarificationSession,
    SessionState,
    abandon_session,
    force_finalize,
    start_session,
    submit_responses,
)
from .corruption import (
    CorruptionResult,
    PoolConfig,
    build_pool,
    check_expected_direction,
    corrupt,
    load_builtin_patterns,
    matches,
    run_experiment,
)
from .coverage import CoverageMatrix, assess, load_matrix, low_scoring, mean_alignment, save_matrix
from .gaps import GapReport, detect_gaps, gap_severity
from .model import (
    ANCHORS,
    AlignmentRecord,
    ClarifyingExchange,
    CoverageSummary,
    Dataset,
    ExperimentReport,
    GapFinding,
    Goal,
    Provenance,
    Recommendation,
    RemovalPattern,
    Sample,
    Subgoal,
    SubgoalSet,
    SynthesisPlan,
    snap_to_anchor,
    validate_subgoal_set,
)
from .planter import pattern_for_subgoal, plant_pool
from .stats import (
    SeparationResult,
    cohens_d,
    paired_t_test,
    relative_change,
    separation_report,
)
from .storage import FieldMapping, ScoreCache, load_dataset
from .synthesis import (
    FilterMode,
    FilterPolicy,
    SynthesisConfig,
    SynthesisRun,
    filter_dataset,
    recommend_for_gaps,
    synthesize,
)

__version__ = "0.1.0"
