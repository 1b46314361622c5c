"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Everything runs against the deterministic keyword-oracle and fixture backends:
no network. Criterion 2 is implemented exactly as specified and is expected to
fail: two of the eighteen published rows cannot be reproduced within the
stated tolerance from display-rounded inputs (see the README's known-red note).
"""

from __future__ import annotations

import json
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as sps

from capgap.backends import (
    MixedFixtureGenerator,
    OracleBackend,
    OracleConfig,
    default_oracle_config,
    fixture_goal,
)
from capgap.clarify import SessionState, force_finalize, start_session, submit_responses
from capgap.coverage import assess, save_matrix
from capgap.errors import PartialResultError
from capgap.gaps import detect_gaps
from capgap.model import Subgoal, SubgoalSet, canonical_json, validate_subgoal_set
from capgap.planter import pattern_for_subgoal, plant_pool
from capgap.corruption import check_expected_direction, run_experiment
from capgap.stats import cohens_d, paired_t_test, relative_change, separation_report
from capgap.storage import ScoreCache
from capgap.synthesis import (
    FilterMode,
    FilterPolicy,
    SynthesisConfig,
    filter_dataset,
    recommend_for_gaps,
    synthesize,
)


class _Timer:
    def __init__(self, budget_s: float) -> None:
        self.budget = budget_s
        self.start = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def check(self) -> None:
        assert self.elapsed < self.budget, (
            f"runtime {self.elapsed:.2f}s exceeded the {self.budget}s budget"
        )


def _report(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number} [{name}]: {status}{suffix}")


# -- criterion 1 ---------------------------------------------------------------

_PLANT_KEYWORDS = {
    "clinical_reasoning": ["diagnosis", "symptom", "patient", "treatment", "clinical", "evidence"],
    "cardiology_expertise": ["cardiac", "cardio", "heart", "cardiovascular", "ecg", "ekg", "myocardial", "coronary"],
    "drug_information": ["drug", "medication", "dosage", "mg", "ml", "pharmaceutical", "prescription"],
}
_PLANT_DENSITIES = {
    "clinical_reasoning": "1/2",
    "cardiology_expertise": "2/5",
    "drug_information": "1/2",
}


def test_criterion_1_corruption_separation():
    timer = _Timer(30.0)
    pool = plant_pool(_PLANT_KEYWORDS, _PLANT_DENSITIES, n=300, seed=20250809)
    assert len(pool) == 300
    subgoals = SubgoalSet(
        goal_id="goal-planted",
        subgoals=tuple(
            Subgoal(id=sid, label=sid.replace("_", " ").title(), description=f"Support {sid}.")
            for sid in _PLANT_KEYWORDS
        ),
    )
    backend = OracleBackend(OracleConfig.from_dict(_PLANT_KEYWORDS))
    original = assess(pool, subgoals, backend, tau=0.4)

    ok = True
    details = []
    for sid in _PLANT_KEYWORDS:
        pattern = pattern_for_subgoal(sid, _PLANT_KEYWORDS)
        report = run_experiment(pool, subgoals, pattern, backend, tau=0.4, original_matrix=original)
        target = report.target_row
        assert target.subgoal_id == sid
        # target must degrade by at least 15% relative
        if not (target.delta_rel_pct is not None and target.delta_rel_pct <= -15.0):
            ok = False
        # non-targets must hold within the harness's absolute drift bound
        for row in report.nontarget_rows():
            if abs(row.delta_abs) > 0.05:
                ok = False
        if check_expected_direction(report, epsilon=0.05):
            ok = False
        # the target must be the most-degraded row of its experiment
        defined = [r for r in report.rows if r.delta_rel_pct is not None]
        most_degraded = min(defined, key=lambda r: r.delta_rel_pct)
        if most_degraded.subgoal_id != sid:
            ok = False
        details.append(f"{pattern.name}: target {target.delta_rel_pct:+.1f}%")

    timer.check()
    _report(1, "corruption separation", ok, "; ".join(details) + f"; {timer.elapsed:.1f}s")
    assert ok


# -- criterion 2 ---------------------------------------------------------------

_TABLE2_ROWS = [
    # (original, after, published delta_rel %)
    ("legal monetary / legislative", 0.769, 0.767, -0.26),
    ("legal monetary / monetary", 0.577, 0.400, -30.75),
    ("legal monetary / healthcare", 0.232, 0.281, 21.11),
    ("legal healthcare / legislative", 0.769, 0.768, -0.13),
    ("legal healthcare / monetary", 0.577, 0.577, -0.15),
    ("legal healthcare / healthcare", 0.232, 0.022, -90.58),
    ("code ml / general", 0.599, 0.602, 0.54),
    ("code ml / ml", 0.090, 0.076, -15.53),
    ("code ml / web", 0.141, 0.143, 1.40),
    ("code web / general", 0.599, 0.599, 0.01),
    ("code web / ml", 0.090, 0.092, 2.63),
    ("code web / web", 0.141, 0.128, -9.03),
    ("medical cardiology / clinical", 0.222, 0.220, -0.87),
    ("medical cardiology / cardiology", 0.068, 0.050, -26.28),
    ("medical cardiology / drugs", 0.048, 0.045, -6.13),
    ("medical drugs / clinical", 0.222, 0.221, -0.54),
    ("medical drugs / cardiology", 0.068, 0.070, 2.00),
    ("medical drugs / drugs", 0.048, 0.039, -19.38),
]


def test_criterion_2_published_table_arithmetic():
    """Feeding the published (original, after) pairs into relative_change must
    reproduce every published relative change within 0.5 percentage points.

    KNOWN SPEC DEFECT: the two smallest-denominator rows (original 0.068 and
    0.048) are quantized by display rounding more coarsely than 0.5 pp, so
    they deviate by 0.94 and 0.63 pp no matter the implementation. The
    check is asserted at the stated tolerance and fails honestly; the README
    documents the analysis. The remaining 16 rows reproduce within tolerance.
    """
    timer = _Timer(1.0)
    deviations = []
    for name, original, after, published in _TABLE2_ROWS:
        computed = relative_change(original, after)
        deviations.append((abs(computed - published), name, computed, published))
    timer.check()
    worst = max(deviations)
    ok = worst[0] <= 0.5
    offenders = [
        f"{name}: computed {computed:+.2f} vs published {published:+.2f} "
        f"(off by {dev:.2f} pp)"
        for dev, name, computed, published in deviations
        if dev > 0.5
    ]
    _report(
        2,
        "published-table arithmetic, 18 rows at ±0.5 pp",
        ok,
        "; ".join(offenders) if offenders else f"max deviation {worst[0]:.3f} pp",
    )
    assert ok, (
        "rows exceed the ±0.5 pp display-rounding tolerance: "
        + "; ".join(offenders)
        + " — unreachable from display-rounded inputs; see README (known red test)"
    )


# -- criterion 3 ---------------------------------------------------------------

def test_criterion_3_statistics_oracle_equivalence():
    timer = _Timer(5.0)
    rng = random.Random(31337)
    checked_d = checked_t = 0
    while checked_d < 100:
        na, nb = rng.randint(2, 12), rng.randint(2, 12)
        a = [rng.uniform(-10, 10) for _ in range(na)]
        b = [rng.uniform(-10, 10) for _ in range(nb)]
        va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
        pooled = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        if pooled <= 1e-9:
            continue
        expected = (np.mean(a) - np.mean(b)) / np.sqrt(pooled)
        assert abs(cohens_d(a, b) - expected) < 1e-6
        checked_d += 1
    while checked_t < 100:
        n = rng.randint(2, 15)
        a = [rng.uniform(-5, 5) for _ in range(n)]
        b = [rng.uniform(-5, 5) for _ in range(n)]
        if np.var(np.array(a) - np.array(b), ddof=1) < 1e-9:
            continue
        expected_t, expected_p = sps.ttest_rel(a, b)
        t, p, df = paired_t_test(list(zip(a, b)))
        assert abs(t - expected_t) < 1e-6
        assert abs(p - expected_p) < 1e-6
        assert df == n - 1
        checked_t += 1

    # tabulated checkpoint
    from capgap.stats import student_t_sf_two_sided

    checkpoint = student_t_sf_two_sided(2.571, 5)
    assert abs(checkpoint - 0.050) <= 0.001

    # the artifact reports its own aggregate values with an explicit convention
    from capgap.model import ExperimentReport, make_experiment_row

    def _row(sid, orig, after, target):
        return make_experiment_row(sid, orig, after, target)

    reports = []
    blocks = [
        ("legal_monetary", [(0.769, 0.767, False), (0.577, 0.400, True), (0.232, 0.281, False)], 25.4),
        ("legal_healthcare", [(0.769, 0.768, False), (0.577, 0.577, False), (0.232, 0.022, True)], 47.0),
        ("code_ml", [(0.599, 0.602, False), (0.090, 0.076, True), (0.141, 0.143, False)], 96.2),
        ("code_web", [(0.599, 0.599, False), (0.090, 0.092, False), (0.141, 0.128, True)], 91.4),
        ("medical_cardiology", [(0.222, 0.220, False), (0.068, 0.050, True), (0.048, 0.045, False)], 93.6),
        ("medical_drugs", [(0.222, 0.221, False), (0.068, 0.070, False), (0.048, 0.039, True)], 90.3),
    ]
    for name, rows, retention in blocks:
        reports.append(
            ExperimentReport(
                pattern_name=name,
                retention_pct=retention,
                rows=tuple(
                    _row(f"sg{i}", orig, after, target) for i, (orig, after, target) in enumerate(rows)
                ),
            )
        )
    separation = separation_report(reports)
    assert separation.convention_note
    # frozen from independent spreadsheet-style arithmetic over the same rows
    # (raw signed means of recomputed relative changes)
    assert separation.mean_target == pytest.approx(-31.8649, abs=0.01)
    assert separation.cohens_d == pytest.approx(-1.9192, abs=0.01)
    assert 0.0 <= separation.p_value <= 1.0

    timer.check()
    _report(3, "statistics oracle equivalence", True,
            f"200 randomized checks at 1e-6; checkpoint p={checkpoint:.4f}; {timer.elapsed:.1f}s")


# -- criterion 4 ---------------------------------------------------------------

def _pipeline_run(run_dir: Path, cache_dir: Path, seed: int) -> OracleBackend:
    keywords = {
        "alpha": ["amber", "basalt", "cobalt", "dune"],
        "beta": ["ember", "fjord"],
        "gamma": ["granite", "harbor", "indigo", "juniper", "krill"],
    }
    pool = plant_pool(keywords, {"alpha": "3/4", "beta": "1/2", "gamma": "1/4"}, n=64, seed=seed)
    subgoals = SubgoalSet(
        goal_id="goal-det",
        subgoals=tuple(Subgoal(id=k, label=k.title(), description=f"Support {k}.") for k in keywords),
    )
    backend = OracleBackend(OracleConfig.from_dict(keywords))
    with ScoreCache(cache_dir) as cache:
        matrix = assess(pool, subgoals, backend, tau=0.4, cache=cache)
    save_matrix(matrix, run_dir / "matrix")
    report = detect_gaps(matrix, 0.4, backend)
    (run_dir / "gaps.json").write_text(canonical_json(report.to_dict()) + "\n", encoding="utf-8")
    recommendations = recommend_for_gaps(report, backend)
    (run_dir / "recommendations.json").write_text(
        canonical_json([r.to_dict() for r in recommendations]) + "\n", encoding="utf-8"
    )
    return backend


def test_criterion_4_pipeline_determinism(tmp_path):
    timer = _Timer(20.0)
    seed = 77
    backend_a = _pipeline_run(tmp_path / "run_a", tmp_path / "cache_a", seed)
    backend_b = _pipeline_run(tmp_path / "run_b", tmp_path / "cache_b", seed)
    files = ["matrix.summary.json", "matrix.records.jsonl", "gaps.json", "recommendations.json"]
    for name in files:
        bytes_a = (tmp_path / "run_a" / name).read_bytes()
        bytes_b = (tmp_path / "run_b" / name).read_bytes()
        assert bytes_a == bytes_b, f"{name} differs between identical runs"
    assert backend_a.evaluations == backend_b.evaluations == 192

    # third run reuses run_b's cache: zero evaluations
    backend_c = _pipeline_run(tmp_path / "run_c", tmp_path / "cache_b", seed)
    assert backend_c.evaluations == 0
    for name in files:
        assert (tmp_path / "run_c" / name).read_bytes() == (tmp_path / "run_a" / name).read_bytes()

    timer.check()
    _report(4, "pipeline determinism", True,
            f"byte-identical across runs; warm-cache evaluations=0; {timer.elapsed:.1f}s")


# -- criterion 5 ---------------------------------------------------------------

def test_criterion_5_filtering_improves_alignment():
    timer = _Timer(10.0)
    keywords = {
        "alpha": ["amber", "basalt", "cobalt", "dune"],
        "beta": ["ember", "fjord"],
        "gamma": ["granite", "harbor", "indigo", "juniper", "krill"],
    }
    pool = plant_pool(
        keywords, {"alpha": "1/2", "beta": "1/4", "gamma": "3/4"}, n=160, seed=99
    )
    subgoals = SubgoalSet(
        goal_id="goal-filter",
        subgoals=tuple(Subgoal(id=k, label=k.title(), description=f"Support {k}.") for k in keywords),
    )
    backend = OracleBackend(OracleConfig.from_dict(keywords))
    tau = 0.4
    matrix = assess(pool, subgoals, backend, tau=tau)

    sids = [s.id for s in subgoals.subgoals]

    def mean_of(dataset) -> float:
        per_sample = [
            sum(matrix.records[(s.id, sid)].score for sid in sids) / len(sids)
            for s in dataset.samples
        ]
        return sum(per_sample) / len(per_sample)

    unfiltered_mean = mean_of(pool)
    filtered = filter_dataset(pool, matrix, FilterPolicy(FilterMode.MEAN, theta=tau))
    assert 0 < len(filtered) < len(pool), "fixture must be non-constant"
    filtered_mean = mean_of(filtered)
    assert filtered_mean > unfiltered_mean

    previous = None
    for theta in [0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0]:
        kept = set(filter_dataset(pool, matrix, FilterPolicy(FilterMode.MEAN, theta)).sample_ids())
        if previous is not None:
            assert kept <= previous, "raising theta added samples"
        previous = kept

    timer.check()
    _report(5, "filtering improves alignment", True,
            f"mean {unfiltered_mean:.3f} -> {filtered_mean:.3f}; sweep monotone; {timer.elapsed:.1f}s")


# -- criterion 6 ---------------------------------------------------------------

def test_criterion_6_synthesis_soundness():
    timer = _Timer(10.0)
    keywords = {"beta": ["ember", "fjord"]}
    config = OracleConfig.from_dict(keywords)
    generator = MixedFixtureGenerator(config, period=2)  # 50% viable candidates
    discriminator = OracleBackend(config)
    subgoal = Subgoal(id="beta", label="Beta", description="Support beta.")
    target, batch = 10, 10
    run = synthesize(
        subgoal, None, generator, discriminator,
        SynthesisConfig(target_count=target, accept_threshold=0.8, max_iterations=5, batch_size=batch),
    )
    # derived bound: ceil(target / (batch * viable_rate)) = ceil(10 / 5) = 2
    assert len(run.accepted) == target
    assert run.iterations_used <= 2

    rescorer = OracleBackend(config)
    for sample in run.accepted:
        record = rescorer.score_alignment(sample, subgoal)
        assert record.ok and record.score >= run.accept_threshold

    timer.check()
    _report(6, "synthesis soundness", True,
            f"{target} accepted in {run.iterations_used} iterations, all rescored >= 0.8; {timer.elapsed:.1f}s")


# -- criterion 7 ---------------------------------------------------------------

def test_criterion_7_clarification_termination():
    timer = _Timer(10.0)
    rng = random.Random(4242)
    domains = ["medical", "legal", "code"]
    for trial in range(1000):
        domain = domains[trial % 3]
        max_rounds = rng.randint(1, 5)
        complete_after = rng.choice([None, 0, 1, 2, 3, 10])
        backend = OracleBackend(
            default_oracle_config(domain), complete_after_rounds=complete_after
        )
        session = start_session(fixture_goal(domain), backend, max_rounds=max_rounds)
        submits = 0
        if trial % 7 == 0 and session.state is SessionState.AWAITING_RESPONSES:
            session = force_finalize(session, backend)
        while session.state is SessionState.AWAITING_RESPONSES:
            answers = [f"answer {i}" for i in range(len(session.pending_questions))]
            session = submit_responses(session, answers, backend)
            submits += 1
            assert submits <= max_rounds, "exceeded max_rounds without terminating"
        assert session.state is SessionState.DECOMPOSED
        assert validate_subgoal_set(session.result) == []
    timer.check()
    _report(7, "clarification termination", True,
            f"1000 randomized sessions, all within max_rounds; {timer.elapsed:.1f}s")


# -- criterion 8 ---------------------------------------------------------------

class _SimulatedCrash(BaseException):
    """Raised to emulate the process dying mid-assessment."""


class _CrashingCache(ScoreCache):
    def __init__(self, directory, crash_after_puts: int) -> None:
        super().__init__(directory)
        self.remaining = crash_after_puts

    def put(self, key, record) -> None:
        if self.remaining <= 0:
            raise _SimulatedCrash("process killed mid-assessment")
        self.remaining -= 1
        super().put(key, record)


def test_criterion_8_crash_safety(tmp_path):
    timer = _Timer(15.0)
    keywords = {
        "alpha": ["amber", "basalt"],
        "beta": ["ember", "fjord"],
        "gamma": ["granite", "harbor"],
    }
    pool = plant_pool(keywords, {"alpha": "1/2", "beta": "1/2", "gamma": "1/2"}, n=8, seed=5)
    subgoals = SubgoalSet(
        goal_id="goal-crash",
        subgoals=tuple(Subgoal(id=k, label=k.title(), description=f"Support {k}.") for k in keywords),
    )
    total_pairs = len(pool) * 3
    for k in [0, 1, total_pairs // 2, total_pairs - 1]:
        cache_dir = tmp_path / f"crash-{k}"
        crashing = _CrashingCache(cache_dir, crash_after_puts=k)
        backend = OracleBackend(OracleConfig.from_dict(keywords))
        with pytest.raises(_SimulatedCrash):
            # concurrency 1 so exactly k records land before the crash
            assess(pool, subgoals, backend, tau=0.4, cache=crashing, concurrency_limit=1)
        # no close(): the crash leaves the lock file behind on purpose

        resumed_backend = OracleBackend(OracleConfig.from_dict(keywords))
        with ScoreCache(cache_dir) as cache:
            matrix = assess(pool, subgoals, resumed_backend, tau=0.4, cache=cache, concurrency_limit=1)
            assert len(matrix.records) == total_pairs
            assert resumed_backend.evaluations == total_pairs - k
            assert len(cache) == total_pairs  # one entry per pair, no duplicates
        pair_keys = list(matrix.records)
        assert len(set(pair_keys)) == total_pairs
    timer.check()
    _report(8, "crash safety", True,
            f"resume with no duplicate or torn records for K in {{0,1,{total_pairs//2},{total_pairs-1}}}; {timer.elapsed:.1f}s")
