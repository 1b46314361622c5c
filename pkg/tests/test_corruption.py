from __future__ import annotations

from fractions import Fraction

import pytest

from capgap.backends import OracleBackend, OracleConfig
from capgap.corruption import (
    PoolConfig,
    build_pool,
    corrupt,
    load_builtin_patterns,
    matches,
    run_experiment,
)
from capgap.errors import PreconditionError, ShortfallError
from capgap.model import (
    Dataset,
    MatchScope,
    RemovalPattern,
    Sample,
    Subgoal,
    SubgoalSet,
)
from capgap.planter import pattern_for_subgoal, plant_pool

from conftest import make_dataset, naive_mean, naive_term_hit


class TestMatches:
    def test_no_term_present_is_false(self):
        pattern = RemovalPattern(name="p", terms=frozenset({"cardiac", "heart"}), target_subgoal_id="sg")
        sample = Sample(id="s", input="case notes", output="myocardial infarction risk")
        # "myocardial" is a different term not in this pattern
        assert matches(pattern, sample) is False

    def test_symbol_and_word_terms(self):
        pattern = RemovalPattern(name="p", terms=frozenset({"$", "million"}), target_subgoal_id="sg")
        sample = Sample(id="s", input="the act appropriates $4 million", output="")
        assert matches(pattern, sample) is True

    def test_scope_restricts_fields(self):
        pattern = RemovalPattern(
            name="p", terms=frozenset({"ember"}), target_subgoal_id="sg", match_scope=MatchScope.INPUT
        )
        sample = Sample(id="s", input="nothing here", output="ember in the output only")
        assert matches(pattern, sample) is False
        both = RemovalPattern(
            name="p", terms=frozenset({"ember"}), target_subgoal_id="sg", match_scope=MatchScope.BOTH
        )
        assert matches(both, sample) is True


class TestCorrupt:
    def test_counts_and_retention(self):
        texts = ["cardiac event"] * 3 + ["routine checkup"] * 7
        dataset = make_dataset(texts)
        pattern = RemovalPattern(name="p", terms=frozenset({"cardiac"}), target_subgoal_id="sg")
        result = corrupt(dataset, pattern)
        assert len(result.corrupted) == 7
        assert result.retention_pct == pytest.approx(70.0)
        assert not result.emptied

    def test_no_match_is_identity(self):
        dataset = make_dataset(["alpha", "beta", "gamma"])
        pattern = RemovalPattern(name="p", terms=frozenset({"zzz"}), target_subgoal_id="sg")
        result = corrupt(dataset, pattern)
        assert result.retention_pct == 100.0
        assert result.corrupted.sample_ids() == dataset.sample_ids()

    def test_total_removal_flags_not_raises(self):
        dataset = make_dataset(["cardiac one", "cardiac two"])
        pattern = RemovalPattern(name="p", terms=frozenset({"cardiac"}), target_subgoal_id="sg")
        result = corrupt(dataset, pattern)
        assert result.emptied
        assert result.retention_pct == 0.0

    def test_order_preserved(self):
        dataset = make_dataset(["keep a", "cardiac", "keep b", "cardiac", "keep c"])
        pattern = RemovalPattern(name="p", terms=frozenset({"cardiac"}), target_subgoal_id="sg")
        result = corrupt(dataset, pattern)
        assert [s.input for s in result.corrupted.samples] == ["keep a", "keep b", "keep c"]


class TestBuildPool:
    @pytest.fixture
    def source(self):
        # half plain, a quarter each pattern-bearing: every slice has slack
        texts = []
        for i in range(240):
            if i % 4 == 0:
                texts.append(f"record {i} with pearl content")
            elif i % 4 == 1:
                texts.append(f"record {i} with quartz content")
            else:
                texts.append(f"record {i} plain")
        return make_dataset(texts)

    @pytest.fixture
    def patterns(self):
        return [
            RemovalPattern(name="pearl", terms=frozenset({"pearl"}), target_subgoal_id="p"),
            RemovalPattern(name="quartz", terms=frozenset({"quartz"}), target_subgoal_id="q"),
        ]

    def test_allocation_arithmetic(self, source, patterns):
        pool = build_pool(source, patterns, PoolConfig(target_size=60, pool_factor=1.5, seed=3))
        assert len(pool) == 60
        base = [s for s in pool.samples if not any(matches(p, s) for p in patterns)]
        pearl = [s for s in pool.samples if matches(patterns[0], s)]
        quartz = [s for s in pool.samples if matches(patterns[1], s)]
        assert len(base) == 30
        assert len(pearl) == 15
        assert len(quartz) == 15

    def test_seeded_determinism(self, source, patterns):
        a = build_pool(source, patterns, PoolConfig(target_size=40, seed=7))
        b = build_pool(source, patterns, PoolConfig(target_size=40, seed=7))
        assert a == b
        c = build_pool(source, patterns, PoolConfig(target_size=40, seed=8))
        assert a.sample_ids() != c.sample_ids()

    def test_shortfall_names_pattern_and_deficit(self, source):
        missing = RemovalPattern(name="absent", terms=frozenset({"zzz"}), target_subgoal_id="z")
        with pytest.raises(ShortfallError) as exc_info:
            build_pool(source, [missing], PoolConfig(target_size=60, seed=1))
        assert exc_info.value.slice_name == "absent"
        assert exc_info.value.deficit == 30

    def test_source_too_small_rejected(self, patterns):
        small = make_dataset(["pearl"] * 10)
        with pytest.raises(PreconditionError):
            build_pool(small, patterns, PoolConfig(target_size=100))

    def test_config_bounds(self):
        with pytest.raises(PreconditionError):
            PoolConfig(target_size=10, pool_factor=3.0)
        with pytest.raises(PreconditionError):
            PoolConfig(target_size=10, base_fraction=0.0)


class TestPlanter:
    def test_exact_densities(self):
        keywords = {"a": ["apple"], "b": ["brick"], "c": ["cloud"]}
        densities = {"a": "2/5", "b": "1/2", "c": "1/2"}
        pool = plant_pool(keywords, densities, n=40, seed=5)
        assert len(pool) == 40
        for sid, expected in [("a", Fraction(2, 5)), ("b", Fraction(1, 2)), ("c", Fraction(1, 2))]:
            bearing = sum(
                1 for s in pool.samples if naive_term_hit(keywords[sid][0], s.input)
            )
            assert Fraction(bearing, 40) == expected

    def test_nonintegral_cells_rejected(self):
        keywords = {"a": ["apple"], "b": ["brick"]}
        with pytest.raises(PreconditionError, match="non-integral"):
            plant_pool(keywords, {"a": "1/3", "b": "1/2"}, n=10, seed=0)

    def test_colliding_keywords_rejected(self):
        keywords = {"a": ["apple pie"], "b": ["apple"]}
        with pytest.raises(PreconditionError, match="collide"):
            plant_pool(keywords, {"a": "1/2", "b": "1/2"}, n=8, seed=0)

    def test_oracle_means_equal_densities(self):
        keywords = {
            "a": ["apple", "apricot"],
            "b": ["brick", "bronze", "basil"],
        }
        densities = {"a": "1/4", "b": "1/2"}
        pool = plant_pool(keywords, densities, n=80, seed=11)
        config = OracleConfig.from_dict(keywords)
        backend = OracleBackend(config)
        subgoals = SubgoalSet(
            goal_id="g",
            subgoals=tuple(Subgoal(id=k, label=k.upper(), description=f"{k}.") for k in keywords),
        )
        from capgap.coverage import assess, mean_alignment

        matrix = assess(pool, subgoals, backend)
        assert mean_alignment(matrix, "a") == pytest.approx(0.25, abs=1e-12)
        assert mean_alignment(matrix, "b") == pytest.approx(0.5, abs=1e-12)

    def test_seeded_determinism(self):
        keywords = {"a": ["apple"], "b": ["brick"]}
        densities = {"a": "1/2", "b": "1/2"}
        assert plant_pool(keywords, densities, 20, seed=1) == plant_pool(keywords, densities, 20, seed=1)


class TestRunExperiment:
    @pytest.fixture
    def planted(self):
        keywords = {
            "tgt": ["target1", "target2"],
            "oth": ["other1", "other2"],
            "3rd": ["third1"],
        }
        densities = {"tgt": "2/5", "oth": "1/2", "3rd": "1/2"}
        pool = plant_pool(keywords, densities, n=100, seed=13)
        subgoals = SubgoalSet(
            goal_id="g",
            subgoals=tuple(Subgoal(id=k, label=k, description=f"{k} capability.") for k in keywords),
        )
        return keywords, pool, subgoals

    def test_target_collapses_nontargets_hold(self, planted):
        keywords, pool, subgoals = planted
        backend = OracleBackend(OracleConfig.from_dict(keywords))
        pattern = pattern_for_subgoal("tgt", keywords)
        report = run_experiment(pool, subgoals, pattern, backend, tau=0.4)
        assert report.retention_pct == pytest.approx(60.0)
        target = report.target_row
        assert target.subgoal_id == "tgt"
        assert target.original_mean == pytest.approx(0.4, abs=1e-12)
        assert target.after_mean == pytest.approx(0.0, abs=1e-12)
        assert target.delta_rel_pct == pytest.approx(-100.0, abs=1e-9)
        for row in report.nontarget_rows():
            assert abs(row.delta_abs) <= 1e-12

    def test_means_match_independent_recount(self, planted):
        keywords, pool, subgoals = planted
        backend = OracleBackend(OracleConfig.from_dict(keywords))
        pattern = pattern_for_subgoal("oth", keywords)
        report = run_experiment(pool, subgoals, pattern, backend, tau=0.4)
        survivors = Dataset(
            id="surv",
            samples=tuple(s for s in pool.samples if not matches(pattern, s)),
        )
        for row in report.rows:
            assert row.original_mean == pytest.approx(
                naive_mean(pool, keywords[row.subgoal_id]), abs=1e-12
            )
            assert row.after_mean == pytest.approx(
                naive_mean(survivors, keywords[row.subgoal_id]), abs=1e-12
            )

    def test_no_match_pattern_all_zero_deltas(self, planted):
        keywords, pool, subgoals = planted
        backend = OracleBackend(OracleConfig.from_dict(keywords))
        pattern = RemovalPattern(name="inert", terms=frozenset({"zzzz"}), target_subgoal_id="tgt")
        report = run_experiment(pool, subgoals, pattern, backend, tau=0.4)
        assert report.retention_pct == 100.0
        for row in report.rows:
            assert row.delta_abs == pytest.approx(0.0, abs=1e-12)

    def test_unknown_target_rejected(self, planted):
        keywords, pool, subgoals = planted
        backend = OracleBackend(OracleConfig.from_dict(keywords))
        pattern = RemovalPattern(name="x", terms=frozenset({"target1"}), target_subgoal_id="nope")
        with pytest.raises(PreconditionError):
            run_experiment(pool, subgoals, pattern, backend)

    def test_corruption_never_rescores(self, planted):
        keywords, pool, subgoals = planted
        backend = OracleBackend(OracleConfig.from_dict(keywords))
        pattern = pattern_for_subgoal("tgt", keywords)
        run_experiment(pool, subgoals, pattern, backend, tau=0.4)
        # exactly one assessment pass over the pool: N x k evaluations
        assert backend.evaluations == len(pool) * len(subgoals.subgoals)

    def test_exactly_one_target_row(self, planted):
        keywords, pool, subgoals = planted
        backend = OracleBackend(OracleConfig.from_dict(keywords))
        for sid in keywords:
            report = run_experiment(
                pool, subgoals, pattern_for_subgoal(sid, keywords), backend, tau=0.4
            )
            assert sum(1 for r in report.rows if r.is_target) == 1
            assert report.target_row.subgoal_id == sid


def test_builtin_patterns_cover_all_fixture_domains():
    patterns = {p.name: p for p in load_builtin_patterns()}
    assert set(patterns) == {
        "medical_cardiology", "medical_drugs", "legal_monetary",
        "legal_healthcare", "code_ml", "code_web",
    }
    assert patterns["legal_monetary"].terms >= {"$", "million", "billion"}
    assert patterns["code_ml"].terms >= {"machine learning", "sklearn"}
    assert patterns["medical_cardiology"].target_subgoal_id == "cardiology_expertise"


class TestExpectedDirection:
    def test_clean_report_has_no_violations(self):
        from capgap.corruption import check_expected_direction
        from capgap.model import ExperimentReport, make_experiment_row

        report = ExperimentReport(
            pattern_name="p",
            retention_pct=60.0,
            rows=(
                make_experiment_row("tgt", 0.4, 0.1, True),
                make_experiment_row("oth", 0.5, 0.52, False),
            ),
        )
        assert check_expected_direction(report) == []

    def test_violations_reported(self):
        from capgap.corruption import check_expected_direction
        from capgap.model import ExperimentReport, make_experiment_row

        report = ExperimentReport(
            pattern_name="p",
            retention_pct=60.0,
            rows=(
                make_experiment_row("tgt", 0.4, 0.4, True),      # no degradation
                make_experiment_row("oth", 0.5, 0.58, False),    # drifted 0.08 > 0.05
            ),
        )
        problems = check_expected_direction(report)
        assert any("did not degrade" in p for p in problems)
        assert any("oth" in p and "shifted" in p for p in problems)

    def test_epsilon_configurable(self):
        from capgap.corruption import check_expected_direction
        from capgap.model import ExperimentReport, make_experiment_row

        report = ExperimentReport(
            pattern_name="p",
            retention_pct=60.0,
            rows=(
                make_experiment_row("tgt", 0.4, 0.1, True),
                make_experiment_row("oth", 0.5, 0.58, False),
            ),
        )
        assert check_expected_direction(report, epsilon=0.1) == []
