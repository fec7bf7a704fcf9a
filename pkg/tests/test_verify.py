import dataclasses
import json

import pytest

from treecascade import verify


def _report(name, verdict, expected=verify.PASS):
    return verify.TestReport(
        test_name=name,
        statistic=0.0,
        threshold=1.0,
        replicas=10,
        seed=0,
        verdict=verdict,
        expected=expected,
    )


class TestVerdicts:
    def test_markov_marginal_passes(self):
        rep = verify.test_markov_marginal(depth=8, replicas=600, seed=3)
        assert rep.verdict == verify.PASS
        assert rep.statistic > rep.threshold
        assert rep.replicas == 600

    def test_markov_control_fails(self):
        # control needs the quick-suite sample size for reliable power
        rep = verify.test_markov_marginal(depth=10, replicas=800, seed=3, control=True)
        assert rep.verdict == verify.FAIL
        assert rep.statistic <= rep.threshold

    def test_underpowered_is_inconclusive(self):
        rep = verify.test_markov_marginal(depth=6, replicas=50, seed=3, min_replicas=200)
        assert rep.verdict == verify.INCONCLUSIVE

    def test_martingale_control_fails(self):
        rep = verify.test_martingale(depth=8, replicas=400, seed=5, uncompensated=True)
        assert rep.verdict == verify.FAIL
        assert rep.statistic > rep.threshold

    def test_composition_exact(self):
        rep = verify.test_composition(depth=6, t_end=0.3)
        assert rep.verdict == verify.PASS
        assert rep.statistic < 1e-12


class TestSuites:
    def test_quick_suite_runs_green(self):
        reports = verify.run_suite(verify.quick_suite(seed=42))
        assert len(reports) == 6
        assert verify.unexpected_reports(reports) == []
        by_name = {r.test_name: r for r in reports}
        assert by_name["markov_marginal"].verdict == verify.PASS
        assert by_name["markov_marginal_control"].verdict == verify.FAIL
        assert by_name["markov_marginal_control"].expected == verify.FAIL
        assert by_name["martingale_control"].verdict == verify.FAIL
        assert by_name["composition"].statistic < 1e-12

    def test_entry_seeds_distinct_and_stable(self):
        names = [e.name for e in verify.default_suite().entries]
        seeds = [verify._entry_seed(42, n) for n in names]
        assert len(set(seeds)) == len(seeds)
        assert seeds == [verify._entry_seed(42, n) for n in names]
        assert verify._entry_seed(43, names[0]) != seeds[0]

    def test_unknown_entry_rejected(self):
        config = verify.SuiteConfig(seed=1, entries=(verify.SuiteEntry(name="nope"),))
        with pytest.raises(ValueError, match="unknown test"):
            verify.run_suite(config)

    def test_threads_do_not_change_reports(self):
        config = verify.SuiteConfig(
            seed=9,
            entries=(
                verify.SuiteEntry(name="composition", params={"depth": 6, "t_end": 0.3}),
                verify.SuiteEntry(name="markov_marginal", params={"depth": 8, "replicas": 400}),
            ),
        )
        one = verify.run_suite(config, threads=1)
        four = verify.run_suite(config, threads=4)
        assert one == four


class TestUnexpected:
    def test_matching_verdicts_pass(self):
        reports = [
            _report("a", verify.PASS),
            _report("b", verify.FAIL, expected=verify.FAIL),
        ]
        assert verify.unexpected_reports(reports) == []

    def test_mismatches_surface(self):
        bad = _report("b", verify.PASS, expected=verify.FAIL)
        reports = [_report("a", verify.PASS), bad]
        assert verify.unexpected_reports(reports) == [bad]

    def test_inconclusive_never_fails_suite(self):
        reports = [
            _report("a", verify.INCONCLUSIVE),
            _report("b", verify.INCONCLUSIVE, expected=verify.FAIL),
        ]
        assert verify.unexpected_reports(reports) == []


class TestSerialization:
    def test_json_sorted_and_complete(self):
        reports = [_report("b", verify.PASS), _report("a", verify.FAIL)]
        text = verify.reports_to_json(reports, suite_seed=7)
        data = json.loads(text)
        assert data["suite_seed"] == 7
        assert data["ok"] is False
        assert [r["test_name"] for r in data["reports"]] == ["b", "a"]
        assert set(data["reports"][0]) == {
            "test_name", "statistic", "threshold", "replicas",
            "seed", "verdict", "expected", "detail",
        }
        assert text == verify.reports_to_json(reports, suite_seed=7)

    def test_json_ok_true_when_expected(self):
        reports = [_report("a", verify.FAIL, expected=verify.FAIL)]
        assert json.loads(verify.reports_to_json(reports, suite_seed=1))["ok"] is True

    def test_report_is_frozen(self):
        rep = _report("a", verify.PASS)
        with pytest.raises(dataclasses.FrozenInstanceError):
            rep.verdict = verify.FAIL
