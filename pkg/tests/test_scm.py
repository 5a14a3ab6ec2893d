import numpy as np
import pytest

from propaudit.dataset import export_dataset, export_manifest, load_dataset, standardize
from propaudit.nulls import TestOutcome as Outcome
from propaudit.rcot import RcotConfig, rcot_test
from propaudit.scm import (
    INDEPENDENT_ABBR,
    PLANTED_ABBR,
    ScmSpec,
    calibration_run,
    generate_pipeline_fixture,
    generate_scm_dataset,
)


class TestScmSpec:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            ScmSpec(kind="mystery")

    def test_rejects_tiny_n(self):
        with pytest.raises(ValueError):
            ScmSpec(kind="null_common_cause", n=10)

    def test_rejects_negative_effect(self):
        with pytest.raises(ValueError):
            ScmSpec(kind="direct_dependence", effect_size=-0.1)


class TestCommonCauseGenerator:
    def test_deterministic(self):
        spec = ScmSpec(kind="null_common_cause", n=200, seed=3)
        a = generate_scm_dataset(spec)
        b = generate_scm_dataset(spec)
        for arr_a, arr_b in zip(a[:3], b[:3]):
            np.testing.assert_array_equal(arr_a, arr_b)

    def test_null_truth_is_independent(self):
        _, _, _, truth = generate_scm_dataset(ScmSpec(kind="null_common_cause", n=100))
        assert truth.dependent("x", "y") is False

    def test_zero_effect_direct_equals_null(self):
        null = generate_scm_dataset(ScmSpec(kind="null_common_cause", n=150, seed=9))
        direct = generate_scm_dataset(
            ScmSpec(kind="direct_dependence", n=150, seed=9, effect_size=0.0)
        )
        for a, b in zip(null[:3], direct[:3]):
            np.testing.assert_array_equal(a, b)
        assert direct[3].dependent("x", "y") is False

    def test_positive_effect_flagged_dependent(self):
        _, _, _, truth = generate_scm_dataset(
            ScmSpec(kind="direct_dependence", n=100, effect_size=0.5)
        )
        assert truth.dependent("x", "y") is True

    def test_binary_property_values(self):
        x, _, _, _ = generate_scm_dataset(
            ScmSpec(kind="null_common_cause", n=200, property_kind="binary", seed=1)
        )
        assert set(np.unique(x)) <= {0.0, 1.0}
        # median split keeps the groups roughly balanced
        assert 0.4 <= x.mean() <= 0.6

    def test_pipeline_kind_rejected(self):
        with pytest.raises(ValueError):
            generate_scm_dataset(ScmSpec(kind="pipeline_fixture"))


class TestPipelineFixture:
    def test_shape_and_cells(self):
        dataset, truth = generate_pipeline_fixture(
            ScmSpec(kind="pipeline_fixture", n=140, seed=0)
        )
        assert dataset.n == 140
        assert dataset.n_classes == 7
        assert len(truth.cells) == 14
        assert truth.dependent(PLANTED_ABBR, "happy") is True
        for name in dataset.class_names:
            assert truth.dependent(INDEPENDENT_ABBR, name) is False
            if name != "happy":
                assert truth.dependent(PLANTED_ABBR, name) is False

    def test_labels_balanced(self):
        dataset, _ = generate_pipeline_fixture(ScmSpec(kind="pipeline_fixture", n=140, seed=2))
        counts = np.bincount(dataset.true_label, minlength=7)
        assert np.all(counts == 20)

    def test_zero_effect_all_independent(self):
        _, truth = generate_pipeline_fixture(
            ScmSpec(kind="pipeline_fixture", n=140, effect_size=0.0)
        )
        assert not any(truth.cells.values())

    def test_csv_round_trip(self, tmp_path):
        dataset, _ = generate_pipeline_fixture(ScmSpec(kind="pipeline_fixture", n=70, seed=5))
        export_dataset(dataset, tmp_path / "fix.csv")
        export_manifest(dataset, tmp_path / "fix_manifest.json")
        again = load_dataset(tmp_path / "fix.csv", tmp_path / "fix_manifest.json")
        np.testing.assert_allclose(again.logits, dataset.logits, atol=1e-12)
        np.testing.assert_array_equal(again.true_label, dataset.true_label)
        np.testing.assert_allclose(
            again.properties[PLANTED_ABBR], dataset.properties[PLANTED_ABBR], atol=1e-12
        )


def _uniform_stub(rate_seed_salt):
    """A fake test whose p-values are exactly uniform, for report plumbing."""

    def fn(x, y, z, seed):
        p = float(np.random.default_rng((seed + rate_seed_salt) % 2**32).uniform())
        return Outcome(
            test_id="rcot", statistic=0.0, p_value=p, n_used=len(x), seed=seed,
            config_echo="stub",
        )

    return fn


class TestCalibrationRun:
    def test_uniform_stub_rejects_near_alpha(self):
        spec = ScmSpec(kind="null_common_cause", n=50, seed=0)
        report = calibration_run({"stub": _uniform_stub(0)}, spec, trials=400, alpha=0.05)
        rate = report["tests"]["stub"]["rejection_rate"]
        # binomial: 400 trials at p=0.05 -> 3 sigma is about 0.033
        assert abs(rate - 0.05) <= 0.035
        assert report["tests"]["stub"]["completed_trials"] == 400
        assert report["tests"]["stub"]["failures"] == []

    def test_ci_brackets_rate(self):
        spec = ScmSpec(kind="null_common_cause", n=50, seed=1)
        report = calibration_run({"stub": _uniform_stub(7)}, spec, trials=100, alpha=0.05)
        t = report["tests"]["stub"]
        assert t["ci_low"] <= t["rejection_rate"] <= t["ci_high"]

    def test_warns_below_fifty_trials(self):
        warnings = []
        spec = ScmSpec(kind="null_common_cause", n=50, seed=2)
        calibration_run({"stub": _uniform_stub(1)}, spec, trials=5, alpha=0.05,
                        warn=warnings.append)
        assert len(warnings) == 1 and "50" in warnings[0]

    def test_failures_counted_not_fatal(self):
        def broken(x, y, z, seed):
            raise RuntimeError("boom")

        spec = ScmSpec(kind="null_common_cause", n=50, seed=3)
        report = calibration_run({"bad": broken}, spec, trials=60, alpha=0.05)
        assert report["tests"]["bad"]["completed_trials"] == 0
        assert len(report["tests"]["bad"]["failures"]) == 60

    def test_power_increases_with_effect_size(self):
        def rcot_fn(x, y, z, seed):
            return rcot_test(x, y, z, RcotConfig(seed=seed))

        rates = []
        for effect in (0.2, 0.8):
            spec = ScmSpec(kind="direct_dependence", n=300, effect_size=effect, seed=4)
            report = calibration_run({"rcot": rcot_fn}, spec, trials=25, alpha=0.05)
            rates.append(report["tests"]["rcot"]["rejection_rate"])
        assert rates[1] > rates[0]
        assert rates[1] >= 0.9
