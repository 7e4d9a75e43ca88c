import numpy as np
import pytest

from rffid.errors import ConfigError, InputError
from rffid.inference import (
    ThresholdPolicy,
    calibrate_threshold,
    infer,
    infer_batch,
)


def _rates(legit, rogue, lam):
    fpr = np.mean(np.asarray(legit) > lam)
    fnr = np.mean(np.asarray(rogue) <= lam)
    return fpr, fnr


@pytest.fixture()
def pipeline(mini_pipeline):
    return mini_pipeline


class TestDecisionSemantics:
    def test_enrolled_sample_is_legitimate_at_any_threshold(self, pipeline):
        enrollment = pipeline["enrollment"]
        observed = enrollment.entries[1]
        for lam in (0.0, 0.5, 10.0):
            decision = infer(
                observed, pipeline["pred_model"], pipeline["pred_params"],
                pipeline["sia_model"], pipeline["sia_params"], enrollment, lam,
            )
            if decision.predicted == 1:
                assert decision.distance == 0.0
                assert decision.verdict == "legitimate"

    def test_zero_threshold_flags_positive_distance(self, pipeline):
        observed = pipeline["test"].items[0].spectrogram
        decision = infer(
            observed, pipeline["pred_model"], pipeline["pred_params"],
            pipeline["sia_model"], pipeline["sia_params"],
            pipeline["enrollment"], 0.0,
        )
        assert decision.distance > 0.0
        assert decision.verdict == "rogue"

    def test_boundary_distance_is_legitimate(self, pipeline):
        observed = pipeline["test"].items[0].spectrogram
        probe = infer(
            observed, pipeline["pred_model"], pipeline["pred_params"],
            pipeline["sia_model"], pipeline["sia_params"],
            pipeline["enrollment"], 1.0,
        )
        boundary = infer(
            observed, pipeline["pred_model"], pipeline["pred_params"],
            pipeline["sia_model"], pipeline["sia_params"],
            pipeline["enrollment"], probe.distance,
        )
        assert boundary.verdict == "legitimate"

    def test_threshold_monotonicity(self, pipeline):
        observations = [item.spectrogram for item in pipeline["test"].items][:10]
        distances = [
            infer(
                obs, pipeline["pred_model"], pipeline["pred_params"],
                pipeline["sia_model"], pipeline["sia_params"],
                pipeline["enrollment"], 0.0,
            ).distance
            for obs in observations
        ]
        sweep = np.linspace(0.0, max(distances) * 1.2, 100)
        previous_legit: set[int] = set()
        for lam in sweep:
            legit = {i for i, d in enumerate(distances) if d <= lam}
            assert previous_legit <= legit
            previous_legit = legit

    def test_purity(self, pipeline):
        observed = pipeline["test"].items[3].spectrogram
        args = (
            observed, pipeline["pred_model"], pipeline["pred_params"],
            pipeline["sia_model"], pipeline["sia_params"],
            pipeline["enrollment"], 0.37,
        )
        first = infer(*args)
        second = infer(*args)
        assert first.verdict == second.verdict
        assert first.distance == second.distance
        assert first.predicted == second.predicted

    def test_audit_distance_matches_recomputation(self, pipeline):
        observed = pipeline["test"].items[5].spectrogram
        decision = infer(
            observed, pipeline["pred_model"], pipeline["pred_params"],
            pipeline["sia_model"], pipeline["sia_params"],
            pipeline["enrollment"], 0.5,
        )
        reference = pipeline["enrollment"].entry(decision.predicted)
        pair = pipeline["sia_model"].distance(
            pipeline["sia_params"], reference, observed
        )
        assert decision.distance == pytest.approx(pair.distance, abs=1e-12)

    def test_missing_enrollment_entry_rejected(self, pipeline):
        import copy

        enrollment = copy.deepcopy(pipeline["enrollment"])
        observed = pipeline["test"].items[0].spectrogram
        probe = infer(
            observed, pipeline["pred_model"], pipeline["pred_params"],
            pipeline["sia_model"], pipeline["sia_params"], enrollment, 0.5,
        )
        del enrollment.entries[probe.predicted]
        with pytest.raises(ConfigError):
            infer(
                observed, pipeline["pred_model"], pipeline["pred_params"],
                pipeline["sia_model"], pipeline["sia_params"], enrollment, 0.5,
            )


class TestInferBatch:
    def test_matches_single_infer(self, pipeline):
        observations = [item.spectrogram for item in pipeline["test"].items][:12]
        decisions, _ = infer_batch(
            observations, pipeline["pred_model"], pipeline["pred_params"],
            pipeline["sia_model"], pipeline["sia_params"],
            pipeline["enrollment"], 0.4, chunk=5,
        )
        for obs, batch_decision in zip(observations, decisions):
            single = infer(
                obs, pipeline["pred_model"], pipeline["pred_params"],
                pipeline["sia_model"], pipeline["sia_params"],
                pipeline["enrollment"], 0.4,
            )
            assert batch_decision.verdict == single.verdict
            assert batch_decision.predicted == single.predicted
            assert batch_decision.distance == pytest.approx(single.distance, abs=1e-9)

    def test_empty_batch(self, pipeline):
        decisions, per_1000 = infer_batch(
            [], pipeline["pred_model"], pipeline["pred_params"],
            pipeline["sia_model"], pipeline["sia_params"],
            pipeline["enrollment"], 0.4,
        )
        assert decisions == []
        assert per_1000 == 0.0

    def test_bad_item_names_index(self, pipeline):
        from rffid.dsp import Spectrogram

        observations = [item.spectrogram for item in pipeline["test"].items][:3]
        observations.append(Spectrogram(np.zeros((5, 5), dtype=np.float32)))
        with pytest.raises(InputError, match="observation 3"):
            infer_batch(
                observations, pipeline["pred_model"], pipeline["pred_params"],
                pipeline["sia_model"], pipeline["sia_params"],
                pipeline["enrollment"], 0.4,
            )

    def test_timing_positive_and_stable(self, pipeline):
        observations = [item.spectrogram for item in pipeline["test"].items]
        observations = (observations * 40)[:1000]

        def timed():
            samples = []
            for _ in range(3):
                _, per_1000 = infer_batch(
                    observations, pipeline["pred_model"], pipeline["pred_params"],
                    pipeline["sia_model"], pipeline["sia_params"],
                    pipeline["enrollment"], 0.4,
                )
                samples.append(per_1000)
            return sorted(samples)[1]

        first, second = timed(), timed()
        assert first > 0.0 and second > 0.0
        assert abs(first - second) <= 0.2 * max(first, second)


class TestCalibrateThreshold:
    def test_fixed_policy(self):
        policy = ThresholdPolicy("fixed", 1.25)
        assert calibrate_threshold([], [], policy) == 1.25

    def test_fixed_policy_validation(self):
        with pytest.raises(ConfigError):
            ThresholdPolicy("fixed", None)
        with pytest.raises(ConfigError):
            ThresholdPolicy("fixed", -1.0)
        with pytest.raises(ConfigError):
            ThresholdPolicy("quantile", 0.5)

    def test_separated_scores_midpoint_and_zero_eer(self):
        legit = [0.1, 0.2, 0.3]
        rogue = [0.9, 1.1, 1.4]
        lam = calibrate_threshold(legit, rogue, ThresholdPolicy("eer_on_validation"))
        assert lam == pytest.approx((0.3 + 0.9) / 2)
        fpr, fnr = _rates(legit, rogue, lam)
        assert fpr == 0.0 and fnr == 0.0

    def test_identical_distributions_give_half_error(self):
        rng = np.random.default_rng(0)
        scores = rng.uniform(0, 1, 400)
        legit, rogue = scores[:200], scores[200:]
        lam = calibrate_threshold(list(legit), list(rogue),
                                  ThresholdPolicy("eer_on_validation"))
        fpr, fnr = _rates(legit, rogue, lam)
        assert fpr == pytest.approx(0.5, abs=0.1)
        assert fnr == pytest.approx(0.5, abs=0.1)

    def test_matches_brute_force_scan(self):
        # oracle: the returned threshold's |FPR - FNR| gap is no worse than
        # any candidate on the sorted score grid
        rng = np.random.default_rng(1)
        for trial in range(20):
            legit = rng.normal(0.5, 0.2, 30)
            rogue = rng.normal(1.0, 0.3, 20)
            lam = calibrate_threshold(list(legit), list(rogue),
                                      ThresholdPolicy("eer_on_validation"))
            fpr, fnr = _rates(legit, rogue, lam)
            gap = abs(fpr - fnr)
            best = min(
                abs(np.subtract(*_rates(legit, rogue, candidate)))
                for candidate in np.concatenate((legit, rogue))
            )
            assert gap <= best + 1e-12

    def test_target_fpr_smallest_threshold(self):
        rng = np.random.default_rng(2)
        legit = list(rng.uniform(0, 1, 50))
        rogue = list(rng.uniform(0.5, 1.5, 50))
        for rate in (0.0, 0.1, 0.33, 1.0):
            lam = calibrate_threshold(legit, rogue, ThresholdPolicy("target_fpr", rate))
            fpr, _ = _rates(legit, rogue, lam)
            assert fpr <= rate + 1e-12
            # brute force: no candidate strictly below lam satisfies the rate
            for candidate in [0.0] + sorted(legit):
                if candidate < lam:
                    cand_fpr, _ = _rates(legit, rogue, candidate)
                    assert cand_fpr > rate

    def test_empty_scores_rejected(self):
        with pytest.raises(InputError):
            calibrate_threshold([], [1.0], ThresholdPolicy("eer_on_validation"))
        with pytest.raises(InputError):
            calibrate_threshold([1.0], [], ThresholdPolicy("target_fpr", 0.1))
