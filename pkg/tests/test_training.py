import numpy as np
import pytest

from rffid.datasets import build_synthetic_dataset, enroll
from rffid.errors import ConfigError, TrainingDivergedError
from rffid.models import Prediction, PredictionModel, SiameseModel
from rffid.nn import OptimizerConfig
from rffid.signals import ChannelConfig, DeviceProfile
from rffid.training import (
    PairingConfig,
    legitimacy_label,
    sample_pair_identity,
    train_joint,
    train_prediction,
    train_siamese,
    train_siamese_core,
)
import rffid.training as training_module

from conftest import tiny_scenario


class _CountingRng:
    """Duck-typed generator that counts the random/integers calls the
    pairing rule makes."""

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self.random_calls = 0
        self.integer_draws = []

    def random(self):
        self.random_calls += 1
        return self._rng.random()

    def integers(self, *args, **kwargs):
        value = self._rng.integers(*args, **kwargs)
        self.integer_draws.append(int(value))
        return value


def _fixed_prediction(class_count=5, argmax=2):
    probs = np.full(class_count, 0.1 / (class_count - 1))
    probs[argmax] = 0.9
    return Prediction(probabilities=probs, predicted=argmax)


class TestPairSampling:
    def test_zero_probability_always_argmax(self):
        rng = np.random.default_rng(0)
        config = PairingConfig(random_branch_prob=0.0)
        pred = _fixed_prediction()
        assert all(
            sample_pair_identity(pred, 5, config, rng) == 2 for _ in range(200)
        )

    def test_probability_one_is_uniform(self):
        rng = np.random.default_rng(1)
        config = PairingConfig(random_branch_prob=1.0)
        pred = _fixed_prediction()
        draws = np.array([sample_pair_identity(pred, 5, config, rng) for _ in range(10_000)])
        freqs = np.bincount(draws, minlength=5) / draws.size
        assert np.all(np.abs(freqs - 0.2) < 0.015)

    def test_default_mixture_frequency(self):
        # argmax identity frequency = 0.5 + 0.5/I for the 0.5/0.5 mixture
        rng = np.random.default_rng(2)
        config = PairingConfig(random_branch_prob=0.5)
        pred = _fixed_prediction(class_count=5, argmax=3)
        draws = np.array([sample_pair_identity(pred, 5, config, rng) for _ in range(10_000)])
        expected = 0.5 + 0.5 / 5
        sigma = np.sqrt(expected * (1 - expected) / draws.size)
        assert abs(np.mean(draws == 3) - expected) < 3 * sigma

    def test_random_branch_rate_and_uniformity(self):
        rng = _CountingRng(3)
        config = PairingConfig(random_branch_prob=0.5)
        pred = _fixed_prediction(class_count=4, argmax=1)
        n = 10_000
        for _ in range(n):
            sample_pair_identity(pred, 4, config, rng)
        rate = len(rng.integer_draws) / n
        assert abs(rate - 0.5) < 0.015
        counts = np.bincount(rng.integer_draws, minlength=4)
        p = 1 / 4
        sigma = np.sqrt(p * (1 - p) * len(rng.integer_draws))
        assert np.all(np.abs(counts - p * len(rng.integer_draws)) < 3 * sigma)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            PairingConfig(random_branch_prob=1.5)
        with pytest.raises(ConfigError):
            PairingConfig(margin=0.0)


class TestLegitimacyLabel:
    def test_matched(self):
        assert legitimacy_label(3, 3) == 0

    def test_mismatched(self):
        assert legitimacy_label(3, 7) == 1

    def test_symmetric(self):
        for p in range(4):
            for q in range(4):
                assert legitimacy_label(p, q) == legitimacy_label(q, p)


def _separable_scenario():
    # two devices with extreme impairment differences, noiseless
    devices = (
        DeviceProfile(device_id=0, cfo_hz=-400.0, iq_gain_db=-4.0,
                      dc_offset=0.4 + 0j),
        DeviceProfile(device_id=1, cfo_hz=400.0, iq_gain_db=4.0,
                      dc_offset=0.0 - 0.4j, phase_noise_std_rad=5e-3),
    )
    return tiny_scenario(
        devices=devices, rogues=(), channel=ChannelConfig(snr_db=None),
        train_per_device=10,
    )


class TestTrainPrediction:
    def test_linearly_separable_reaches_full_accuracy(self):
        scenario = _separable_scenario()
        train = build_synthetic_dataset(scenario, "train", 21)
        model = PredictionModel("small", 2, train.shape)
        opt = OptimizerConfig(learning_rate=0.05, epochs=30, batch_size=1,
                              seed=21, early_stop_patience=0)
        params, curve = train_prediction(train, model, opt)
        probs, _ = model.net.forward(params, train.stacked()[:, None].astype(np.float64))
        assert np.mean(np.argmax(probs, axis=1) == train.labels()) == 1.0
        assert curve[-1] < curve[0]

    def test_first_epoch_loss_near_log_classes(self):
        scenario = tiny_scenario(train_per_device=6)
        train = build_synthetic_dataset(scenario, "train", 22)
        model = PredictionModel("small", 3, train.shape)
        opt = OptimizerConfig(learning_rate=1e-5, epochs=1, batch_size=4, seed=22)
        _, curve = train_prediction(train, model, opt)
        assert curve[0] == pytest.approx(np.log(3), abs=0.2)

    def test_same_seed_reproduces_curve_bitwise(self):
        scenario = tiny_scenario(train_per_device=4)
        train = build_synthetic_dataset(scenario, "train", 23)
        model = PredictionModel("small", 3, train.shape)
        opt = OptimizerConfig(learning_rate=0.02, epochs=3, batch_size=4,
                              seed=23, early_stop_patience=0)
        _, curve_a = train_prediction(train, model, opt)
        _, curve_b = train_prediction(train, model, opt)
        assert curve_a == curve_b

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_divergence_reported_with_epoch_and_rate(self):
        scenario = tiny_scenario(train_per_device=4)
        train = build_synthetic_dataset(scenario, "train", 24)
        model = PredictionModel("small", 3, train.shape)
        opt = OptimizerConfig(learning_rate=1e18, epochs=10, batch_size=4, seed=24)
        with pytest.raises(TrainingDivergedError) as err:
            train_prediction(train, model, opt)
        assert err.value.learning_rate == 1e18
        assert 0 <= err.value.epoch < 10

    def test_early_stop_truncates_curve(self):
        scenario = tiny_scenario(train_per_device=4)
        train = build_synthetic_dataset(scenario, "train", 25)
        model = PredictionModel("small", 3, train.shape)
        opt = OptimizerConfig(learning_rate=1e-9, epochs=30, batch_size=4,
                              seed=25, early_stop_patience=3, early_stop_min_delta=1e-4)
        _, curve = train_prediction(train, model, opt)
        # the first epoch always counts as an improvement over "no loss yet",
        # so the stop fires after patience further epochs
        assert len(curve) == 4


class TestTrainSiamese:
    def test_matched_pairs_only_reduces_mean_squared_distance(self):
        scenario = tiny_scenario(train_per_device=6)
        train = build_synthetic_dataset(scenario, "train", 26)
        labels = train.labels()
        images = train.stacked().astype(np.float64)[:, None]
        # a perfect classifier plus a zero random branch -> all labels 0
        probs = np.zeros((labels.size, 3))
        probs[np.arange(labels.size), labels] = 1.0
        enrolled = np.stack(
            [images[labels == i].mean(axis=0) for i in range(3)]
        )
        sia = SiameseModel(train.shape, 8)
        opt = OptimizerConfig(learning_rate=0.05, epochs=4, batch_size=4,
                              seed=26, early_stop_patience=0)
        pairing = PairingConfig(random_branch_prob=0.0)
        params, curve = train_siamese_core(
            sia, pairing, opt, images, labels, enrolled, probs
        )
        assert curve[-1] < curve[0]
        # with every pair matched the loss is exactly the mean squared distance
        v_obs = sia.embed_batch(params, images)
        v_ref = sia.embed_batch(params, enrolled[labels])
        mean_sq = float(((v_obs - v_ref) ** 2).sum(axis=1).mean())
        assert curve[-1] > 0.0
        assert mean_sq >= 0.0

    def test_same_seed_reproduces_params(self, mini_pipeline):
        train = mini_pipeline["train"]
        enrollment = mini_pipeline["enrollment"]
        pred_model = mini_pipeline["pred_model"]
        pred_params = mini_pipeline["pred_params"]
        opt = OptimizerConfig(learning_rate=0.05, epochs=2, batch_size=8,
                              seed=5, early_stop_patience=0)
        results = []
        for _ in range(2):
            sia = SiameseModel(train.shape, 8)
            params, _ = train_siamese(
                train, enrollment, pred_model, pred_params, sia, PairingConfig(), opt
            )
            results.append(params)
        for name in results[0]:
            assert np.array_equal(results[0][name], results[1][name])

    def test_missing_enrollment_entry_rejected(self, mini_pipeline):
        train = mini_pipeline["train"]
        incomplete = enroll(train)
        del incomplete.entries[0]
        sia = SiameseModel(train.shape, 8)
        opt = OptimizerConfig(learning_rate=0.05, epochs=1, batch_size=8, seed=5)
        with pytest.raises(ConfigError):
            train_siamese(
                train, incomplete, mini_pipeline["pred_model"],
                mini_pipeline["pred_params"], sia, PairingConfig(), opt,
            )


class TestTrainJoint:
    def test_one_epoch_update_counts(self, monkeypatch):
        scenario = tiny_scenario(train_per_device=10)
        train = build_synthetic_dataset(scenario, "train", 27)
        pred_model = PredictionModel("small", 3, train.shape)
        sia_model = SiameseModel(train.shape, 8)
        opt = OptimizerConfig(learning_rate=0.01, epochs=1, batch_size=1,
                              seed=27, early_stop_patience=0)
        calls = []
        real_sgd = training_module.sgd_step

        def counting_sgd(params, grads, lr):
            calls.append(id(params))
            return real_sgd(params, grads, lr)

        monkeypatch.setattr(training_module, "sgd_step", counting_sgd)
        report = train_joint(train, pred_model, sia_model, PairingConfig(), opt)
        assert len(calls) == 60  # 30 prediction updates + 30 siamese updates
        assert len(set(calls)) == 2
        assert report.epochs_run == 1

    def test_prediction_trajectory_independent_of_siamese_branch(self):
        scenario = tiny_scenario(train_per_device=6)
        train = build_synthetic_dataset(scenario, "train", 28)
        opt = OptimizerConfig(learning_rate=0.03, epochs=3, batch_size=4,
                              seed=28, early_stop_patience=0)
        pred_model = PredictionModel("small", 3, train.shape)
        solo_params, solo_curve = train_prediction(train, pred_model, opt)

        pred_model_joint = PredictionModel("small", 3, train.shape)
        sia_model = SiameseModel(train.shape, 8)
        report = train_joint(train, pred_model_joint, sia_model, PairingConfig(), opt)
        assert solo_curve == report.ce_curve
        for name in solo_params:
            assert np.array_equal(solo_params[name], report.prediction_params[name])

    def test_loss_curves_finite_every_epoch(self, mini_pipeline):
        report = mini_pipeline["report"]
        assert len(report.ce_curve) == report.epochs_run
        assert len(report.con_curve) == report.epochs_run
        assert np.all(np.isfinite(report.ce_curve))
        assert np.all(np.isfinite(report.con_curve))

    def test_same_seed_identical_reports(self):
        scenario = tiny_scenario(train_per_device=4)
        train = build_synthetic_dataset(scenario, "train", 29)
        opt = OptimizerConfig(learning_rate=0.03, epochs=2, batch_size=4,
                              seed=29, early_stop_patience=0)
        curves = []
        for _ in range(2):
            report = train_joint(
                train, PredictionModel("small", 3, train.shape),
                SiameseModel(train.shape, 8), PairingConfig(), opt,
            )
            curves.append((report.ce_curve, report.con_curve))
        assert curves[0] == curves[1]


def test_checkpoint_round_trip_reproduces_losses(mini_pipeline, tmp_path):
    from rffid.nn import cross_entropy, load_checkpoint, save_checkpoint

    test = mini_pipeline["test"]
    model = mini_pipeline["pred_model"]
    legit = [item for item in test.items if item.label != -1]
    images = np.stack([i.spectrogram.values for i in legit]).astype(np.float64)[:, None]
    targets = np.zeros((len(legit), 3))
    targets[np.arange(len(legit)), [i.label for i in legit]] = 1.0

    path = tmp_path / "pred.ckpt"
    save_checkpoint(mini_pipeline["pred_params"], path)
    losses = []
    for _ in range(2):
        params, _ = load_checkpoint(path)
        probs, _ = model.net.forward(params, images)
        loss, _ = cross_entropy(probs, targets)
        losses.append(loss)
    assert losses[0] == losses[1]
