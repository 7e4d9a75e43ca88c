import pytest

from rffid.datasets import Scenario, build_synthetic_dataset, enroll
from rffid.dsp import StftConfig
from rffid.models import PredictionModel, SiameseModel
from rffid.nn import OptimizerConfig
from rffid.signals import ChannelConfig, DeviceProfile, LoRaParams
from rffid.training import PairingConfig, train_joint

# SF=5 at 500 kHz keeps packets at 1024 samples and spectrograms at 64x31,
# small enough that the networks train in seconds.
TINY_LORA = LoRaParams(
    bandwidth_hz=125e3, spreading_factor=5, sample_rate_hz=500e3
)
TINY_STFT = StftConfig(window="hann", window_len=64, hop=32, fft_size=64)

TINY_DEVICES = (
    DeviceProfile(device_id=0, cfo_hz=-300.0, iq_gain_db=-1.5, iq_phase_rad=-0.08,
                  pa_cubic_coeff=0.03, dc_offset=0.04 + 0j, phase_noise_std_rad=3e-4),
    DeviceProfile(device_id=1, cfo_hz=50.0, iq_gain_db=0.2, iq_phase_rad=0.03,
                  pa_cubic_coeff=0.07, dc_offset=0.12j, phase_noise_std_rad=1.2e-3),
    DeviceProfile(device_id=2, cfo_hz=400.0, iq_gain_db=1.6, iq_phase_rad=0.09,
                  pa_cubic_coeff=0.11, dc_offset=-0.18 + 0.05j, phase_noise_std_rad=3.5e-3),
)
TINY_ROGUES = (
    DeviceProfile(device_id=9, cfo_hz=-120.0, iq_gain_db=0.9, iq_phase_rad=-0.05,
                  pa_cubic_coeff=0.09, dc_offset=0.1 - 0.1j, phase_noise_std_rad=2e-3),
)


def tiny_scenario(**overrides) -> Scenario:
    base = dict(
        lora=TINY_LORA,
        stft=TINY_STFT,
        devices=TINY_DEVICES,
        rogues=TINY_ROGUES,
        channel=ChannelConfig(snr_db=25.0),
        train_per_device=10,
        test_per_legit=5,
        test_per_rogue=5,
        calib_per_legit=5,
        calib_per_rogue=5,
    )
    base.update(overrides)
    return Scenario(**base)


@pytest.fixture(scope="session")
def mini_pipeline():
    """A trained tiny pipeline shared by inference/evaluation tests."""
    scenario = tiny_scenario(train_per_device=16)
    train = build_synthetic_dataset(scenario, "train", 42)
    test = build_synthetic_dataset(scenario, "test", 42)
    calib = build_synthetic_dataset(scenario, "calib", 42)
    pred_model = PredictionModel("small", scenario.identity_count, train.shape)
    sia_model = SiameseModel(train.shape, 16)
    opt = OptimizerConfig(
        learning_rate=0.05, epochs=6, batch_size=8, seed=42, early_stop_patience=0
    )
    report = train_joint(train, pred_model, sia_model, PairingConfig(), opt)
    return {
        "scenario": scenario,
        "train": train,
        "test": test,
        "calib": calib,
        "pred_model": pred_model,
        "pred_params": report.prediction_params,
        "sia_model": sia_model,
        "sia_params": report.siamese_params,
        "enrollment": enroll(train),
        "opt": opt,
        "report": report,
    }


def backends_available() -> list[str]:
    names = ["numpy"]
    try:
        from rffid.nn import _kernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names


@pytest.fixture(params=backends_available())
def kernel_backend(request):
    """Run a test under each available kernel backend."""
    from rffid.nn import backend

    previous = backend.active_name()
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend(previous)
