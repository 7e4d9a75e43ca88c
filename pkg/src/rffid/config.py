"""Run configuration: a UTF-8 JSON document with nested sections.

One file drives the whole workflow (synthesis scenario, STFT, model
presets, optimizer, pairing, threshold policy, seed). Every field has a
documented default and the fully resolved configuration is echoed into the
run manifest, so no default is silent. See README for the schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .datasets import AugmentConfig, Scenario
from .dsp import StftConfig
from .errors import ConfigError
from .inference import ThresholdPolicy
from .nn import OptimizerConfig
from .signals import ChannelConfig, DeviceProfile, LoRaParams
from .training import PairingConfig

TRAINING_MODES = ("joint", "sequential")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out_dir: str
    scenario: Scenario
    prediction_preset: str
    embedding_dim: int
    optimizer: OptimizerConfig
    pairing: PairingConfig
    training_mode: str
    threshold: ThresholdPolicy
    enroll_from_augmented: bool


class _Section:
    """Typed accessors over one nested dict, reporting full field paths."""

    def __init__(self, data: dict, path: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'} must be an object, got {type(data).__name__}")
        self.data = data
        self.path = path

    def _label(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def section(self, key: str) -> "_Section":
        return _Section(self.data.get(key, {}), self._label(key))

    def get(self, key: str, kind, default=None, required: bool = False):
        if key not in self.data:
            if required:
                raise ConfigError(f"missing required field {self._label(key)}")
            return default
        value = self.data[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and not isinstance(value, kind):
            raise ConfigError(
                f"{self._label(key)} must be {getattr(kind, '__name__', kind)}, "
                f"got {type(value).__name__}"
            )
        return value

    def check_known(self, known: set[str]) -> None:
        unknown = set(self.data) - known
        if unknown:
            raise ConfigError(
                f"unknown field(s) in {self.path or 'config'}: {sorted(unknown)}"
            )


def _parse_complex(value, path: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(
        isinstance(v, (int, float)) for v in value
    ):
        return complex(value[0], value[1])
    raise ConfigError(f"{path} must be a number or [real, imag] pair")


def _parse_device(entry: dict, index: int) -> tuple[DeviceProfile, bool]:
    sec = _Section(entry, f"devices[{index}]")
    sec.check_known(
        {"device_id", "cfo_hz", "iq_gain_db", "iq_phase_rad", "pa_cubic_coeff",
         "dc_offset", "phase_noise_std_rad", "rogue"}
    )
    profile = DeviceProfile(
        device_id=sec.get("device_id", int, required=True),
        cfo_hz=sec.get("cfo_hz", float, 0.0),
        iq_gain_db=sec.get("iq_gain_db", float, 0.0),
        iq_phase_rad=sec.get("iq_phase_rad", float, 0.0),
        pa_cubic_coeff=sec.get("pa_cubic_coeff", float, 0.0),
        dc_offset=_parse_complex(
            entry.get("dc_offset", 0.0), f"devices[{index}].dc_offset"
        ),
        phase_noise_std_rad=sec.get("phase_noise_std_rad", float, 0.0),
    )
    return profile, bool(sec.get("rogue", bool, False))


def _parse_channel(sec: _Section) -> ChannelConfig:
    sec.check_known({"taps", "doppler_shift_hz", "snr_db"})
    raw_taps = sec.get("taps", list, [[0, [1.0, 0.0]]])
    taps = []
    for i, tap in enumerate(raw_taps):
        if not isinstance(tap, list) or len(tap) != 2:
            raise ConfigError(f"{sec.path}.taps[{i}] must be [delay, gain]")
        delay = tap[0]
        if not isinstance(delay, int) or isinstance(delay, bool):
            raise ConfigError(f"{sec.path}.taps[{i}][0] (delay) must be an integer")
        taps.append((delay, _parse_complex(tap[1], f"{sec.path}.taps[{i}][1]")))
    snr = sec.get("snr_db", float, None) if sec.data.get("snr_db") is not None else None
    return ChannelConfig(
        taps=tuple(taps),
        doppler_shift_hz=sec.get("doppler_shift_hz", float, 0.0),
        snr_db=snr,
    )


def parse_config(data: dict) -> RunConfig:
    root = _Section(data)
    root.check_known(
        {"seed", "out_dir", "lora", "stft", "devices", "channel", "counts",
         "augment", "enrollment", "models", "optimizer", "pairing", "training",
         "threshold"}
    )
    seed = root.get("seed", int, required=True)
    out_dir = root.get("out_dir", str, "run_out")

    lora_sec = root.section("lora")
    lora_sec.check_known(
        {"bandwidth_hz", "spreading_factor", "sample_rate_hz", "amplitude",
         "preamble_count"}
    )
    lora = LoRaParams(
        bandwidth_hz=lora_sec.get("bandwidth_hz", float, 125e3),
        spreading_factor=lora_sec.get("spreading_factor", int, 7),
        sample_rate_hz=lora_sec.get("sample_rate_hz", float, 1e6),
        amplitude=lora_sec.get("amplitude", float, 1.0),
        preamble_count=lora_sec.get("preamble_count", int, 8),
    )

    stft_sec = root.section("stft")
    stft_sec.check_known({"window", "window_len", "hop", "fft_size"})
    stft = StftConfig(
        window=stft_sec.get("window", str, "hann"),
        window_len=stft_sec.get("window_len", int, 64),
        hop=stft_sec.get("hop", int, 32),
        fft_size=stft_sec.get("fft_size", int, 64),
    )

    raw_devices = root.get("devices", list, required=True)
    if not raw_devices:
        raise ConfigError("devices must list at least one legitimate device")
    legit, rogues = [], []
    for i, entry in enumerate(raw_devices):
        if not isinstance(entry, dict):
            raise ConfigError(f"devices[{i}] must be an object")
        profile, is_rogue = _parse_device(entry, i)
        (rogues if is_rogue else legit).append(profile)

    counts = root.section("counts")
    counts.check_known(
        {"train_per_device", "test_per_legit", "test_per_rogue",
         "calib_per_legit", "calib_per_rogue"}
    )
    augment_sec = root.section("augment")
    augment_sec.check_known(
        {"enabled", "max_extra_delay", "gain_decay_samples", "doppler_band_hz"}
    )
    band = augment_sec.get("doppler_band_hz", list, [-50.0, 50.0])
    if len(band) != 2 or not all(isinstance(v, (int, float)) for v in band):
        raise ConfigError("augment.doppler_band_hz must be [low, high]")
    augment = AugmentConfig(
        enabled=augment_sec.get("enabled", bool, False),
        max_extra_delay=augment_sec.get("max_extra_delay", int, 8),
        gain_decay_samples=augment_sec.get("gain_decay_samples", float, 4.0),
        doppler_band_hz=(float(band[0]), float(band[1])),
    )

    scenario = Scenario(
        lora=lora,
        stft=stft,
        devices=tuple(legit),
        rogues=tuple(rogues),
        channel=_parse_channel(root.section("channel")),
        train_per_device=counts.get("train_per_device", int, 100),
        test_per_legit=counts.get("test_per_legit", int, 25),
        test_per_rogue=counts.get("test_per_rogue", int, 25),
        calib_per_legit=counts.get("calib_per_legit", int, 25),
        calib_per_rogue=counts.get("calib_per_rogue", int, 25),
        augment=augment,
    )

    models_sec = root.section("models")
    models_sec.check_known({"prediction_preset", "embedding_dim"})
    preset = models_sec.get("prediction_preset", str, "small")
    embedding_dim = models_sec.get("embedding_dim", int, 32)

    opt_sec = root.section("optimizer")
    opt_sec.check_known(
        {"learning_rate", "epochs", "batch_size", "early_stop_patience",
         "early_stop_min_delta"}
    )
    optimizer = OptimizerConfig(
        learning_rate=opt_sec.get("learning_rate", float, 0.01),
        epochs=opt_sec.get("epochs", int, 40),
        batch_size=opt_sec.get("batch_size", int, 1),
        seed=seed,
        early_stop_patience=opt_sec.get("early_stop_patience", int, 5),
        early_stop_min_delta=opt_sec.get("early_stop_min_delta", float, 1e-4),
    )

    pairing_sec = root.section("pairing")
    pairing_sec.check_known({"random_branch_prob", "margin", "hinge"})
    pairing = PairingConfig(
        random_branch_prob=pairing_sec.get("random_branch_prob", float, 0.5),
        margin=pairing_sec.get("margin", float, 1.0),
        hinge=pairing_sec.get("hinge", str, "squared_distance"),
    )

    training_sec = root.section("training")
    training_sec.check_known({"mode"})
    mode = training_sec.get("mode", str, "joint")
    if mode not in TRAINING_MODES:
        raise ConfigError(f"training.mode must be one of {TRAINING_MODES}, got {mode!r}")

    threshold_sec = root.section("threshold")
    threshold_sec.check_known({"method", "value"})
    threshold = ThresholdPolicy(
        method=threshold_sec.get("method", str, "eer_on_validation"),
        value=threshold_sec.get("value", float, None),
    )

    enrollment_sec = root.section("enrollment")
    enrollment_sec.check_known({"use_augmented"})

    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        scenario=scenario,
        prediction_preset=preset,
        embedding_dim=embedding_dim,
        optimizer=optimizer,
        pairing=pairing,
        training_mode=mode,
        threshold=threshold,
        enroll_from_augmented=enrollment_sec.get("use_augmented", bool, False),
    )


def load_config(path, seed_override: int | None = None, out_override: str | None = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    if seed_override is not None:
        data["seed"] = seed_override
    if out_override is not None:
        data["out_dir"] = out_override
    return parse_config(data)


def resolved_dict(cfg: RunConfig) -> dict:
    """The fully resolved configuration (defaults included), echoed into
    run manifests and reports."""
    scenario = cfg.scenario

    def complex_pair(z: complex) -> list[float]:
        return [z.real, z.imag]

    def device_dict(profile: DeviceProfile, rogue: bool) -> dict:
        return {
            "device_id": profile.device_id,
            "cfo_hz": profile.cfo_hz,
            "iq_gain_db": profile.iq_gain_db,
            "iq_phase_rad": profile.iq_phase_rad,
            "pa_cubic_coeff": profile.pa_cubic_coeff,
            "dc_offset": complex_pair(profile.dc_offset),
            "phase_noise_std_rad": profile.phase_noise_std_rad,
            "rogue": rogue,
        }

    return {
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
        "lora": {
            "bandwidth_hz": scenario.lora.bandwidth_hz,
            "spreading_factor": scenario.lora.spreading_factor,
            "sample_rate_hz": scenario.lora.sample_rate_hz,
            "amplitude": scenario.lora.amplitude,
            "preamble_count": scenario.lora.preamble_count,
        },
        "stft": {
            "window": scenario.stft.window,
            "window_len": scenario.stft.window_len,
            "hop": scenario.stft.hop,
            "fft_size": scenario.stft.fft_size,
        },
        "devices": [device_dict(d, False) for d in scenario.devices]
        + [device_dict(d, True) for d in scenario.rogues],
        "channel": {
            "taps": [[d, complex_pair(g)] for d, g in scenario.channel.taps],
            "doppler_shift_hz": scenario.channel.doppler_shift_hz,
            "snr_db": scenario.channel.snr_db,
        },
        "counts": {
            "train_per_device": scenario.train_per_device,
            "test_per_legit": scenario.test_per_legit,
            "test_per_rogue": scenario.test_per_rogue,
            "calib_per_legit": scenario.calib_per_legit,
            "calib_per_rogue": scenario.calib_per_rogue,
        },
        "augment": {
            "enabled": scenario.augment.enabled,
            "max_extra_delay": scenario.augment.max_extra_delay,
            "gain_decay_samples": scenario.augment.gain_decay_samples,
            "doppler_band_hz": list(scenario.augment.doppler_band_hz),
        },
        "enrollment": {"use_augmented": cfg.enroll_from_augmented},
        "models": {
            "prediction_preset": cfg.prediction_preset,
            "embedding_dim": cfg.embedding_dim,
        },
        "optimizer": {
            "learning_rate": cfg.optimizer.learning_rate,
            "epochs": cfg.optimizer.epochs,
            "batch_size": cfg.optimizer.batch_size,
            "early_stop_patience": cfg.optimizer.early_stop_patience,
            "early_stop_min_delta": cfg.optimizer.early_stop_min_delta,
        },
        "pairing": {
            "random_branch_prob": cfg.pairing.random_branch_prob,
            "margin": cfg.pairing.margin,
            "hinge": cfg.pairing.hinge,
        },
        "training": {"mode": cfg.training_mode},
        "threshold": {"method": cfg.threshold.method, "value": cfg.threshold.value},
    }
