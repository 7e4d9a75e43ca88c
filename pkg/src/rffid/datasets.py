"""Labeled spectrogram datasets: synthesis scenarios, channel augmentation,
enrollment averaging, and the binary archive format.

Archive layout (little-endian, bit-exact):

    magic "SPGA" | version u16 | freq_bins u32 | time_frames u32 |
    item_count u32 | per item: label i32 (-1 = rogue) |
    freq_bins * time_frames float32 values, row-major

Enrollment databases use the same container with magic "ENRL" and one item
per identity (the per-identity source counts are not persisted).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .dsp import Spectrogram, StftConfig, preprocess_packet, spectrogram_shape
from .errors import ConfigError, FormatError, InputError
from .seeding import derive_rng
from .signals import (
    ChannelConfig,
    DeviceProfile,
    LoRaParams,
    apply_channel,
    apply_impairment,
    synth_packet,
)

ROGUE_LABEL = -1

SPLIT_TAGS = ("train", "test", "calib")

_MAGIC_DATASET = b"SPGA"
_MAGIC_ENROLLMENT = b"ENRL"
_VERSION = 1


@dataclass(eq=False)
class LabeledSpectrogram:
    spectrogram: Spectrogram
    label: int


@dataclass(eq=False)
class DatasetSplit:
    """A list of labeled spectrograms sharing one shape.

    ``identity_count`` is the number of legitimate classes I;
    ``per_identity_count`` is the per-class sample count N (training splits
    only, None otherwise). Training splits must not contain rogue labels.
    """

    items: list[LabeledSpectrogram]
    identity_count: int
    per_identity_count: int | None = None

    def __post_init__(self):
        if self.items:
            shape = self.items[0].spectrogram.shape
            for i, item in enumerate(self.items):
                if item.spectrogram.shape != shape:
                    raise ConfigError(
                        f"item {i} has shape {item.spectrogram.shape}, expected {shape}"
                    )
                if not (item.label == ROGUE_LABEL or 0 <= item.label < self.identity_count):
                    raise ConfigError(f"item {i} has out-of-range label {item.label}")
        if self.per_identity_count is not None and any(
            item.label == ROGUE_LABEL for item in self.items
        ):
            raise ConfigError("training split must not contain rogue items")

    @property
    def shape(self) -> tuple[int, int]:
        if not self.items:
            raise InputError("empty split has no shape")
        return self.items[0].spectrogram.shape

    def labels(self) -> np.ndarray:
        return np.array([item.label for item in self.items], dtype=np.int64)

    def stacked(self) -> np.ndarray:
        """(count, freq_bins, time_frames) float array of all images."""
        return np.stack([item.spectrogram.values for item in self.items])


@dataclass(eq=False)
class EnrollmentDb:
    """Per-identity average spectrogram, the registered reference of each
    legitimate device."""

    entries: dict[int, Spectrogram]
    source_count: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        shapes = {s.shape for s in self.entries.values()}
        if len(shapes) > 1:
            raise ConfigError(f"enrollment entries disagree on shape: {shapes}")

    def entry(self, identity: int) -> Spectrogram:
        if identity not in self.entries:
            raise ConfigError(f"identity {identity} is not enrolled")
        return self.entries[identity]


@dataclass(frozen=True)
class AugmentConfig:
    """Randomized multipath/Doppler ranges for training augmentation."""

    enabled: bool = False
    max_extra_delay: int = 8
    gain_decay_samples: float = 4.0
    doppler_band_hz: tuple[float, float] = (-50.0, 50.0)

    def __post_init__(self):
        if self.max_extra_delay < 2:
            raise ConfigError("max_extra_delay must allow up to two extra taps")
        if self.gain_decay_samples <= 0:
            raise ConfigError("gain_decay_samples must be positive")
        if self.doppler_band_hz[0] > self.doppler_band_hz[1]:
            raise ConfigError(f"empty doppler band {self.doppler_band_hz}")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to synthesize one dataset family deterministically."""

    lora: LoRaParams
    stft: StftConfig
    devices: tuple[DeviceProfile, ...]
    rogues: tuple[DeviceProfile, ...] = ()
    channel: ChannelConfig = ChannelConfig()
    train_per_device: int = 100
    test_per_legit: int = 25
    test_per_rogue: int = 25
    calib_per_legit: int = 25
    calib_per_rogue: int = 25
    augment: AugmentConfig = AugmentConfig()

    def __post_init__(self):
        if not self.devices:
            raise ConfigError("scenario needs at least one legitimate device")
        ids = [d.device_id for d in self.devices + self.rogues]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"device ids must be unique, got {ids}")
        for count_name in ("train_per_device", "test_per_legit", "test_per_rogue",
                           "calib_per_legit", "calib_per_rogue"):
            if getattr(self, count_name) < 0:
                raise ConfigError(f"{count_name} must be nonnegative")

    @property
    def identity_count(self) -> int:
        return len(self.devices)

    def class_index(self, device_id: int) -> int:
        for i, dev in enumerate(self.devices):
            if dev.device_id == device_id:
                return i
        raise ConfigError(f"device id {device_id} is not a legitimate device")

    @property
    def shape(self) -> tuple[int, int]:
        return spectrogram_shape(self.lora, self.stft)


def augment_channel(
    rng: np.random.Generator,
    config: AugmentConfig,
    snr_db: float | None = None,
) -> ChannelConfig:
    """Draw one randomized training channel: 1-3 exponentially decaying taps
    and a uniform Doppler shift. Disabled -> identity channel."""
    if not config.enabled:
        return ChannelConfig(taps=((0, 1 + 0j),), doppler_shift_hz=0.0, snr_db=snr_db)
    tap_count = int(rng.integers(1, 4))
    delays = [0]
    if tap_count > 1:
        extra = rng.choice(np.arange(1, config.max_extra_delay + 1),
                           size=tap_count - 1, replace=False)
        delays += sorted(int(d) for d in extra)
    taps = []
    for delay in delays:
        magnitude = np.exp(-delay / config.gain_decay_samples)
        phase = rng.uniform(0.0, 2.0 * np.pi) if delay > 0 else 0.0
        taps.append((delay, complex(magnitude * np.exp(1j * phase))))
    lo, hi = config.doppler_band_hz
    doppler = float(rng.uniform(lo, hi))
    return ChannelConfig(taps=tuple(taps), doppler_shift_hz=doppler, snr_db=snr_db)


_UNSET = object()


def build_synthetic_dataset(
    scenario: Scenario,
    split: str,
    seed: int,
    snr_db_override: float | None | object = _UNSET,
) -> DatasetSplit:
    """Synthesize one labeled split of the scenario.

    Per packet: clean preamble header -> device impairment -> channel
    (randomized multipath/Doppler for augmented train splits, the scenario
    base channel otherwise) -> receive pipeline -> labeled spectrogram.
    Rogue devices appear only in test/calib splits, labeled ROGUE_LABEL.

    Every item owns a random stream derived from (seed, split, device, index),
    so generation order is irrelevant and regeneration with a different SNR
    (``snr_db_override``, used by SNR sweeps) keeps all other draws identical.
    """
    if split not in SPLIT_TAGS:
        raise ConfigError(f"split must be one of {SPLIT_TAGS}, got {split!r}")
    snr_db = scenario.channel.snr_db if snr_db_override is _UNSET else snr_db_override
    base_channel = replace(scenario.channel, snr_db=snr_db)

    plan: list[tuple[DeviceProfile, int, int]] = []
    if split == "train":
        for dev in scenario.devices:
            plan.append((dev, scenario.class_index(dev.device_id), scenario.train_per_device))
    else:
        per_legit = scenario.test_per_legit if split == "test" else scenario.calib_per_legit
        per_rogue = scenario.test_per_rogue if split == "test" else scenario.calib_per_rogue
        for dev in scenario.devices:
            plan.append((dev, scenario.class_index(dev.device_id), per_legit))
        for dev in scenario.rogues:
            plan.append((dev, ROGUE_LABEL, per_rogue))

    items: list[LabeledSpectrogram] = []
    for profile, label, count in plan:
        for n in range(count):
            rng = derive_rng(seed, f"item:{split}:{profile.device_id}:{n}")
            packet = synth_packet(scenario.lora, rng)
            impaired = apply_impairment(packet, profile, rng)
            if split == "train" and scenario.augment.enabled:
                channel = augment_channel(rng, scenario.augment, snr_db)
            else:
                channel = base_channel
            received = apply_channel(impaired, channel, rng)
            image = preprocess_packet(received, scenario.lora, scenario.stft)
            items.append(LabeledSpectrogram(image, label))

    return DatasetSplit(
        items=items,
        identity_count=scenario.identity_count,
        per_identity_count=scenario.train_per_device if split == "train" else None,
    )


def enroll(train: DatasetSplit) -> EnrollmentDb:
    """Register each identity as the elementwise dB-domain mean of its
    training spectrograms."""
    if not train.items:
        raise InputError("cannot enroll from an empty split")
    by_identity: dict[int, list[np.ndarray]] = {}
    for item in train.items:
        if item.label == ROGUE_LABEL:
            raise ConfigError("cannot enroll rogue-labeled samples")
        by_identity.setdefault(item.label, []).append(item.spectrogram.values)
    entries = {}
    counts = {}
    for identity, images in sorted(by_identity.items()):
        stacked = np.stack(images).astype(np.float64)
        entries[identity] = Spectrogram(stacked.mean(axis=0))
        counts[identity] = len(images)
    return EnrollmentDb(entries=entries, source_count=counts)


def _write_container(magic: bytes, items: list[tuple[int, np.ndarray]], path) -> None:
    if not items:
        raise InputError("refusing to write an empty archive")
    freq_bins, time_frames = items[0][1].shape
    blob = bytearray()
    blob += magic
    blob += struct.pack("<HIII", _VERSION, freq_bins, time_frames, len(items))
    for label, values in items:
        if values.shape != (freq_bins, time_frames):
            raise ConfigError(
                f"archive items disagree on shape: {values.shape} vs "
                f"{(freq_bins, time_frames)}"
            )
        blob += struct.pack("<i", label)
        blob += np.ascontiguousarray(values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def _read_container(expected_magic: bytes, path) -> tuple[int, int, list[tuple[int, np.ndarray]]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != expected_magic:
        raise FormatError(
            f"bad magic {blob[:4]!r}, expected {expected_magic!r}", offset=0
        )
    header_end = 4 + struct.calcsize("<HIII")
    if len(blob) < header_end:
        raise FormatError("truncated header", offset=len(blob))
    version, freq_bins, time_frames, item_count = struct.unpack(
        "<HIII", blob[4:header_end]
    )
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if freq_bins == 0 or time_frames == 0:
        raise FormatError("zero-sized spectrogram dimensions", offset=6)
    item_bytes = 4 + freq_bins * time_frames * 4
    expected_len = header_end + item_count * item_bytes
    if len(blob) != expected_len:
        offset = min(len(blob), expected_len)
        raise FormatError(
            f"expected {expected_len} bytes for {item_count} items, got {len(blob)}",
            offset=offset,
        )
    items = []
    pos = header_end
    for _ in range(item_count):
        (label,) = struct.unpack("<i", blob[pos : pos + 4])
        if label < ROGUE_LABEL:
            raise FormatError(f"invalid label {label}", offset=pos)
        values = np.frombuffer(
            blob, dtype="<f4", count=freq_bins * time_frames, offset=pos + 4
        ).reshape(freq_bins, time_frames)
        items.append((label, values.copy()))
        pos += item_bytes
    return freq_bins, time_frames, items


def save_archive(split: DatasetSplit, path) -> None:
    _write_container(
        _MAGIC_DATASET,
        [(item.label, item.spectrogram.values) for item in split.items],
        path,
    )


def load_archive(path) -> DatasetSplit:
    """Read a dataset archive. Identity count is inferred from the labels
    (legitimate labels are expected to cover 0..I-1); the per-identity count
    is inferred when uniform."""
    _, _, raw = _read_container(_MAGIC_DATASET, path)
    items = [LabeledSpectrogram(Spectrogram(values), label) for label, values in raw]
    legit = [item.label for item in items if item.label != ROGUE_LABEL]
    identity_count = max(legit) + 1 if legit else 0
    per_identity = None
    if legit and len(legit) == len(items):
        counts = np.bincount(legit, minlength=identity_count)
        if np.all(counts == counts[0]):
            per_identity = int(counts[0])
    return DatasetSplit(items, identity_count, per_identity)


def save_enrollment(db: EnrollmentDb, path) -> None:
    _write_container(
        _MAGIC_ENROLLMENT,
        [(identity, spec.values) for identity, spec in sorted(db.entries.items())],
        path,
    )


def load_enrollment(path) -> EnrollmentDb:
    """Read an enrollment database. Source counts are not stored in the
    container and come back as zero."""
    _, _, raw = _read_container(_MAGIC_ENROLLMENT, path)
    entries = {label: Spectrogram(values) for label, values in raw}
    if len(entries) != len(raw):
        raise FormatError("duplicate identities in enrollment archive")
    return EnrollmentDb(entries=entries, source_count={k: 0 for k in entries})
