"""Receiver-side preprocessing: synchronization, CFO compensation,
normalization, and the dB spectrogram.

``preprocess_packet`` is the full chain turning a raw received packet into
the fixed-shape dB image consumed by the networks. Its output shape depends
only on (LoRaParams, StftConfig), never on signal content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .signals import ComplexBaseband, LoRaParams, synth_packet

DB_FLOOR = 1e-12  # added inside the log so empty bins clamp to -120 dB


@dataclass(frozen=True)
class StftConfig:
    """Short-time Fourier transform parameters.

    ``fft_size`` must be a power of two and at least ``window_len``; frames
    overlap when ``hop < window_len``. Frequency rows of the output run from
    -fs/2 to +fs/2 (centered).
    """

    window: str = "hann"
    window_len: int = 64
    hop: int = 32
    fft_size: int = 64

    def __post_init__(self):
        if self.window not in ("hann", "rectangular"):
            raise ConfigError(f"unknown window {self.window!r}")
        if self.window_len < 1 or self.hop < 1:
            raise ConfigError("window_len and hop must be positive")
        if self.hop > self.window_len:
            raise ConfigError(
                f"hop ({self.hop}) must not exceed window_len ({self.window_len})"
            )
        if self.fft_size < self.window_len:
            raise ConfigError(
                f"fft_size ({self.fft_size}) must be >= window_len ({self.window_len})"
            )
        if self.fft_size & (self.fft_size - 1) != 0:
            raise ConfigError(f"fft_size must be a power of two, got {self.fft_size}")

    def window_values(self) -> np.ndarray:
        if self.window == "hann":
            n = np.arange(self.window_len)
            return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.window_len)
        return np.ones(self.window_len)

    def frame_count(self, signal_len: int) -> int:
        if signal_len < self.window_len:
            raise InputError(
                f"signal of {signal_len} samples is shorter than the window "
                f"({self.window_len})"
            )
        return (signal_len - self.window_len) // self.hop + 1


@dataclass(eq=False)
class Spectrogram:
    """A dB-scaled STFT magnitude image: rows are frequency bins, columns
    are time frames."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values))
        if not np.all(np.isfinite(self.values)):
            raise InputError("spectrogram contains non-finite entries")

    @property
    def freq_bins(self) -> int:
        return self.values.shape[0]

    @property
    def time_frames(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def synchronize(signal: ComplexBaseband, params: LoRaParams) -> int:
    """Sample offset of the packet start, via FFT cross-correlation against
    the ideal preamble-header template.

    The template spans all ``preamble_count`` symbols: a single-symbol
    template would produce one correlation peak per repeated preamble and
    noise could select any of them, while the full header has a unique peak.
    """
    template = synth_packet(params).samples
    sig = signal.samples
    if sig.size < template.size:
        raise InputError(
            f"signal of {sig.size} samples is shorter than the "
            f"{template.size}-sample preamble header"
        )
    nfft = 1 << (sig.size - 1).bit_length()
    spec = np.fft.fft(sig, nfft) * np.conj(np.fft.fft(template, nfft))
    corr = np.fft.ifft(spec)[: sig.size - template.size + 1]
    return int(np.argmax(np.abs(corr)))


def estimate_cfo(signal: ComplexBaseband, params: LoRaParams) -> float:
    """Carrier frequency offset estimate in Hz from the preamble repetition.

    Correlates each sample with its counterpart one symbol later; the phase
    of the aggregate correlation is 2*pi*cfo*L/fs. Unambiguous for
    |cfo| < symbol_rate / 2.
    """
    lag = params.samples_per_symbol
    s = signal.samples
    if s.size < 2 * lag:
        raise InputError(
            f"CFO estimation needs at least two preamble symbols "
            f"({2 * lag} samples), got {s.size}"
        )
    corr = np.sum(np.conj(s[:-lag]) * s[lag:])
    return float(np.angle(corr) * signal.sample_rate_hz / (2.0 * np.pi * lag))


def compensate_cfo(signal: ComplexBaseband, cfo_hz: float) -> ComplexBaseband:
    """Counter-rotate every sample by the given frequency offset."""
    if cfo_hz == 0.0:
        return ComplexBaseband(signal.samples.copy(), signal.sample_rate_hz)
    n = np.arange(len(signal))
    rotated = signal.samples * np.exp(-2j * np.pi * cfo_hz * n / signal.sample_rate_hz)
    return ComplexBaseband(rotated, signal.sample_rate_hz)


def normalize_power(signal: ComplexBaseband) -> ComplexBaseband:
    """Scale to unit RMS power."""
    rms = np.sqrt(np.mean(np.abs(signal.samples) ** 2))
    if rms == 0.0:
        raise InputError("cannot normalize an all-zero signal")
    return ComplexBaseband(signal.samples / rms, signal.sample_rate_hz)


def stft(signal: ComplexBaseband, config: StftConfig) -> np.ndarray:
    """Windowed DFT matrix, shape (fft_size, frames), rows centered so
    frequency runs -fs/2 .. +fs/2."""
    frames = config.frame_count(len(signal))
    window = config.window_values()
    idx = np.arange(config.window_len)[None, :] + config.hop * np.arange(frames)[:, None]
    segments = signal.samples[idx] * window[None, :]
    spectrum = np.fft.fft(segments, n=config.fft_size, axis=1)
    return np.fft.fftshift(spectrum, axes=1).T


def db_spectrogram(stft_matrix: np.ndarray) -> Spectrogram:
    """Power of an STFT matrix in dB, floored so empty bins stay finite.

    Stored as float32: archives are bit-exact round trips of these values.
    """
    power = np.abs(stft_matrix) ** 2
    return Spectrogram((10.0 * np.log10(power + DB_FLOOR)).astype(np.float32))


def preprocess_packet(
    signal: ComplexBaseband, params: LoRaParams, config: StftConfig
) -> Spectrogram:
    """Full receive chain: synchronize, slice the preamble header, estimate
    and compensate CFO, normalize, STFT, convert to dB."""
    offset = synchronize(signal, params)
    packet_len = params.samples_per_packet
    sliced = ComplexBaseband(
        signal.samples[offset : offset + packet_len], signal.sample_rate_hz
    )
    cfo = estimate_cfo(sliced, params)
    compensated = compensate_cfo(sliced, cfo)
    normalized = normalize_power(compensated)
    return db_spectrogram(stft(normalized, config))


def spectrogram_shape(params: LoRaParams, config: StftConfig) -> tuple[int, int]:
    """Output shape of ``preprocess_packet`` for a parameter set."""
    return config.fft_size, config.frame_count(params.samples_per_packet)
