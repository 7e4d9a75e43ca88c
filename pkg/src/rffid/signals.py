"""LoRa preamble synthesis, transmitter impairments, and channel effects.

The transmit chain produces complex baseband packets: an up-chirp symbol
repeated ``preamble_count`` times, distorted by a per-device hardware
impairment model, then passed through a tapped-delay-line channel with an
optional constant Doppler shift and AWGN.

All operations are pure given an explicit numpy Generator, so they are safe
to call concurrently as long as each worker owns its generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError


@dataclass(frozen=True)
class LoRaParams:
    """Chirp-spread-spectrum packet parameters.

    Derived quantities: symbol rate ``Rs = bandwidth / 2**spreading_factor``
    and symbol duration ``T = 1 / Rs``.
    """

    bandwidth_hz: float
    spreading_factor: int
    sample_rate_hz: float
    amplitude: float = 1.0
    preamble_count: int = 8

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ConfigError(f"bandwidth_hz must be positive, got {self.bandwidth_hz}")
        if not 5 <= self.spreading_factor <= 12:
            raise ConfigError(
                f"spreading_factor must be in [5, 12], got {self.spreading_factor}"
            )
        if self.sample_rate_hz < self.bandwidth_hz:
            raise ConfigError(
                "sample_rate_hz must cover the chirp span: "
                f"{self.sample_rate_hz} < {self.bandwidth_hz}"
            )
        if self.amplitude <= 0:
            raise ConfigError(f"amplitude must be positive, got {self.amplitude}")
        if self.preamble_count < 1:
            raise ConfigError(f"preamble_count must be >= 1, got {self.preamble_count}")

    @property
    def symbol_rate_hz(self) -> float:
        return self.bandwidth_hz / 2**self.spreading_factor

    @property
    def symbol_duration_s(self) -> float:
        return 1.0 / self.symbol_rate_hz

    @property
    def samples_per_symbol(self) -> int:
        return int(self.symbol_duration_s * self.sample_rate_hz)

    @property
    def samples_per_packet(self) -> int:
        return self.preamble_count * self.samples_per_symbol


@dataclass(frozen=True)
class DeviceProfile:
    """Hardware impairment parameters of one transmitter.

    Each field is independently zeroable; an all-zero profile is a perfect
    transmitter. The five stages model an SX1276-class front end: cubic PA
    nonlinearity, I/Q gain/phase imbalance, DC offset, residual carrier
    frequency offset, and oscillator phase noise (Gaussian random walk).
    """

    device_id: int
    cfo_hz: float = 0.0
    iq_gain_db: float = 0.0
    iq_phase_rad: float = 0.0
    pa_cubic_coeff: float = 0.0
    dc_offset: complex = 0j
    phase_noise_std_rad: float = 0.0

    def __post_init__(self):
        if self.phase_noise_std_rad < 0:
            raise ConfigError(
                f"phase_noise_std_rad must be >= 0, got {self.phase_noise_std_rad}"
            )


@dataclass(frozen=True)
class ChannelConfig:
    """Tapped-delay-line channel with constant Doppler and optional AWGN.

    ``taps`` is a list of (delay in samples, complex gain); delays must be
    nonnegative and strictly increasing. ``snr_db=None`` disables noise.
    SNR is referenced to the post-channel signal power, measured per packet.
    """

    taps: tuple[tuple[int, complex], ...] = ((0, 1 + 0j),)
    doppler_shift_hz: float = 0.0
    snr_db: float | None = None

    def __post_init__(self):
        if len(self.taps) == 0:
            raise ConfigError("channel needs at least one tap")
        delays = [d for d, _ in self.taps]
        if any(d < 0 for d in delays):
            raise ConfigError(f"tap delays must be nonnegative, got {delays}")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ConfigError(f"tap delays must be strictly increasing, got {delays}")
        if all(g == 0 for _, g in self.taps):
            raise ConfigError("tap gains must not all be zero")

    @property
    def max_delay(self) -> int:
        return max(d for d, _ in self.taps)


IDENTITY_CHANNEL = ChannelConfig()


@dataclass(eq=False)
class ComplexBaseband:
    """A complex baseband sample sequence with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.size == 0:
            raise InputError("baseband signal must be nonempty")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("baseband signal contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size


def synth_preamble(params: LoRaParams) -> ComplexBaseband:
    """One up-chirp symbol: amplitude-M complex exponential sweeping
    -BW/2 .. +BW/2 over the symbol duration."""
    n = np.arange(params.samples_per_symbol)
    t = n / params.sample_rate_hz
    bw, rs = params.bandwidth_hz, params.symbol_rate_hz
    phase = np.pi * t * (-bw + bw * rs * t)
    samples = params.amplitude * np.exp(1j * phase)
    return ComplexBaseband(samples, params.sample_rate_hz)


def synth_packet(params: LoRaParams, rng: np.random.Generator | None = None) -> ComplexBaseband:
    """A packet header: ``preamble_count`` identical preamble symbols.

    ``rng`` is accepted for interface uniformity with the impairment/channel
    stages; the clean preamble itself is deterministic.
    """
    symbol = synth_preamble(params)
    samples = np.tile(symbol.samples, params.preamble_count)
    return ComplexBaseband(samples, params.sample_rate_hz)


def apply_impairment(
    signal: ComplexBaseband, profile: DeviceProfile, rng: np.random.Generator
) -> ComplexBaseband:
    """Distort a signal with one device's hardware signature.

    Stage order follows the physical TX chain: PA nonlinearity, I/Q
    imbalance, DC offset, CFO rotation, phase-noise random walk. Stages
    whose parameter is exactly zero are skipped, so an all-zero profile
    returns the input bit-for-bit.
    """
    s = signal.samples.copy()
    fs = signal.sample_rate_hz

    if profile.pa_cubic_coeff != 0.0:
        s = s + profile.pa_cubic_coeff * s * np.abs(s) ** 2

    if profile.iq_gain_db != 0.0 or profile.iq_phase_rad != 0.0:
        gain_i = 10.0 ** (profile.iq_gain_db / 40.0)
        gain_q = 10.0 ** (-profile.iq_gain_db / 40.0)
        i = gain_i * s.real
        q = gain_q * (s.imag * np.cos(profile.iq_phase_rad) + s.real * np.sin(profile.iq_phase_rad))
        s = i + 1j * q

    if profile.dc_offset != 0:
        s = s + profile.dc_offset

    if profile.cfo_hz != 0.0:
        n = np.arange(s.size)
        s = s * np.exp(2j * np.pi * profile.cfo_hz * n / fs)

    if profile.phase_noise_std_rad != 0.0:
        walk = np.cumsum(rng.normal(0.0, profile.phase_noise_std_rad, s.size))
        s = s * np.exp(1j * walk)

    return ComplexBaseband(s, fs)


def apply_channel(
    signal: ComplexBaseband, channel: ChannelConfig, rng: np.random.Generator
) -> ComplexBaseband:
    """Convolve with the tap line, rotate by the Doppler shift, add AWGN.

    Output length is input length + max tap delay. Noise power is set from
    the empirical post-channel signal power so the realized SNR matches
    ``snr_db``.
    """
    x = signal.samples
    fs = signal.sample_rate_hz
    out = np.zeros(x.size + channel.max_delay, dtype=np.complex128)
    for delay, gain in channel.taps:
        if gain != 0:
            out[delay : delay + x.size] += gain * x

    if channel.doppler_shift_hz != 0.0:
        n = np.arange(out.size)
        out = out * np.exp(2j * np.pi * channel.doppler_shift_hz * n / fs)

    if channel.snr_db is not None:
        signal_power = np.mean(np.abs(out) ** 2)
        noise_power = signal_power / 10.0 ** (channel.snr_db / 10.0)
        scale = np.sqrt(noise_power / 2.0)
        noise = scale * (rng.standard_normal(out.size) + 1j * rng.standard_normal(out.size))
        out = out + noise

    return ComplexBaseband(out, fs)


def measure_snr(clean: ComplexBaseband, noisy: ComplexBaseband) -> float:
    """Empirical SNR in dB of ``noisy`` against the reference ``clean``."""
    if len(clean) != len(noisy):
        raise InputError(
            f"signals must have equal length, got {len(clean)} and {len(noisy)}"
        )
    noise = noisy.samples - clean.samples
    noise_power = np.mean(np.abs(noise) ** 2)
    if noise_power == 0.0:
        raise InputError("signals are identical: noise power is zero")
    signal_power = np.mean(np.abs(clean.samples) ** 2)
    return float(10.0 * np.log10(signal_power / noise_power))
