import numpy as np
import pytest

from rffid.errors import ConfigError, InputError
from rffid.signals import (
    ChannelConfig,
    ComplexBaseband,
    DeviceProfile,
    LoRaParams,
    apply_channel,
    apply_impairment,
    measure_snr,
    synth_packet,
    synth_preamble,
)

PARAMS = LoRaParams(bandwidth_hz=125e3, spreading_factor=7, sample_rate_hz=1e6)


def test_symbol_rate_and_duration_sf7():
    assert PARAMS.symbol_rate_hz == 976.5625
    assert PARAMS.symbol_duration_s == pytest.approx(1024e-6)
    assert PARAMS.samples_per_symbol == 1024


def test_preamble_starts_at_amplitude():
    params = LoRaParams(bandwidth_hz=125e3, spreading_factor=7,
                        sample_rate_hz=1e6, amplitude=2.5)
    symbol = synth_preamble(params)
    assert symbol.samples[0] == 2.5 + 0j
    assert len(symbol) == params.samples_per_symbol


def test_preamble_constant_modulus():
    params = LoRaParams(bandwidth_hz=125e3, spreading_factor=8,
                        sample_rate_hz=1e6, amplitude=1.7)
    magnitudes = np.abs(synth_preamble(params).samples)
    ulp = np.spacing(1.7)
    assert np.max(np.abs(magnitudes - 1.7)) <= 8 * ulp


def test_preamble_frequency_sweep_endpoints():
    # oracle: slope of the unwrapped phase, checked against -BW/2 .. +BW/2
    symbol = synth_preamble(PARAMS)
    inst = np.diff(np.unwrap(np.angle(symbol.samples))) * PARAMS.sample_rate_hz / (2 * np.pi)
    bw = PARAMS.bandwidth_hz
    assert abs(inst[0] - (-bw / 2)) < 0.01 * bw
    assert abs(inst[-1] - bw / 2) < 0.01 * bw
    # sweep is linear: residual of a straight-line fit is tiny
    fit = np.polyfit(np.arange(inst.size), inst, 1)
    residual = inst - np.polyval(fit, np.arange(inst.size))
    assert np.max(np.abs(residual)) < 0.001 * bw


def test_packet_is_repeated_preamble():
    rng = np.random.default_rng(0)
    packet = synth_packet(PARAMS, rng)
    symbol_len = PARAMS.samples_per_symbol
    assert len(packet) == 8 * symbol_len
    assert np.array_equal(packet.samples[:symbol_len],
                          packet.samples[symbol_len : 2 * symbol_len])


def test_single_preamble_packet_equals_symbol():
    params = LoRaParams(bandwidth_hz=125e3, spreading_factor=7,
                        sample_rate_hz=1e6, preamble_count=1)
    assert np.array_equal(synth_packet(params).samples, synth_preamble(params).samples)


def test_params_validation():
    with pytest.raises(ConfigError):
        LoRaParams(bandwidth_hz=125e3, spreading_factor=4, sample_rate_hz=1e6)
    with pytest.raises(ConfigError):
        LoRaParams(bandwidth_hz=125e3, spreading_factor=13, sample_rate_hz=1e6)
    with pytest.raises(ConfigError):
        LoRaParams(bandwidth_hz=125e3, spreading_factor=7, sample_rate_hz=100e3)
    with pytest.raises(ConfigError):
        LoRaParams(bandwidth_hz=-1.0, spreading_factor=7, sample_rate_hz=1e6)


class TestImpairment:
    def test_zero_profile_is_identity(self):
        rng = np.random.default_rng(1)
        packet = synth_packet(PARAMS, rng)
        out = apply_impairment(packet, DeviceProfile(device_id=0), rng)
        assert np.array_equal(out.samples, packet.samples)

    def test_pure_cfo_rotation(self):
        fs = 1e6
        ones = ComplexBaseband(np.ones(16, dtype=complex), fs)
        profile = DeviceProfile(device_id=0, cfo_hz=fs / 4)
        out = apply_impairment(ones, profile, np.random.default_rng(0))
        expected = np.exp(1j * np.pi * np.arange(16) / 2)
        assert np.allclose(out.samples, expected, atol=1e-12)

    def test_cubic_term_on_unit_sample(self):
        sig = ComplexBaseband(np.array([1.0 + 0j]), 1e6)
        profile = DeviceProfile(device_id=0, pa_cubic_coeff=0.1)
        out = apply_impairment(sig, profile, np.random.default_rng(0))
        assert out.samples[0] == pytest.approx(1.1 + 0j)

    def test_near_zero_profile_is_nearly_identity(self):
        rng = np.random.default_rng(2)
        packet = synth_packet(PARAMS, rng)
        profile = DeviceProfile(
            device_id=0, cfo_hz=1e-9, iq_gain_db=1e-9, iq_phase_rad=1e-9,
            pa_cubic_coeff=1e-9, dc_offset=1e-9 + 1e-9j, phase_noise_std_rad=1e-9,
        )
        out = apply_impairment(packet, profile, rng)
        assert np.max(np.abs(out.samples - packet.samples)) < 1e-6 * PARAMS.amplitude

    def test_seed_determinism(self):
        packet = synth_packet(PARAMS)
        profile = DeviceProfile(device_id=0, phase_noise_std_rad=1e-2)
        a = apply_impairment(packet, profile, np.random.default_rng(33))
        b = apply_impairment(packet, profile, np.random.default_rng(33))
        assert np.array_equal(a.samples, b.samples)

    def test_negative_phase_noise_rejected(self):
        with pytest.raises(ConfigError):
            DeviceProfile(device_id=0, phase_noise_std_rad=-1.0)


class TestChannel:
    def test_identity_channel(self):
        packet = synth_packet(PARAMS)
        out = apply_channel(packet, ChannelConfig(), np.random.default_rng(0))
        assert np.array_equal(out.samples, packet.samples)

    def test_pure_delay(self):
        packet = synth_packet(PARAMS)
        channel = ChannelConfig(taps=((3, 1 + 0j),))
        out = apply_channel(packet, channel, np.random.default_rng(0))
        assert len(out) == len(packet) + 3
        assert np.array_equal(out.samples[:3], np.zeros(3, dtype=complex))
        assert np.array_equal(out.samples[3:], packet.samples)

    def test_awgn_snr_calibration(self):
        rng = np.random.default_rng(5)
        sig = ComplexBaseband(np.exp(1j * rng.uniform(0, 2 * np.pi, 100_000)), 1e6)
        noisy = apply_channel(sig, ChannelConfig(snr_db=10.0), rng)
        assert measure_snr(sig, noisy) == pytest.approx(10.0, abs=0.3)

    def test_linearity_without_noise(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        y = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        channel = ChannelConfig(
            taps=((0, 0.9 + 0.1j), (2, -0.3 + 0.2j), (5, 0.1j)),
            doppler_shift_hz=80.0,
        )
        fs = 1e6
        a, b = 1.7 - 0.4j, -0.6 + 2.1j
        combined = apply_channel(
            ComplexBaseband(a * x + b * y, fs), channel, np.random.default_rng(0)
        )
        separate = (
            a * apply_channel(ComplexBaseband(x, fs), channel, np.random.default_rng(0)).samples
            + b * apply_channel(ComplexBaseband(y, fs), channel, np.random.default_rng(0)).samples
        )
        scale = np.max(np.abs(separate))
        assert np.max(np.abs(combined.samples - separate)) < 1e-12 * scale

    def test_tap_validation(self):
        with pytest.raises(ConfigError):
            ChannelConfig(taps=())
        with pytest.raises(ConfigError):
            ChannelConfig(taps=((2, 1 + 0j), (2, 0.5 + 0j)))
        with pytest.raises(ConfigError):
            ChannelConfig(taps=((-1, 1 + 0j),))
        with pytest.raises(ConfigError):
            ChannelConfig(taps=((0, 0j),))


class TestMeasureSnr:
    def test_equal_power_noise_is_zero_db(self):
        rng = np.random.default_rng(7)
        clean = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
        noise = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
        noise *= np.sqrt(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2))
        fs = 1e6
        snr = measure_snr(ComplexBaseband(clean, fs), ComplexBaseband(clean + noise, fs))
        assert snr == pytest.approx(0.0, abs=1e-9)

    def test_hundredth_power_noise_is_twenty_db(self):
        rng = np.random.default_rng(8)
        clean = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
        noise = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
        noise *= np.sqrt(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2) / 100)
        fs = 1e6
        snr = measure_snr(ComplexBaseband(clean, fs), ComplexBaseband(clean + noise, fs))
        assert snr == pytest.approx(20.0, abs=1e-9)

    def test_channel_round_trip(self):
        rng = np.random.default_rng(9)
        sig = ComplexBaseband(np.exp(1j * rng.uniform(0, 2 * np.pi, 100_000)), 1e6)
        noisy = apply_channel(sig, ChannelConfig(snr_db=15.0), rng)
        assert measure_snr(sig, noisy) == pytest.approx(15.0, abs=0.3)

    def test_identical_signals_rejected(self):
        sig = ComplexBaseband(np.ones(8, dtype=complex), 1e6)
        with pytest.raises(InputError):
            measure_snr(sig, ComplexBaseband(sig.samples.copy(), 1e6))

    def test_length_mismatch_rejected(self):
        fs = 1e6
        with pytest.raises(InputError):
            measure_snr(
                ComplexBaseband(np.ones(8, dtype=complex), fs),
                ComplexBaseband(np.ones(9, dtype=complex), fs),
            )


def test_baseband_validation():
    with pytest.raises(InputError):
        ComplexBaseband(np.array([], dtype=complex), 1e6)
    with pytest.raises(InputError):
        ComplexBaseband(np.array([np.nan + 0j]), 1e6)
