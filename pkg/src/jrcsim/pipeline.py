"""End-to-end chains: transmitter -> channel -> comm or radar receiver -> fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import comm, fusion, radar
from .channel import LinkNoiseConfig, TargetScene, add_awgn, apply_target_scene
from .signal import SignalBuffer
from .waveform import JrcWaveformConfig, OfdmFrameRecord, transmit_pulse


def derive_seed(seed: int, *stream: int) -> int:
    """Independent child seed for (seed, stream...) without touching global state."""
    return int(np.random.SeedSequence([int(seed), *map(int, stream)]).generate_state(1)[0])


def mmw_noise_band(cfg: JrcWaveformConfig) -> tuple[float, float]:
    """MMW band spanned by both sub-bands plus their modulation skirts."""
    skirt = 2 * (cfg.ofdm.low_edge + cfg.ofdm.occupied_bandwidth)
    lo = cfg.mmw_shift + cfg.f1 - skirt
    hi = cfg.mmw_shift + cfg.f2 + cfg.chirp_bandwidth + skirt
    return max(lo, 0.0), min(hi, cfg.sample_rate / 2)


# -- communication -----------------------------------------------------------

@dataclass(frozen=True)
class CommOptions:
    pulses: int = 2
    check_unwrap: bool = True
    sync_fallback: bool = False


def comm_pulse(cfg: JrcWaveformConfig, seed: int, noise: LinkNoiseConfig,
               options: CommOptions = CommOptions()) -> comm.BerReport:
    """One pulse through the self-coherent link; returns its BER report."""
    mmw, _, _, record = transmit_pulse(cfg, seed, real=True)
    rx = add_awgn(mmw, noise, mmw_noise_band(cfg))
    ed = comm.envelope_detect(rx)
    m_hat = comm.demod_ce_ofdm(ed, cfg, check_unwrap=options.check_unwrap)
    res = comm.ofdm_demodulate(m_hat, record, cfg.ofdm, sync_fallback=options.sync_fallback)
    tx_data = record.tx_symbols[:, cfg.ofdm.data_positions]
    return comm.compute_ber(record.tx_bits, res.rx_bits, rx_symbols=res.symbols,
                            tx_symbols=tx_data, frames=record.frames)


def run_comm(cfg: JrcWaveformConfig, seed: int, noise: LinkNoiseConfig = LinkNoiseConfig(),
             options: CommOptions = CommOptions()) -> comm.BerReport:
    reports = []
    for p in range(options.pulses):
        pulse_noise = replace(noise, seed=derive_seed(noise.seed, 1, p))
        reports.append(comm_pulse(cfg, derive_seed(seed, 0, p), pulse_noise, options))
    return comm.combine_reports(reports)


def robust_comm_options(pulses: int = 2) -> CommOptions:
    """Monte-Carlo setting: low-SNR trials yield bit errors instead of exceptions."""
    return CommOptions(pulses=pulses, check_unwrap=False, sync_fallback=True)


# -- radar -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadarCapture:
    bands: tuple[radar.DechirpedSubband, radar.DechirpedSubband]
    m: SignalBuffer
    record: OfdmFrameRecord


def run_radar(cfg: JrcWaveformConfig, scene: TargetScene, seed: int,
              noise: LinkNoiseConfig = LinkNoiseConfig(), *, real: bool = False) -> RadarCapture:
    """Transmit one pulse, reflect it off ``scene`` and de-chirp both sub-bands."""
    mmw, _, m, record = transmit_pulse(cfg, seed, real=real)
    echo = apply_target_scene(mmw, scene)
    if noise.snr_db != math.inf:
        echo = add_awgn(echo, noise, mmw_noise_band(cfg))
    bands = tuple(radar.dechirp_subband(echo, d, cfg, m) for d in radar.subband_descriptors(cfg))
    return RadarCapture(bands, m, record)


def scene_window(scene: TargetScene, margin: float = 0.5) -> tuple[float, float]:
    """Range interval around the scene used to mark valid frequency samples."""
    r = scene.ranges
    if len(r) == 0:
        return (0.0, margin)
    return (max(0.0, float(r.min()) - margin), float(r.max()) + margin)


def run_fusion(capture: RadarCapture, window_m: tuple[float, float],
               fcfg: fusion.FusionConfig = fusion.FusionConfig(),
               c: float | None = None) -> fusion.FusedSpectrum:
    kw = {} if c is None else {"c": c}
    b1, b2 = (fusion.to_frequency_samples(d, window_m, **kw) for d in capture.bands)
    b2 = fusion.align_coherence(b1, b2, fcfg)
    return fusion.fill_gap(b1, b2, fcfg)


def fullband_oracle(cfg: JrcWaveformConfig, scene: TargetScene,
                    window_m: tuple[float, float]) -> fusion.BandSamples:
    """Brute-force reference: one unmodulated chirp sweeping the whole fused span.

    Same slope, sample rates and de-chirp chain as the sub-bands, so its
    frequency samples fall on the fused grid.
    """
    k = cfg.chirp_slope
    span = cfg.fused_bandwidth
    start = cfg.band_starts_mmw[0]
    tx = radar.lfm_chirp(start, k, span / k, cfg.sample_rate, cfg.amplitude)
    echo = apply_target_scene(tx, scene)
    desc = radar.SubbandDescriptor(1, start, k, span, +1)
    cutoff, transition = radar.beat_cutoff(cfg)
    d = radar.dechirp(echo, tx, desc, beat_rate=cfg.beat_sample_rate, cutoff=cutoff,
                      transition=transition)
    return fusion.to_frequency_samples(d, window_m, c=scene.propagation_speed)


def oracle_profile(b: fusion.BandSamples, window: str = "hann", zero_pad_factor: int = 8,
                   c: float | None = None) -> radar.RangeProfile:
    kw = {} if c is None else {"c": c}
    return fusion.band_range_profile(b, window, zero_pad_factor, **kw)


def pmi_point(cfg: JrcWaveformConfig, h: float, scene: TargetScene, seed: int,
              noise: LinkNoiseConfig, options: CommOptions) -> tuple[comm.BerReport, float]:
    """Comm BER and mean de-chirped SNR of both sub-bands at PMI ``h``."""
    c = cfg.with_pmi(h)
    ber = run_comm(c, seed, noise, options)
    cap = run_radar(c, scene, seed, replace(noise, seed=derive_seed(noise.seed, 2)))
    cutoff, _ = radar.beat_cutoff(c)
    snrs = [radar.measure_radar_snr(d, scene, cutoff=cutoff) for d in cap.bands]
    return ber, float(10 * np.log10(np.mean(10 ** (np.array(snrs) / 10))))


