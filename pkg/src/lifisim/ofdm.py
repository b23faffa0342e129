"""DC-biased optical OFDM: analytical link budget and a time-domain simulator.

Subcarriers n = 1 .. N_u/2 carry data (their mirrors N - n hold the complex
conjugates), the DC bin carries the bias and the rest are zero padding.
Subcarrier n sits at f_n = n f_s / N.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal as sps
from scipy.special import erfc, erfcinv

from .channel import ChannelResponse
from .errors import DomainError, NoSolutionError, UndefinedRatioError


def qfunc(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def qfunc_inv(p):
    return math.sqrt(2.0) * erfcinv(2.0 * p)


@dataclass(frozen=True)
class OfdmLinkConfig:
    n_fft: int = 128
    n_used: int = 108
    n_cp: int = 7
    qam_order: int = 16
    bit_rate: float = 100e6
    clip_low: float = 3.2
    clip_high: float = 3.2
    led_cutoff: float = 40e6
    dac_cutoff: Optional[float] = None
    adc_cutoff: Optional[float] = None
    noise_psd: float = 1e-21
    responsivity: float = 0.6
    subcarrier_power: float = 1.0
    target_ber: float = 3.8e-3
    # 'mag' puts -3 dB at the cutoff; 'phase' is the analog-prototype
    # convention of some toolboxes (about -8.9 dB at the cutoff for order 5)
    bessel_norm: str = "mag"
    # DC bias in units of the reference std; None -> min(clip_low, clip_high)
    bias_ratio: Optional[float] = None
    # std the bias refers to: 'dac' (DAC-filtered signal) or 'signal'
    power_reference: str = "dac"

    def __post_init__(self):
        n = self.n_fft
        if n < 4 or n & (n - 1):
            raise DomainError("N must be a power of two >= 4")
        if not 2 <= self.n_used <= n - 2 or self.n_used % 2:
            raise DomainError("N_u must be even and lie in [2, N - 2]")
        if self.n_cp < 0:
            raise DomainError("N_cp must be >= 0")
        m = self.qam_order
        k = int(round(math.log2(m))) if m > 1 else 0
        if m < 4 or 2 ** k != m or k % 2:
            raise DomainError("M must be a square power of two (4, 16, 64, ...)")
        if self.clip_low <= 0 or self.clip_high <= 0:
            raise DomainError("clipping ratios must be positive")
        if self.bit_rate <= 0 or self.noise_psd <= 0 or self.responsivity <= 0:
            raise DomainError("rates, noise PSD and responsivity must be positive")
        if self.bessel_norm not in ("phase", "mag", "delay"):
            raise DomainError(f"unknown Bessel normalization {self.bessel_norm!r}")
        if self.power_reference not in ("dac", "signal"):
            raise DomainError(f"unknown power reference {self.power_reference!r}")

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.qam_order)))

    @property
    def used_indices(self) -> np.ndarray:
        return np.arange(1, self.n_used // 2 + 1)

    @property
    def bias(self) -> float:
        if self.bias_ratio is not None:
            return self.bias_ratio
        return min(self.clip_low, self.clip_high)


# -- rates and front end -------------------------------------------------------

def sampling_rate(cfg: OfdmLinkConfig):
    """(R_s, f_s, bandwidth) in Hz."""
    r_s = 2.0 * cfg.bit_rate / cfg.bits_per_symbol
    r_os = cfg.n_fft / cfg.n_used
    f_s = r_os * r_s * (cfg.n_fft + cfg.n_cp) / cfg.n_fft
    return r_s, f_s, f_s / (2.0 * r_os)


def subcarrier_freqs(cfg: OfdmLinkConfig) -> np.ndarray:
    _, f_s, _ = sampling_rate(cfg)
    return cfg.used_indices * f_s / cfg.n_fft


def channel_grid(cfg: OfdmLinkConfig, full: bool = False) -> np.ndarray:
    """Frequencies a channel must be evaluated on: DC plus the used
    subcarriers, or every bin up to f_s/2 when ``full``."""
    _, f_s, _ = sampling_rate(cfg)
    n = np.arange(cfg.n_fft // 2 + 1) if full else np.r_[0, cfg.used_indices]
    return n * f_s / cfg.n_fft


def clipping_attenuation(r1: float, r2: float) -> float:
    if r1 < 0 or r2 < 0:
        raise DomainError("clipping ratios must be >= 0")
    return float(1.0 - (qfunc(r1) + qfunc(r2)))


def _bessel(f, cutoff, norm):
    b, a = sps.bessel(5, 2 * np.pi * cutoff, btype="low", analog=True, norm=norm)
    _, h = sps.freqs(b, a, worN=2 * np.pi * np.asarray(f, dtype=float))
    return h


def front_end_response(cfg: OfdmLinkConfig, f):
    """(H_DAC, H_LED, H_ADC) at frequencies f.

    The DAC is a zero-order hold (sinc envelope; its half-sample delay is
    dropped) followed by a 5th-order Bessel low-pass; the LED a first-order
    Butterworth; the ADC anti-aliasing filter another 5th-order Bessel. Both
    Bessel cutoffs default to the OFDM bandwidth.
    """
    f = np.atleast_1d(np.asarray(f, dtype=float))
    _, f_s, bw = sampling_rate(cfg)
    fa = np.abs(f)
    h_dac = np.sinc(fa / f_s) * _bessel(fa, cfg.dac_cutoff or bw, cfg.bessel_norm)
    h_led = 1.0 / (1.0 + 1j * fa / cfg.led_cutoff)
    h_adc = _bessel(fa, cfg.adc_cutoff or bw, cfg.bessel_norm)
    neg = f < 0
    for h in (h_dac, h_led, h_adc):
        h[neg] = np.conj(h[neg])
    return h_dac, h_led, h_adc


def reference_std(cfg: OfdmLinkConfig) -> float:
    """Std of the transmit signal at unit power scale, per ``power_reference``."""
    if cfg.power_reference == "signal":
        return math.sqrt(cfg.n_used * cfg.subcarrier_power)
    h_dac, _, _ = front_end_response(cfg, subcarrier_freqs(cfg))
    return math.sqrt(2.0 * cfg.subcarrier_power * float(np.sum(np.abs(h_dac) ** 2)))


def dc_bias(cfg: OfdmLinkConfig, power_scale: float = 1.0) -> float:
    """Bias level r * sigma_ref, which is also the average transmitted power."""
    return cfg.bias * math.sqrt(power_scale) * reference_std(cfg)


transmit_power = dc_bias


# -- analytical link -------------------------------------------------------------

@dataclass
class LinkReport:
    indices: np.ndarray
    freqs: np.ndarray
    gamma: np.ndarray
    ber_n: np.ndarray
    p_b: float
    snr_db: float
    power_scale: float
    mode: str = "full"
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subcarrier", "frequency_hz", "gamma_db", "ber"])
            for n, f, g, b in zip(self.indices, self.freqs, self.gamma, self.ber_n):
                gdb = 10 * math.log10(g) if g > 0 else float("-inf")
                w.writerow([int(n), repr(float(f)), repr(gdb), repr(float(b))])


def _unit_gamma(cfg: OfdmLinkConfig, channel: ChannelResponse) -> np.ndarray:
    """gamma_n at unit power scale."""
    f = subcarrier_freqs(cfg)
    _, f_s, _ = sampling_rate(cfg)
    h_dac, h_led, h_adc = front_end_response(cfg, f)
    h_cir = channel.at(f)
    k = clipping_attenuation(cfg.clip_low, cfg.clip_high)
    num = (k * cfg.responsivity) ** 2 * np.abs(h_dac * h_led * h_cir * h_adc) ** 2
    den = f_s * cfg.noise_psd * np.abs(h_adc) ** 2 / (2.0 * cfg.n_fft)
    return cfg.subcarrier_power * num / den


def snr_per_subcarrier(cfg: OfdmLinkConfig, channel: ChannelResponse,
                       power_scale: float = 1.0) -> np.ndarray:
    if power_scale < 0:
        raise DomainError("power scale must be >= 0")
    return power_scale * _unit_gamma(cfg, channel)


def ber(cfg: OfdmLinkConfig, gamma):
    """(per-subcarrier BER, average BER)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise DomainError("SNR must be >= 0")
    m = cfg.qam_order
    pb = 4.0 / math.log2(m) * (1 - 1 / math.sqrt(m)) * qfunc(np.sqrt(3 * gamma / (m - 1)))
    return pb, float(np.mean(pb))


def received_snr(cfg: OfdmLinkConfig, channel: ChannelResponse, p_t: float) -> float:
    """Electrical SNR R^2 H(0)^2 P_t^2 / (N_0 f_s / 2) in dB."""
    if p_t <= 0:
        raise DomainError("transmit power must be positive")
    _, f_s, _ = sampling_rate(cfg)
    h0 = channel.dc("cir")
    if h0 == 0.0:
        return float("-inf")
    snr = (cfg.responsivity * h0 * p_t) ** 2 / (cfg.noise_psd * f_s / 2.0)
    return 10.0 * math.log10(snr)


def link_report(cfg: OfdmLinkConfig, channel: ChannelResponse, power_scale: float,
                mode: str = "full") -> LinkReport:
    gamma = snr_per_subcarrier(cfg, channel, power_scale)
    ber_n, p_b = ber(cfg, gamma)
    return LinkReport(indices=cfg.used_indices, freqs=subcarrier_freqs(cfg), gamma=gamma,
                      ber_n=ber_n, p_b=p_b,
                      snr_db=received_snr(cfg, channel, dc_bias(cfg, power_scale)),
                      power_scale=power_scale, mode=mode)


def power_scale_for_snr(cfg: OfdmLinkConfig, channel: ChannelResponse, snr_db: float) -> float:
    """Inverse of the SNR bookkeeping: the power scale giving ``snr_db``."""
    _, f_s, _ = sampling_rate(cfg)
    h0 = channel.dc("cir")
    if h0 == 0.0:
        raise UndefinedRatioError("zero DC gain")
    p_t = math.sqrt(10 ** (snr_db / 10) * cfg.noise_psd * f_s / 2.0) / (cfg.responsivity * abs(h0))
    return (p_t / (cfg.bias * reference_std(cfg))) ** 2


def snr_target(cfg: OfdmLinkConfig, channel: ChannelResponse,
               target_ber: Optional[float] = None, rtol: float = 1e-6,
               max_iter: int = 200) -> float:
    """SNR (dB) at which the average BER reaches the target, by bisection on
    the power scale in [1e-12, 1e12]."""
    target = cfg.target_ber if target_ber is None else target_ber
    unit = _unit_gamma(cfg, channel)
    if not np.any(unit > 0):
        raise NoSolutionError("channel is zero on every used subcarrier")
    floor = ber(cfg, np.zeros(1))[1]
    if not 0 < target < floor:
        raise NoSolutionError(f"target BER must lie in (0, {floor})")
    lo, hi = math.log(1e-12), math.log(1e12)
    if ber(cfg, math.exp(hi) * unit)[1] > target:
        raise NoSolutionError("target BER not reachable within the power bracket")
    if ber(cfg, math.exp(lo) * unit)[1] < target:
        raise NoSolutionError("target BER already met at the lower bracket")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        p = ber(cfg, math.exp(mid) * unit)[1]
        if abs(p - target) <= rtol * target:
            break
        if p > target:
            lo = mid
        else:
            hi = mid
    return received_snr(cfg, channel, dc_bias(cfg, math.exp(mid)))


def snr_penalty(cfg: OfdmLinkConfig, channel_full: ChannelResponse,
                channel_los: ChannelResponse) -> float:
    """SNR_t(full) - SNR_t(LOS only), in dB."""
    if channel_los.dc("los") == 0.0:
        raise UndefinedRatioError("LOS link is blocked")
    return snr_target(cfg, channel_full) - snr_target(cfg, channel_los)


# -- time-domain simulation --------------------------------------------------------

def qam_levels(m: int):
    """Gray-coded per-axis PAM levels for square M-QAM at unit average power."""
    k = int(round(math.sqrt(m)))
    levels = np.arange(-(k - 1), k, 2, dtype=float)
    scale = math.sqrt(2.0 * np.mean(levels ** 2))
    gray = np.arange(k) ^ (np.arange(k) >> 1)
    return levels / scale, gray


def _bits_of(values, nbits):
    return (values[..., None] >> np.arange(nbits - 1, -1, -1)) & 1


def random_symbols(cfg: OfdmLinkConfig, n_symbols: int, rng: np.random.Generator):
    """Uniform random bits and their Gray-mapped QAM symbols.

    Returns (bits, symbols) shaped (n_symbols, N_u/2, 2, log2(M)/2) and
    (n_symbols, N_u/2); the two middle bit axes are the I and Q halves.
    """
    half_bits = cfg.bits_per_symbol // 2
    levels, gray = qam_levels(cfg.qam_order)
    inv_gray = np.argsort(gray)
    bits = rng.integers(0, 2, size=(n_symbols, len(cfg.used_indices), 2, half_bits),
                        dtype=np.int64)
    codes = np.zeros(bits.shape[:-1], dtype=np.int64)
    for i in range(half_bits):
        codes = (codes << 1) | bits[..., i]
    sym = math.sqrt(cfg.subcarrier_power) * (levels[inv_gray[codes[..., 0]]]
                                             + 1j * levels[inv_gray[codes[..., 1]]])
    return bits, sym


def ofdm_modulate(cfg: OfdmLinkConfig, symbols) -> np.ndarray:
    """Real time-domain OFDM symbols (no prefix), shape (n_symbols, N).

    Data go on bins 1..N_u/2 with Hermitian mirrors on N - n; the DC and
    padding bins are zero, so each sample has variance N_u * P_n.
    """
    symbols = np.atleast_2d(symbols)
    N = cfg.n_fft
    used = cfg.used_indices
    X = np.zeros((len(symbols), N), dtype=complex)
    X[:, used] = symbols
    X[:, N - used] = np.conj(symbols)
    return N * np.fft.ifft(X, axis=1).real


def clip_signal(x, low: float, high: float):
    return np.clip(x, -low, high)


def _fir_from_bins(h_half: np.ndarray, n: int, window: int):
    """Real FIR from the response on bins 0..n/2 and the circular shift that
    puts the most energy in its first ``window`` taps."""
    full = np.zeros(n, dtype=complex)
    full[: n // 2 + 1] = h_half
    full[n // 2] = 0.0
    full[n // 2 + 1:] = np.conj(h_half[1: n // 2][::-1])
    h = np.fft.ifft(full).real
    energy = np.convolve(np.r_[h, h[: window - 1]] ** 2, np.ones(window), mode="valid")[:n]
    start = int(np.argmax(energy))
    taps = np.roll(h, -start)
    tail = float(np.sum(taps[window:] ** 2) / max(np.sum(taps ** 2), 1e-300))
    return taps, tail


@dataclass
class SimulationResult:
    ber: float
    n_bits: int
    n_errors: int
    low_confidence: bool
    snr_db: float
    isi_tail_energy: float

    @property
    def binomial_sigma(self) -> float:
        p = self.ber
        return math.sqrt(max(p * (1 - p), 0.0) / max(self.n_bits, 1))


def simulate_link(cfg: OfdmLinkConfig, channel: Optional[ChannelResponse],
                  target_snr_db: Optional[float], n_symbols: int, rng_seed: int,
                  clip: bool = True, chunk: int = 2048,
                  min_errors: int = 10, cyclic: bool = False) -> SimulationResult:
    """Monte Carlo BER of the DC-OFDM chain at a given received SNR.

    ``channel`` None means a flat unit channel; ``target_snr_db`` None means
    noiseless. The channel must cover every bin up to f_s/2 (see
    ``channel_grid(cfg, full=True)``).

    By default the composite front-end and channel FIR is applied as a linear
    convolution over the serial stream, so any impulse-response energy beyond
    the cyclic prefix shows up as inter-symbol interference. ``cyclic`` applies
    it per symbol as a circular convolution instead, and filters the noise
    the same way, i.e. assumes the prefix absorbs the whole memory and the
    noise spectrum is sampled per bin, as the analytical model does.
    """
    if n_symbols < 1:
        raise DomainError("n_symbols must be >= 1")
    rng = np.random.default_rng(rng_seed)
    N, ncp = cfg.n_fft, cfg.n_cp
    used = cfg.used_indices
    half_bits = cfg.bits_per_symbol // 2
    levels, gray = qam_levels(cfg.qam_order)
    k_levels = len(levels)

    _, f_s, _ = sampling_rate(cfg)
    bins = np.arange(N // 2 + 1) * f_s / N
    h_dac, h_led, h_adc = front_end_response(cfg, bins)
    h_cir = np.ones(len(bins), dtype=complex) if channel is None else channel.at(bins)
    h0 = 1.0 if channel is None else channel.dc("cir")
    sig_taps, tail = _fir_from_bins(cfg.responsivity * h_dac * h_led * h_cir * h_adc,
                                    N, ncp + 1)
    noise_taps, _ = _fir_from_bins(h_adc, N, ncp + 1)
    k_att = clipping_attenuation(cfg.clip_low, cfg.clip_high) if clip else 1.0
    eq = k_att * np.fft.fft(sig_taps)[used]

    sigma_x = math.sqrt(cfg.n_used * cfg.subcarrier_power)
    if target_snr_db is None:
        sigma_w = 0.0
    else:
        p_t = dc_bias(cfg, 1.0)
        sigma_w = cfg.responsivity * abs(h0) * p_t / math.sqrt(10 ** (target_snr_db / 10))

    amp = math.sqrt(cfg.subcarrier_power)
    zi_sig = np.zeros(len(sig_taps) - 1)
    zi_noise = np.zeros(len(noise_taps) - 1)
    n_err = 0
    n_bits = 0
    L = N + ncp
    for start in range(0, n_symbols, chunk):
        b = min(chunk, n_symbols - start)
        bits, sym = random_symbols(cfg, b, rng)
        x = ofdm_modulate(cfg, sym)
        x = np.concatenate([x[:, N - ncp:], x], axis=1).ravel()
        if clip:
            x = clip_signal(x, cfg.clip_low * sigma_x, cfg.clip_high * sigma_x)
        if cyclic:
            blk = x.reshape(b, L)[:, ncp:]
            y = np.fft.ifft(np.fft.fft(blk, axis=1) * np.fft.fft(sig_taps), axis=1).real
            y = np.concatenate([y[:, N - ncp:], y], axis=1).ravel()
        else:
            y, zi_sig = sps.lfilter(sig_taps, [1.0], x, zi=zi_sig)
        if sigma_w > 0:
            w = rng.normal(0.0, sigma_w, size=y.shape)
            if cyclic:
                wb = w.reshape(b, L)[:, ncp:]
                wf = np.fft.ifft(np.fft.fft(wb, axis=1) * np.fft.fft(noise_taps), axis=1).real
                wf = np.concatenate([np.zeros((b, ncp)), wf], axis=1).ravel()
            else:
                wf, zi_noise = sps.lfilter(noise_taps, [1.0], w, zi=zi_noise)
            y = y + wf
        Y = np.fft.fft(y.reshape(b, L)[:, ncp:], axis=1)[:, used] / N
        est = Y / eq / amp
        # hard decision per axis
        idx_re = np.clip(np.rint((est.real / (levels[1] - levels[0])) + (k_levels - 1) / 2),
                         0, k_levels - 1).astype(np.int64)
        idx_im = np.clip(np.rint((est.imag / (levels[1] - levels[0])) + (k_levels - 1) / 2),
                         0, k_levels - 1).astype(np.int64)
        dec = np.stack([gray[idx_re], gray[idx_im]], axis=-1)
        n_err += int(np.sum(_bits_of(dec, half_bits) != bits))
        n_bits += bits.size
    p = n_err / n_bits
    return SimulationResult(ber=p, n_bits=n_bits, n_errors=n_err,
                            low_confidence=n_err < min_errors,
                            snr_db=float("inf") if target_snr_db is None else target_snr_db,
                            isi_tail_energy=tail)
