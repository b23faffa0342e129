"""Spectral estimation for unevenly sampled series.

Conventions. For N samples x_k at times t_k the complex dirty spectrum is
D(f) = (1/N) sum_k x_k exp(-2 pi i f t_k) and the sampling window is
W(f) = (1/N) sum_k exp(-2 pi i f t_k). On even sampling the power spectrum
(PS) is |DFT|^2 / N^2 = |D|^2 and the power spectral density (PSD) is
|DFT|^2 / N = N |D|^2, so white noise of variance s^2 has a flat PSD at s^2
and a sinusoid of amplitude A has 2 PS(f0) = A^2 / 2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft

from . import _kernels
from .errors import DesignError, InputError
from .orientation import SampledSeries

NORMALIZATIONS = ("ps", "psd")
TIME_GRID = 1e-6        # resolution used to find the gcd of sampling gaps
MAX_FFT_LENGTH = 1 << 25
DIRECT_CHUNK = 1 << 22  # samples x frequencies per numpy block
CLEAN_DYNAMIC_RANGE = 1e-6  # lowest default threshold relative to the initial peak


# -- containers --------------------------------------------------------------

@dataclass
class Periodogram:
    freqs: np.ndarray
    values: np.ndarray
    normalization: str
    n: int
    variance: float = float("nan")
    spectrum: Optional[np.ndarray] = None

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.normalization not in NORMALIZATIONS:
            raise InputError(f"unknown normalization {self.normalization!r}")
        if self.freqs.shape != self.values.shape:
            raise InputError("grid and values differ in length")
        if len(self.freqs) > 1 and np.any(np.diff(self.freqs) <= 0):
            raise InputError("frequency grid must be strictly increasing")

    def as_normalization(self, normalization: str) -> "Periodogram":
        if normalization not in NORMALIZATIONS:
            raise InputError(f"unknown normalization {normalization!r}")
        if normalization == self.normalization:
            return self
        scale = self.n if normalization == "psd" else 1.0 / self.n
        return Periodogram(self.freqs, self.values * scale, normalization, self.n,
                           self.variance, self.spectrum)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frequency_hz", "value", "normalization"])
            for f, v in zip(self.freqs, self.values):
                w.writerow([repr(float(f)), repr(float(v)), self.normalization])

    @classmethod
    def from_csv(cls, path, n: int = 1) -> "Periodogram":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise InputError("empty periodogram file")
        return cls(np.array([float(r["frequency_hz"]) for r in rows]),
                   np.array([float(r["value"]) for r in rows]),
                   rows[0]["normalization"], n)


@dataclass(frozen=True)
class NyquistInfo:
    frequency: float
    kappa: float
    commensurate: bool


@dataclass(frozen=True)
class WienerFir:
    f0: float
    f1: float
    amplitude: float = 0.0
    frequency: float = 0.0
    sigma_v2: float = 0.0
    sigma_n2: float = 0.0
    tau: float = 0.0

    @property
    def taps(self):
        return (self.f0, self.f1)

    def response(self, freqs, tau: Optional[float] = None):
        """F(exp(2 pi i f tau)) = f0 + f1 exp(-2 pi i f tau)."""
        tau = self.tau if tau is None else tau
        return self.f0 + self.f1 * np.exp(-2j * np.pi * np.asarray(freqs, dtype=float) * tau)

    def apply(self, x) -> np.ndarray:
        """Filter a regularly sampled sequence (first output uses x[0] only)."""
        x = np.asarray(x, dtype=float)
        y = self.f0 * x
        y[1:] += self.f1 * x[:-1]
        return y


# -- sampling ----------------------------------------------------------------

def _as_arrays(series):
    if isinstance(series, SampledSeries):
        t, y = series.times, series.values
    else:
        t, y = series
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.ndim != 1 or t.shape != y.shape:
        raise InputError("times and values must be 1-D and equally long")
    if len(t) < 2:
        raise InputError("at least two samples are required")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise InputError("non-finite samples")
    if np.any(np.diff(t) <= 0):
        raise InputError("times must be strictly increasing (use dedupe first)")
    return t, y


def dedupe(times, values, rng_seed=0, resolution: float = TIME_GRID) -> SampledSeries:
    """Sort by time and keep one randomly chosen sample per repeated timestamp."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1 or len(t) == 0:
        raise InputError("times and values must be 1-D, non-empty and equally long")
    rng = np.random.default_rng(rng_seed)
    key = np.round(t / resolution).astype(np.int64)
    # random tie-break, then stable sort by time: the first of each run is a uniform pick
    order = rng.permutation(len(t))
    order = order[np.argsort(key[order], kind="stable")]
    k = key[order]
    keep = np.ones(len(k), dtype=bool)
    keep[1:] = k[1:] != k[:-1]
    sel = order[keep]
    return SampledSeries(t[sel], y[sel])


def nyquist_info(times) -> NyquistInfo:
    t = np.asarray(times, dtype=float)
    if len(t) < 2:
        raise InputError("at least two samples are required")
    gaps = np.diff(t)
    if np.any(gaps <= 0):
        raise InputError("times must be strictly increasing")
    ticks = gaps / TIME_GRID
    ints = np.round(ticks)
    if np.any(ints < 1) or np.max(np.abs(ticks - ints)) > 1e-3:
        return NyquistInfo(1.0 / (2.0 * gaps.min()), float(gaps.min()), False)
    g = int(np.gcd.reduce(ints.astype(np.int64)))
    kappa = g * TIME_GRID
    return NyquistInfo(1.0 / (2.0 * kappa), kappa, True)


def nyquist_random(times) -> float:
    """Generalized Nyquist frequency 1/(2 kappa), kappa = gcd of the gaps."""
    return nyquist_info(times).frequency


def _grid_layout(t, ofac: float):
    """Regular grid f_j = j df, j = 0..K, with f_K the generalized Nyquist."""
    info = nyquist_info(t)
    span = t[-1] - t[0]
    if info.commensurate:
        L = max(2, int(round(ofac * span / info.kappa)))
        L += L % 2
        df = 1.0 / (L * info.kappa)
        K = L // 2
    else:
        df = 1.0 / (ofac * span)
        K = max(1, int(math.floor(info.frequency / df + 1e-9)))
    return df, K, info


def default_grid(times, ofac: float = 5.0) -> np.ndarray:
    """Oversampled grid df = 1/(ofac T) up to the generalized Nyquist frequency."""
    t = np.asarray(times, dtype=float)
    df, K, _ = _grid_layout(t, ofac)
    return df * np.arange(1, K + 1)


# -- trigonometric sums ------------------------------------------------------

def _regular(freqs):
    if len(freqs) < 2:
        return True, (freqs[0] if len(freqs) else 0.0), 1.0
    d = np.diff(freqs)
    df = (freqs[-1] - freqs[0]) / (len(freqs) - 1)
    return bool(np.allclose(d, df, rtol=1e-9, atol=0.0)), freqs[0], df


def _rfft_at(x, idx):
    """Full-length DFT of real ``x`` at indices ``idx`` via the half spectrum."""
    L = len(x)
    X = scipy.fft.rfft(x)
    lo = idx <= L // 2
    out = np.empty(len(idx), dtype=complex)
    out[lo] = X[idx[lo]]
    out[~lo] = np.conj(X[L - idx[~lo]])
    return out


def _sums(t, y, freqs, want_double=True):
    """Complex sums S(f) = sum y exp(-2 pi i f t) and, if asked, U(2f) =
    sum exp(-4 pi i f t), with t measured from t[0]."""
    t = t - t[0]
    freqs = np.asarray(freqs, dtype=float)
    nf = len(freqs)
    regular, f0, df = _regular(freqs)
    if regular and nf > 1:
        info = nyquist_info(t)
        if info.commensurate:
            L = 1.0 / (df * info.kappa)
            j0 = f0 / df
            if (abs(L - round(L)) < 1e-6 * L and abs(j0 - round(j0)) < 1e-6
                    and round(L) <= MAX_FFT_LENGTH):
                L, j0 = int(round(L)), int(round(j0))
                n = np.round(t / info.kappa).astype(np.int64) % L
                idx = (j0 + np.arange(nf)) % L
                S = _rfft_at(np.bincount(n, weights=y, minlength=L), idx)
                U = None
                if want_double:
                    U = _rfft_at(np.bincount(n, minlength=L).astype(float), (2 * idx) % L)
                return S, U
        yc, ys, c2, s2 = _kernels.trig_sums(np.ascontiguousarray(t), np.ascontiguousarray(y),
                                            float(f0), float(df), nf)
        return yc - 1j * ys, (c2 - 1j * s2) if want_double else None
    S = np.empty(nf, dtype=complex)
    U = np.empty(nf, dtype=complex) if want_double else None
    step = max(1, DIRECT_CHUNK // max(len(t), 1))
    for a in range(0, nf, step):
        ph = np.exp(-2j * np.pi * np.outer(freqs[a:a + step], t))
        S[a:a + step] = ph @ y
        if want_double:
            U[a:a + step] = (ph * ph).sum(axis=1)
    return S, U


def _ls_from_sums(S, U, n):
    """Lomb-Scargle PSD from complex sums (Press-Rybicki form)."""
    yc, ys = S.real, -S.imag
    c2, s2 = U.real, -U.imag
    h = np.hypot(c2, s2)
    two_wt = np.arctan2(s2, c2)
    cw, sw = np.cos(0.5 * two_wt), np.sin(0.5 * two_wt)
    cc = 0.5 * n + 0.5 * h
    ss = 0.5 * n - 0.5 * h
    yc_t = yc * cw + ys * sw
    ys_t = ys * cw - yc * sw
    degenerate = ss < 1e-9 * n
    with np.errstate(divide="ignore", invalid="ignore"):
        full = 0.5 * (yc_t ** 2 / cc + ys_t ** 2 / ss)
    # single basis function (e.g. even-sampling Nyquist): all power in the cosine
    return np.where(degenerate, yc_t ** 2 / cc, full)


def lomb_scargle(series, freqs=None, normalization: str = "psd", ofac: float = 5.0,
                 keep_spectrum: bool = False) -> Periodogram:
    """Classic Lomb-Scargle periodogram of a mean-removed series.

    On even sampling it equals |DFT|^2/N (PSD) or |DFT|^2/N^2 (PS) at the
    Fourier frequencies, with the single-cosine case at Nyquist handled so
    that Parseval holds exactly.
    """
    if normalization not in NORMALIZATIONS:
        raise InputError(f"unknown normalization {normalization!r}")
    t, y = _as_arrays(series)
    n = len(t)
    y = y - y.mean()
    if freqs is None:
        freqs = default_grid(t, ofac)
    freqs = np.asarray(freqs, dtype=float)
    if freqs.ndim != 1 or len(freqs) == 0 or freqs[0] <= 0:
        raise InputError("Lomb-Scargle grid must be non-empty and start above 0")
    S, U = _sums(t, y, freqs)
    psd = np.maximum(_ls_from_sums(S, U, n), 0.0)
    vals = psd if normalization == "psd" else psd / n
    return Periodogram(freqs, vals, normalization, n, float(np.var(y)),
                       (S / n * np.exp(-2j * np.pi * freqs * t[0])) if keep_spectrum else None)


def window_spectrum(times, freqs) -> Periodogram:
    """PS |W(f)|^2 of the sampling window; equals 1 at f = 0."""
    t = np.asarray(times, dtype=float)
    if len(t) < 2:
        raise InputError("at least two samples are required")
    freqs = np.asarray(freqs, dtype=float)
    S, _ = _sums(t, np.ones(len(t)), freqs, want_double=False)
    W = S / len(t) * np.exp(-2j * np.pi * freqs * t[0])
    return Periodogram(freqs, np.abs(W) ** 2, "ps", len(t), 1.0, W)


def dirty_spectra(series, ofac: float = 5.0):
    """Dirty periodogram on j df (j = 1..K, with complex D) and window on
    j df (j = 0..2K, with complex W), the inputs of :func:`clean`."""
    t, y = _as_arrays(series)
    y = y - y.mean()
    df, K, _ = _grid_layout(t, ofac)
    fd = df * np.arange(1, K + 1)
    dirty = lomb_scargle((t, y), fd, "ps", keep_spectrum=True)
    window = window_spectrum(t, df * np.arange(0, 2 * K + 1))
    return dirty, window


# -- detection ---------------------------------------------------------------

def false_alarm_level(p: float, n_independent: float, variance: float = 1.0,
                      n: Optional[int] = None, normalization: str = "psd") -> float:
    """Level z with 1 - (1 - exp(-z))^M = p, scaled to the normalization.

    In PSD units the level is z * variance; in PS units z * variance / n.
    """
    if not 0.0 < p < 1.0:
        raise InputError("false-alarm probability must lie in (0, 1)")
    if n_independent < 1:
        raise InputError("need at least one independent frequency")
    z = -math.log(-math.expm1(math.log1p(-p) / n_independent))
    z = max(z, 0.0)
    if normalization == "psd":
        return z * variance
    if normalization == "ps":
        if not n:
            raise InputError("PS normalization needs the sample count n")
        return z * variance / n
    raise InputError(f"unknown normalization {normalization!r}")


def n_independent_frequencies(times, fmax: Optional[float] = None) -> float:
    """Number of independent frequencies, taken as fmax * T (at least 1)."""
    t = np.asarray(times, dtype=float)
    fmax = nyquist_random(t) if fmax is None else fmax
    return max(1.0, fmax * (t[-1] - t[0]))


# -- CLEAN -------------------------------------------------------------------

@dataclass
class CleanResult:
    periodogram: Periodogram
    components: np.ndarray  # complex, on the dirty grid
    restored: np.ndarray    # components convolved with the clean beam
    residual: np.ndarray
    beam: np.ndarray        # one-sided beam, beam[0] = 1
    iterations: int
    converged: bool
    threshold: float        # PSD units
    noise_level: float      # PSD units

    def residual_periodogram(self) -> Periodogram:
        p = self.periodogram
        vals = np.abs(self.residual) ** 2 * (p.n if p.normalization == "psd" else 1.0)
        return Periodogram(p.freqs, vals, p.normalization, p.n, p.variance, self.residual.copy())


def _clean_beam(W):
    """Main lobe of |W| up to its first local minimum, normalized to 1."""
    a = np.abs(W)
    a = a / a[0]
    k = 1
    while k < len(a) - 1 and a[k + 1] < a[k]:
        k += 1
    return a[:k].copy() if k > 1 else a[:1].copy()


def _noise_psd(R, n):
    # median of an exponential variate is ln 2 times its mean
    return float(np.median(np.abs(R) ** 2) * n / math.log(2.0))


def clean(dirty: Periodogram, window: Periodogram, gain: float = 0.25,
          max_iter: int = 500, threshold: Optional[float] = None,
          p_false_alarm: float = 1e-3, n_independent: Optional[float] = None) -> CleanResult:
    """CLEAN deconvolution of a complex dirty spectrum.

    ``dirty`` must carry D on j df (j = 1..K) and ``window`` W on j df
    (j = 0..2K). Each step removes ``gain`` times the window response of the
    strongest residual peak, including its negative-frequency image.
    ``threshold`` is in PSD units; by default it is the false-alarm level
    applied to a robust running estimate of the residual noise floor, but
    never below 60 dB under the strongest initial peak.
    """
    if not 0.0 < gain <= 1.0:
        raise InputError("gain must lie in (0, 1]")
    if max_iter < 1:
        raise InputError("max_iter must be >= 1")
    if dirty.spectrum is None or window.spectrum is None:
        raise InputError("clean needs complex dirty and window spectra")
    K = len(dirty.freqs)
    regular, f1, df = _regular(dirty.freqs)
    if not regular or abs(f1 - df) > 1e-9 * df or len(window.freqs) != 2 * K + 1 \
            or abs(window.freqs[0]) > 1e-12 or abs(window.freqs[-1] - 2 * K * df) > 1e-6 * df:
        raise InputError("dirty grid must be j*df (j=1..K) and window grid j*df (j=0..2K)")
    n = dirty.n
    W = np.asarray(window.spectrum, dtype=complex)
    W = W / W[0]
    W_ext = np.concatenate([np.conj(W[K:0:-1]), W])  # index m + K for m in [-K, 2K]
    R = np.concatenate([[0.0 + 0j], np.asarray(dirty.spectrum, dtype=complex)])
    C = np.zeros(K + 1, dtype=complex)
    beam = _clean_beam(W)
    # main lobe reaches its first null about 1/T out, so K / len(beam) ~ fmax T
    M = n_independent if n_independent is not None else max(1.0, K / len(beam))
    z = false_alarm_level(p_false_alarm, M)
    peak0 = float(np.max(np.abs(R[1:])))
    level_min = CLEAN_DYNAMIC_RANGE * n * peak0 ** 2
    it, converged = 0, False
    for it in range(1, max_iter + 1):
        # the floor shrinks as sidelobes of removed lines leave the residual
        noise = _noise_psd(R[1:], n)
        p = int(np.argmax(np.abs(R[1:]))) + 1
        rp = R[p]
        level = threshold if threshold is not None else max(z * noise, level_min)
        if n * abs(rp) ** 2 <= level or abs(rp) <= 1e-12 * peak0:
            converged = True
            it -= 1
            break
        w2 = W[2 * p]
        den = 1.0 - abs(w2) ** 2
        c = (rp - np.conj(rp) * w2) / den if den > 1e-6 else 0.5 * rp
        R -= gain * (c * W_ext[K - p:2 * K - p + 1] + np.conj(c) * W_ext[K + p:2 * K + p + 1])
        # the data are mean-centred, so keep the DC value at zero
        R -= R[0] * W[:K + 1]
        C[p] += gain * c
    else:
        p = int(np.argmax(np.abs(R[1:]))) + 1
        noise = _noise_psd(R[1:], n)
        level = threshold if threshold is not None else max(z * noise, level_min)
        converged = n * abs(R[p]) ** 2 <= level
    full_beam = np.concatenate([beam[:0:-1], beam])
    restored = np.convolve(C, full_beam, mode="same")[1:]
    comps = C[1:]
    residual = R[1:]
    out = restored + residual
    vals = np.abs(out) ** 2 * (n if dirty.normalization == "psd" else 1.0)
    per = Periodogram(dirty.freqs, vals, dirty.normalization, n, dirty.variance, out)
    return CleanResult(per, comps, restored, residual, beam, it, bool(converged),
                       float(threshold if threshold is not None else max(z * noise, level_min)),
                       float(noise))


# -- Wiener filter -----------------------------------------------------------

def wiener_design(amplitude: float, frequency: float, sigma_v2: float, sigma_n2: float,
                  tau: float) -> WienerFir:
    """Two-tap Wiener-Hopf solution for a sinusoid in white noise.

    [[a, b], [b, a]] [f0, f1]^T = [A^2/2 + s_v^2, b] with
    a = A^2/2 + s_v^2 + s_n^2 and b = (A^2/2) cos(2 pi f tau).
    """
    if min(sigma_v2, sigma_n2) < 0 or amplitude < 0:
        raise DesignError("variances and amplitude must be >= 0")
    p = amplitude ** 2 / 2
    a = p + sigma_v2 + sigma_n2
    b = p * math.cos(2 * math.pi * frequency * tau)
    det = a * a - b * b
    if a <= 0 or abs(det) <= 1e-14 * a * a:
        raise DesignError("singular Wiener-Hopf system")
    if sigma_n2 == 0:
        f0, f1 = 1.0, 0.0
    else:
        f0, f1 = np.linalg.solve(np.array([[a, b], [b, a]]), np.array([p + sigma_v2, b]))
    return WienerFir(float(f0), float(f1), amplitude, frequency, sigma_v2, sigma_n2, tau)


# -- ACF ---------------------------------------------------------------------

@dataclass
class Acf:
    lags: np.ndarray
    values: np.ndarray

    def normalized(self) -> "Acf":
        r0 = self.values[0]
        return Acf(self.lags, self.values / r0 if r0 != 0 else self.values * 0.0)

    def first_zero(self) -> float:
        """Linearly interpolated first sign change for lag > 0 (nan if none)."""
        v = self.values
        idx = np.nonzero((v[1:] <= 0) & (v[:-1] > 0))[0]
        if len(idx) == 0:
            return float("nan")
        k = idx[0]
        t0, t1, a, b = self.lags[k], self.lags[k + 1], v[k], v[k + 1]
        return float(t0 + (t1 - t0) * a / (a - b))


def acf_from_spectrum(psd: Periodogram, normalized: bool = False,
                      duration: Optional[float] = None) -> Acf:
    """Biased ACF by inverse transform of a PSD on a regular grid.

    The grid is j df for j = 0..K or j = 1..K (a missing DC bin is taken as
    0). The PSD is treated as two-sided and flat-normalized, so a flat level
    s^2 gives R(0) = s^2. Lags step 1/(2 f_K); the result is tapered by
    (1 - lag/duration), duration defaulting to the longest returned lag.
    """
    p = psd.as_normalization("psd")
    f, v = p.freqs, p.values
    regular, f_first, df = _regular(f)
    if not regular or len(f) < 2:
        raise InputError("acf_from_spectrum needs a regular grid")
    if abs(f_first) < 1e-12 * df:
        s = v.copy()
    elif abs(f_first - df) < 1e-9 * df:
        s = np.concatenate([[0.0], v])
    else:
        raise InputError("grid must be j*df starting at 0 or df")
    K = len(s) - 1
    r = np.fft.irfft(s, n=2 * K)[:K + 1]
    lags = np.arange(K + 1) / (2.0 * K * df)
    T = duration if duration is not None else lags[-1]
    r = r * np.clip(1.0 - lags / T, 0.0, None)
    acf = Acf(lags, r)
    return acf.normalized() if normalized else acf


def sigma_v2_from_acf(amplitude: float, r_eps: float, r0: float = 1.0) -> float:
    """sigma_v^2 ~ R(0) A^2 (1 - R(eps)/R(0)) / (2 R(eps))."""
    if r_eps <= 0:
        raise InputError("R(eps) must be positive for the small-lag estimator")
    return r0 * amplitude ** 2 * (1.0 - r_eps / r0) / (2.0 * r_eps)


# -- full pipeline -----------------------------------------------------------

@dataclass
class ParamEstimate:
    amplitude: float
    frequency: float
    sigma_v2: float
    detected: bool
    cleaned: Optional[Periodogram]
    acf: Optional[Acf]
    wiener: Optional[WienerFir]
    diagnostics: dict = field(default_factory=dict)

    @property
    def sigma_v(self) -> float:
        return math.sqrt(self.sigma_v2) if self.sigma_v2 >= 0 else float("nan")

    def to_json(self, path=None) -> str:
        doc = {"detected": self.detected, "amplitude_deg": self.amplitude,
               "frequency_hz": self.frequency, "sigma_v2_deg2": self.sigma_v2,
               "wiener_taps": list(self.wiener.taps) if self.wiener else None,
               "diagnostics": self.diagnostics}
        text = json.dumps(doc, indent=2, sort_keys=True, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def estimate_params(series, sigma_n2: float = 0.0, ofac: float = 5.0,
                    p_false_alarm: float = 1e-3, gain: float = 0.25, max_iter: int = 500,
                    epsilon: Optional[float] = None, wiener: bool = True,
                    rng_seed=0) -> ParamEstimate:
    """Recover (A, f, sigma_v^2) of a harmonic process in white noise.

    Lomb-Scargle gating at the false-alarm level, CLEAN, peak pick with
    2 PS = A^2/2, residual noise floor, two-tap Wiener filter on the regular
    grid, ACF, then the small-lag sigma_v estimator.
    """
    if isinstance(series, SampledSeries):
        t, y = series.times, series.values
    else:
        t, y = (np.asarray(a, dtype=float) for a in series)
    s = dedupe(t, y, rng_seed)
    t, y = _as_arrays(s)
    y = y - y.mean()
    n = len(t)
    span = t[-1] - t[0]
    if span <= 0:
        raise InputError("series has zero duration")
    df, K, info = _grid_layout(t, ofac)
    dirty, window = dirty_spectra((t, y), ofac)
    M = max(1.0, K * df * span)
    z = false_alarm_level(p_false_alarm, M)
    var = float(np.var(y))
    ls_norm = dirty.values * n / var if var > 0 else np.zeros(K)
    diag = {"n_samples": n, "duration_s": span, "nyquist_hz": info.frequency,
            "kappa_s": info.kappa, "commensurate": info.commensurate, "grid_step_hz": df,
            "grid_points": K, "false_alarm_p": p_false_alarm, "n_independent": M,
            "false_alarm_z": z, "max_normalized_power": float(ls_norm.max()),
            "ls_peak_hz": float(dirty.freqs[int(np.argmax(ls_norm))])}
    if ls_norm.max() <= z:
        diag["reason"] = "no peak above the false-alarm level"
        return ParamEstimate(0.0, float("nan"), var, False, None, None, None, diag)

    cr = clean(dirty, window, gain=gain, max_iter=max_iter, p_false_alarm=p_false_alarm,
               n_independent=M)
    out = cr.periodogram.spectrum
    j = int(np.argmax(np.abs(out)))
    f_hat = float(dirty.freqs[j])
    a_hat = 2.0 * float(np.abs(out[j]))  # 2 PS = A^2 / 2
    guard = max(3, int(math.ceil(3 * ofac)))
    mask = np.ones(K, dtype=bool)
    mask[max(0, j - guard):j + guard + 1] = False
    noise_total = float(np.mean(np.abs(cr.residual[mask]) ** 2) * n)

    # regular-grid PSD: restored line of power A^2/2 plus the flat floor
    kappa_grid = 1.0 / (2.0 * K * df)
    shape = np.abs(cr.restored) ** 2
    line = np.zeros(K + 1)
    line[1:] = shape / shape.sum() * K * a_hat ** 2 / 2
    floor = np.full(K + 1, noise_total)
    psd = line + floor
    taps = None
    if wiener and sigma_n2 > 0:
        taps = wiener_design(a_hat, f_hat, max(noise_total - sigma_n2, 0.0), sigma_n2, kappa_grid)
        g2 = np.abs(taps.response(df * np.arange(K + 1), kappa_grid)) ** 2
        psd = psd * g2
        line = line * g2
    per = Periodogram(df * np.arange(K + 1), psd, "psd", n, var)
    acf = acf_from_spectrum(per, duration=span)
    e = 1 if epsilon is None else max(1, int(round(epsilon / kappa_grid)))
    rho = acf.values[e] / acf.values[0]
    a_f2 = 2.0 * line.sum() / K  # A^2 after filtering, from 2 * line power
    sigma_v2 = a_f2 * (1.0 - rho) / (2.0 * rho) if rho > 0 else float("nan")
    diag.update({"clean_iterations": cr.iterations, "clean_converged": cr.converged,
                 "clean_threshold_psd": cr.threshold, "noise_floor_psd": noise_total,
                 "peak_hz": f_hat, "peak_amplitude": a_hat, "epsilon_s": e * kappa_grid,
                 "rho_eps": float(rho),
                 "wiener_taps": list(taps.taps) if taps else None,
                 "cleaned_peaks_above_threshold":
                     int(len(count_peaks(cr.periodogram, cr.threshold / n)))})
    return ParamEstimate(a_hat, f_hat, float(sigma_v2), True, cr.periodogram,
                         acf, taps, diag)


def count_peaks(per: Periodogram, level: float) -> np.ndarray:
    """Indices of local maxima of ``per.values`` strictly above ``level``."""
    v = per.values
    if len(v) < 3:
        return np.nonzero(v > level)[0]
    inner = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:]) & (v[1:-1] > level)
    idx = list(np.nonzero(inner)[0] + 1)
    if v[0] > level and v[0] > v[1]:
        idx.insert(0, 0)
    if v[-1] > level and v[-1] > v[-2]:
        idx.append(len(v) - 1)
    return np.array(idx, dtype=int)
