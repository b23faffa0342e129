"""Terminal orientation models.

The fluctuation of each angle about its mean is a harmonic random process,
A sin(2 pi f t + phi) + v(t), with phi uniform on (-pi, pi] and v white
(Gaussian or Laplace). Measurements add white Gaussian sensor noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError

NOISE_FAMILIES = ("gaussian", "laplace")

# measurement-noise variances, dB-degree
MEASUREMENT_NOISE_DB = {"theta": -29.71, "omega": 0.11}

# fitted parameters per activity and angle: (A deg, f Hz, sigma_v deg)
FITTED_PARAMS = {
    ("sitting", "theta"): (1.88, 0.67, 5.91),
    ("sitting", "omega"): (1.31, 1.46, 3.22),
    ("walking", "theta"): (3.22, 1.86, 7.59),
    ("walking", "omega"): (3.15, 1.71, 9.48),
}
MEAN_THETA_DEG = {"sitting": 41.13, "walking": 27.75}
ACTIVITY_FAMILY = {"sitting": "laplace", "walking": "gaussian"}


@dataclass(frozen=True)
class OrientationProcessParams:
    amplitude: float
    frequency: float
    sigma_v: float
    mean: float = 0.0
    noise_family: str = "gaussian"
    sigma_n2: float = 0.0
    activity: str = "walking"
    angle: str = "theta"

    def __post_init__(self):
        if self.amplitude < 0:
            raise DomainError("amplitude must be >= 0")
        if self.frequency <= 0:
            raise DomainError("frequency must be > 0")
        if self.sigma_v < 0 or self.sigma_n2 < 0:
            raise DomainError("noise levels must be >= 0")
        if self.noise_family not in NOISE_FAMILIES:
            raise DomainError(f"unknown noise family {self.noise_family!r}")

    @property
    def process_variance(self) -> float:
        """sigma_v^2 + A^2/2, the variance of the harmonic process."""
        return self.sigma_v ** 2 + self.amplitude ** 2 / 2

    @classmethod
    def from_table(cls, activity: str, angle: str = "theta",
                   direction_deg: float = 0.0) -> "OrientationProcessParams":
        if (activity, angle) not in FITTED_PARAMS:
            raise DomainError(f"no parameters for {activity}/{angle}")
        a, f, s = FITTED_PARAMS[(activity, angle)]
        mean = MEAN_THETA_DEG[activity] if angle == "theta" else direction_deg
        return cls(amplitude=a, frequency=f, sigma_v=s, mean=mean,
                   noise_family=ACTIVITY_FAMILY[activity],
                   sigma_n2=db_to_linear(MEASUREMENT_NOISE_DB[angle]),
                   activity=activity, angle=angle)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class SampledSeries:
    times: np.ndarray
    values: np.ndarray
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise DomainError("times and values must be 1-D and equally long")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", "value_deg"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "SampledSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


def white_noise(family: str, std: float, size, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean i.i.d. noise with the given standard deviation."""
    if std == 0:
        return np.zeros(size)
    if family == "gaussian":
        return rng.normal(0.0, std, size)
    if family == "laplace":
        return rng.laplace(0.0, std / math.sqrt(2.0), size)
    raise DomainError(f"unknown noise family {family!r}")


def _uniform_phase(rng, size=None):
    # pi - U[0, 2pi) lies in (-pi, pi]
    return math.pi - rng.uniform(0.0, 2 * math.pi, size)


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise DomainError("times must be a non-empty 1-D array")
    if np.any(np.diff(t) <= 0):
        raise DomainError("times must be strictly increasing")
    return t


def sample_process(params: OrientationProcessParams, times, rng_seed) -> SampledSeries:
    """Zero-mean harmonic process sampled at ``times``."""
    t = _check_times(times)
    rng = np.random.default_rng(rng_seed)
    phi = _uniform_phase(rng)
    harmonic = params.amplitude * np.sin(2 * np.pi * params.frequency * t + phi)
    v = white_noise(params.noise_family, params.sigma_v, len(t), rng)
    return SampledSeries(t, harmonic + v, {"harmonic": harmonic, "process_noise": v,
                                           "phase": float(phi)})


def noisy_measurement(params: OrientationProcessParams, times, rng_seed) -> SampledSeries:
    """Mean + harmonic process + Gaussian measurement noise of variance sigma_n2."""
    base = sample_process(params, times, rng_seed)
    # independent stream for the sensor noise
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed).spawn(1)[0])
    n = rng.normal(0.0, math.sqrt(params.sigma_n2), len(base)) if params.sigma_n2 > 0 \
        else np.zeros(len(base))
    comps = dict(base.components, measurement_noise=n, truth=params.mean + base.values)
    return SampledSeries(base.times, params.mean + base.values + n, comps)


def theoretical_acf(params: OrientationProcessParams, tau, normalized: bool = False):
    """(A^2/2) cos(2 pi f tau) + sigma_v^2 delta(tau)."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("lag must be >= 0")
    r = params.amplitude ** 2 / 2 * np.cos(2 * np.pi * params.frequency * tau) \
        + params.sigma_v ** 2 * (tau == 0)
    if normalized:
        r0 = params.process_variance
        r = r / r0 if r0 > 0 else np.where(tau == 0, 1.0, 0.0)
    return float(r) if r.ndim == 0 else r


def first_acf_zero(params: OrientationProcessParams) -> float:
    """First zero crossing of the normalized ACF for tau > 0."""
    if params.amplitude == 0:
        return 0.0
    return 1.0 / (4.0 * params.frequency)


def random_sampling_times(duration: float, rng_seed, gaps_ms=(1, 18, 64),
                          weights=(0.5, 0.3, 0.2), start: float = 0.0) -> np.ndarray:
    """Sampling instants with integer-millisecond gaps drawn i.i.d. from
    ``gaps_ms`` with probabilities ``weights``."""
    if duration <= 0:
        raise DomainError("duration must be > 0")
    gaps = np.asarray(gaps_ms, dtype=np.int64)
    if np.any(gaps <= 0):
        raise DomainError("gaps must be positive integers")
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    rng = np.random.default_rng(rng_seed)
    mean_gap = float(np.dot(gaps, w))
    n_draw = int(duration * 1000 / mean_gap * 1.2) + 16
    total_ms = int(round(duration * 1000))
    out = []
    acc = 0
    while True:
        steps = np.cumsum(rng.choice(gaps, size=n_draw, p=w)) + acc
        out.append(steps[steps <= total_ms])
        if steps[-1] > total_ms:
            break
        acc = int(steps[-1])
    ms = np.concatenate([[0], *out])
    return start + ms / 1000.0


def periodic_sampling_times(duration: float, pattern_ms=(1, 18), start: float = 0.0) -> np.ndarray:
    """Periodic nonuniform sampling: the gap pattern repeats cyclically."""
    if duration <= 0:
        raise DomainError("duration must be > 0")
    pat = np.asarray(pattern_ms, dtype=np.int64)
    total_ms = int(round(duration * 1000))
    reps = total_ms // int(pat.sum()) + 2
    ms = np.concatenate([[0], np.cumsum(np.tile(pat, reps))])
    return start + ms[ms <= total_ms] / 1000.0


def even_sampling_times(duration: float, step: float, start: float = 0.0) -> np.ndarray:
    n = int(math.floor(duration / step + 1e-9)) + 1
    return start + step * np.arange(n)


def fitted_distribution(params: OrientationProcessParams):
    """Moment-matched frozen scipy distribution of the RV model of an angle."""
    sd = math.sqrt(params.process_variance)
    if params.noise_family == "laplace":
        return stats.laplace(loc=params.mean, scale=sd / math.sqrt(2.0))
    return stats.norm(loc=params.mean, scale=sd)


def sample_theta_rv(params: OrientationProcessParams, n: int, rng_seed) -> np.ndarray:
    """Draws of mean + A sin(U) + X, i.e. the process at random phase."""
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    u = _uniform_phase(rng, n)
    x = white_noise(params.noise_family, params.sigma_v, n, rng)
    return params.mean + params.amplitude * np.sin(u) + x


def sample_ue_direction(rng_seed, size=None):
    """Uniform draw(s) on (-pi, pi]."""
    rng = np.random.default_rng(rng_seed)
    return _uniform_phase(rng, size)
