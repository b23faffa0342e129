"""Experiment drivers: fixed configurations, Monte Carlo over random user
placement and terminal orientation, and report export."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from .channel import DEFAULT_RESOLUTION, ChannelModel, partition_surfaces
from .errors import InputError, LifiSimError, PlacementError
from .geometry import ACTIVITIES, Room, Scene, build_scene, link_angles
from .ofdm import OfdmLinkConfig, channel_grid, snr_target
from .orientation import OrientationProcessParams, sample_theta_rv, sample_ue_direction

log = logging.getLogger(__name__)

LED_CUTOFFS_MHZ = (20.0, 40.0)
PENALTY_GRID_DB = np.round(np.arange(0.0, 20.0 + 1e-9, 0.25), 2)
GAIN_GRID_DB = np.arange(-170.0, -89.0, 1.0)
MAX_PLACEMENT_TRIES = 10000


@dataclass(frozen=True)
class FixedConfiguration:
    name: str
    anchor: tuple
    direction_deg: float
    description: str
    reconstructed: bool


# C1 is given by coordinates; the others are rebuilt from their descriptions
FIXED_CONFIGURATIONS = (
    FixedConfiguration("C1", (-0.33, 1.55), -90.0,
                       "near the y = +W/2 wall, facing the room centre", False),
    FixedConfiguration("C2", (0.33, 1.35), 90.0,
                       "near the y = +W/2 wall, facing it; walking LOS blocked", True),
    FixedConfiguration("C3", (-0.33, 0.35), -90.0, "terminal underneath the AP", True),
    FixedConfiguration("C4", (1.84, 1.55), -90.0, "room corner, facing away from the wall", True),
    FixedConfiguration("C5", (2.236, 1.019), 45.0,
                       "terminal 0.25 m from two walls, user facing the corner; LOS blocked",
                       True),
)


def fixed_configurations(room: Optional[Room] = None) -> dict:
    """{name: {activity: Scene}} for C1..C5."""
    out = {}
    for c in FIXED_CONFIGURATIONS:
        out[c.name] = {a: build_scene(a, c.anchor, math.radians(c.direction_deg), room=room)
                       for a in ACTIVITIES}
    return out


# -- experiment description ----------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "fixed"                 # 'fixed' or 'montecarlo'
    activities: tuple = ACTIVITIES
    led_cutoffs_mhz: tuple = LED_CUTOFFS_MHZ
    n_samples: int = 1000
    seed: int = 0
    resolution: float = DEFAULT_RESOLUTION
    configurations: tuple = tuple(c.name for c in FIXED_CONFIGURATIONS)
    rho_override: Optional[float] = None
    workers: int = 1
    ofdm: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in ("fixed", "montecarlo"):
            raise InputError(f"unknown scenario {self.scenario!r}")
        if self.n_samples < 1:
            raise InputError("sample count must be >= 1")
        for a in self.activities:
            if a not in ACTIVITIES:
                raise InputError(f"unknown activity {a!r}")
        known = {c.name for c in FIXED_CONFIGURATIONS}
        for name in self.configurations:
            if name not in known:
                raise InputError(f"unknown configuration {name!r}")
        if self.resolution < 1:
            raise InputError("resolution must be >= 1")
        if self.workers < 1:
            raise InputError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        for key in ("activities", "led_cutoffs_mhz", "configurations"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("activities", "led_cutoffs_mhz", "configurations"):
            d[key] = list(d[key])
        return d

    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("workers")  # does not affect results
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def link_config(self, led_cutoff_mhz: float) -> OfdmLinkConfig:
        return OfdmLinkConfig(**dict(self.ofdm, led_cutoff=led_cutoff_mhz * 1e6))


@dataclass
class ExperimentReport:
    kind: str
    config: ExperimentConfig
    records: list
    aggregates: dict = field(default_factory=dict)
    cdfs: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


# -- per-scene evaluation --------------------------------------------------------

def _cutoff_key(mhz: float) -> str:
    return f"{mhz:g}"


def evaluate_scene(scene: Scene, config: ExperimentConfig) -> dict:
    """DC gains, LOS ratio and SNR targets of one scene for every LED cutoff."""
    elements = partition_surfaces(scene, config.resolution)
    if config.rho_override is not None:
        elements = elements.with_rho(config.rho_override)
    model = ChannelModel(scene, elements=elements)
    base = config.link_config(config.led_cutoffs_mhz[0])
    resp = model.response(channel_grid(base))
    h_los, h_diff = resp.dc("los"), resp.dc("diff")
    phi, psi, d = link_angles(scene.ap.position, scene.ap.normal,
                              scene.ue.position, scene.ue.normal)
    los = h_los > 0.0
    rec = {"psi_deg": math.degrees(psi), "distance_m": d, "los_exists": bool(los),
           "h_los_dc": h_los, "h_diff_dc": h_diff, "h_cir_dc": h_los + h_diff,
           "los_ratio": h_los / (h_los + h_diff) if h_los + h_diff > 0 else float("nan"),
           "n_elements": model.n_elements}
    for mhz in config.led_cutoffs_mhz:
        cfg = config.link_config(mhz)
        k = _cutoff_key(mhz)
        try:
            rec[f"snr_t_db_{k}"] = snr_target(cfg, resp)
        except LifiSimError:
            rec[f"snr_t_db_{k}"] = float("nan")
        if los:
            rec[f"snr_t_los_db_{k}"] = snr_target(cfg, resp.los_only())
            rec[f"penalty_db_{k}"] = rec[f"snr_t_db_{k}"] - rec[f"snr_t_los_db_{k}"]
        else:
            rec[f"snr_t_los_db_{k}"] = float("nan")
            rec[f"penalty_db_{k}"] = float("nan")  # undefined, shown as '-'
    return rec


def run_fixed(config: ExperimentConfig) -> ExperimentReport:
    """LOS ratio, SNR targets and penalties for the selected fixed configurations."""
    records = []
    lookup = {c.name: c for c in FIXED_CONFIGURATIONS}
    for name in config.configurations:
        c = lookup[name]
        for activity in config.activities:
            scene = build_scene(activity, c.anchor, math.radians(c.direction_deg))
            rec = {"configuration": name, "activity": activity,
                   "reconstructed": c.reconstructed}
            rec.update(evaluate_scene(scene, config))
            records.append(rec)
    return ExperimentReport("fixed", config, records)


# -- Monte Carlo -------------------------------------------------------------------

_ACTIVITY_CODE = {a: i for i, a in enumerate(ACTIVITIES)}


def random_scene(activity: str, rng: np.random.Generator, room: Optional[Room] = None):
    """Uniform anchor and direction with the body fully inside the room
    (resampled otherwise) and a polar angle from the activity's RV model,
    resampled until it lies in [0, 90] degrees."""
    room = room or Room()
    params = OrientationProcessParams.from_table(activity, "theta")
    for _ in range(MAX_PLACEMENT_TRIES):
        x = rng.uniform(-room.length / 2, room.length / 2)
        y = rng.uniform(-room.width / 2, room.width / 2)
        omega = float(sample_ue_direction(rng))
        try:
            scene = build_scene(activity, (x, y), omega, room=room, polar=0.0)
        except PlacementError:
            continue
        while True:
            theta = float(sample_theta_rv(params, 1, rng)[0])
            if 0.0 <= theta <= 90.0:
                break
        ue = replace(scene.ue, polar=math.radians(theta))
        return replace(scene, ue=ue)
    raise PlacementError("could not place a user inside the room")


def _mc_sample(args):
    activity, index, config = args
    rng = np.random.default_rng([config.seed, _ACTIVITY_CODE[activity], index])
    rec = {"activity": activity, "sample": index}
    try:
        scene = random_scene(activity, rng)
        rec.update({"anchor_x": scene.body.anchor[0], "anchor_y": scene.body.anchor[1],
                    "direction_deg": math.degrees(scene.body.direction),
                    "polar_deg": math.degrees(scene.ue.polar),
                    "ue_x": scene.ue.position[0], "ue_y": scene.ue.position[1]})
        rec.update(evaluate_scene(scene, config))
        return rec, None
    except LifiSimError as exc:
        return None, {"activity": activity, "sample": index, "error": repr(exc)}


def ecdf(values, grid) -> np.ndarray:
    """P(X <= g) on ``grid``; nan values are dropped."""
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if len(v) == 0:
        return np.full(len(grid), float("nan"))
    v.sort()
    return np.searchsorted(v, np.asarray(grid, dtype=float), side="right") / len(v)


def _gain_db(h):
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(h ** 2)


def aggregate_monte_carlo(records: list, config: ExperimentConfig):
    aggregates, cdfs = {}, {}
    for activity in config.activities:
        rs = [r for r in records if r["activity"] == activity]
        if not rs:
            continue
        los = np.array([r["los_exists"] for r in rs])
        agg = {"n_samples": len(rs), "p_los": float(los.mean())}
        full_db = _gain_db([r["h_cir_dc"] for r in rs])
        los_db = _gain_db([r["h_los_dc"] for r in rs])
        cdfs[f"gain_{activity}"] = {"gain_db": GAIN_GRID_DB,
                                    "cdf_full": ecdf(full_db, GAIN_GRID_DB),
                                    "cdf_los_only": ecdf(los_db, GAIN_GRID_DB)}
        agg["median_gain_full_db"] = float(np.median(full_db))
        agg["median_gain_los_only_db"] = float(np.median(los_db))
        for mhz in config.led_cutoffs_mhz:
            k = _cutoff_key(mhz)
            pen = np.array([r[f"penalty_db_{k}"] for r in rs if r["los_exists"]], dtype=float)
            pen = pen[~np.isnan(pen)]
            cdfs[f"penalty_{activity}_{k}mhz"] = {"penalty_db": PENALTY_GRID_DB,
                                                  "cdf": ecdf(pen, PENALTY_GRID_DB)}
            agg[f"p_penalty_below_3db_{k}mhz"] = float(np.mean(pen < 3.0)) if len(pen) else \
                float("nan")
            agg[f"median_penalty_db_{k}mhz"] = float(np.median(pen)) if len(pen) else \
                float("nan")
        aggregates[activity] = agg
    return aggregates, cdfs


def run_monte_carlo(config: ExperimentConfig, progress=None) -> ExperimentReport:
    """Random placement and orientation; one derived seed per (activity, sample)."""
    jobs = [(a, i, config) for a in config.activities for i in range(config.n_samples)]
    results = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            for k, res in enumerate(ex.map(_mc_sample, jobs, chunksize=8)):
                results.append(res)
                if progress:
                    progress(k + 1, len(jobs))
    else:
        for k, job in enumerate(jobs):
            results.append(_mc_sample(job))
            if progress:
                progress(k + 1, len(jobs))
    records = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    for f in failures:
        log.warning("sample %s/%s failed: %s", f["activity"], f["sample"], f["error"])
    aggregates, cdfs = aggregate_monte_carlo(records, config)
    for a in aggregates:
        aggregates[a]["n_failed"] = sum(1 for f in failures if f["activity"] == a)
    return ExperimentReport("montecarlo", config, records, aggregates, cdfs, failures)


# -- export ------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "-"
        return repr(v)
    return str(v)


def _record_fields(report: ExperimentReport) -> list:
    if report.records:
        keys = []
        for r in report.records:
            for k in r:
                if k not in keys:
                    keys.append(k)
        return keys
    base = ["configuration", "activity"] if report.kind == "fixed" else ["activity", "sample"]
    base += ["psi_deg", "los_exists", "h_los_dc", "h_diff_dc", "h_cir_dc", "los_ratio"]
    for mhz in report.config.led_cutoffs_mhz:
        k = _cutoff_key(mhz)
        base += [f"snr_t_db_{k}", f"snr_t_los_db_{k}", f"penalty_db_{k}"]
    return base


def _json_clean(x):
    if isinstance(x, dict):
        return {k: _json_clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return None if math.isnan(float(x)) else float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def export_report(report: ExperimentReport, path) -> dict:
    """Write records.csv, one cdf_<name>.csv per CDF table and summary.json
    into directory ``path``. Returns {kind: file path}."""
    try:
        os.makedirs(path, exist_ok=True)
        written = {}
        fields = _record_fields(report)
        rec_path = os.path.join(path, "records.csv")
        with open(rec_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in report.records:
                w.writerow([_fmt(r.get(k, float("nan"))) for k in fields])
        written["records"] = rec_path
        for name in sorted(report.cdfs):
            table = report.cdfs[name]
            cols = list(table)
            p = os.path.join(path, f"cdf_{name}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for row in zip(*(table[c] for c in cols)):
                    w.writerow([_fmt(float(v)) for v in row])
            written[f"cdf_{name}"] = p
        config = report.config.to_dict()
        config.pop("workers")  # execution detail; outputs must not depend on it
        summary = {"kind": report.kind, "version": __version__, "seed": report.config.seed,
                   "config_hash": report.config.config_hash(),
                   "config": config, "n_records": len(report.records),
                   "n_failures": len(report.failures), "aggregates": report.aggregates}
        sp = os.path.join(path, "summary.json")
        with open(sp, "w") as fh:
            json.dump(_json_clean(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written["summary"] = sp
        return written
    except OSError as exc:
        raise OSError(f"cannot write report to {path!r}: {exc}") from exc
