"""Command-line interface: ``lifisim <subcommand> [options]``.

A YAML config (``--config``) may hold the sections ``scene``, ``ofdm``,
``orientation`` and ``experiment``; command-line flags override it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace

import yaml

from . import __version__
from .channel import DEFAULT_RESOLUTION, ChannelModel, ChannelResponse
from .errors import LifiSimError
from .geometry import build_scene, scene_from_dict
from .harness import ExperimentConfig, export_report, run_fixed, run_monte_carlo
from .ofdm import (OfdmLinkConfig, channel_grid, link_report, power_scale_for_snr,
                   simulate_link, snr_target)
from .orientation import (OrientationProcessParams, SampledSeries, even_sampling_times,
                          noisy_measurement, periodic_sampling_times, random_sampling_times)
from .spectral import estimate_params

log = logging.getLogger("lifisim")


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise LifiSimError(f"{path}: top level must be a mapping")
    return doc


def _scene(args, cfg):
    if args.anchor is not None or "scene" not in cfg:
        anchor = args.anchor if args.anchor is not None else (-0.33, 1.55)
        direction = args.direction_deg if args.direction_deg is not None else -90.0
        polar = None if args.polar_deg is None else math.radians(args.polar_deg)
        return build_scene(args.activity, anchor, math.radians(direction), polar=polar,
                           with_body=not args.no_body)
    return scene_from_dict(cfg["scene"])


def _ofdm(args, cfg):
    d = dict(cfg.get("ofdm", {}))
    if getattr(args, "led_cutoff_mhz", None) is not None:
        d["led_cutoff"] = args.led_cutoff_mhz * 1e6
    if getattr(args, "target_ber", None) is not None:
        d["target_ber"] = args.target_ber
    return OfdmLinkConfig(**d)


def _channel(args, cfg, link, full=False):
    if getattr(args, "channel", None):
        return ChannelResponse.from_csv(args.channel)
    scene = _scene(args, cfg)
    res = args.resolution if args.resolution is not None else \
        cfg.get("channel", {}).get("resolution", DEFAULT_RESOLUTION)
    return ChannelModel(scene, resolution=res).response(channel_grid(link, full=full))


def cmd_cir(args, cfg):
    link = _ofdm(args, cfg)
    resp = _channel(args, cfg, link, full=args.full_grid)
    resp.to_csv(args.out)
    print(f"wrote {len(resp.freqs)} frequencies to {args.out}; "
          f"H_los(0)={resp.dc('los'):.6e} H_diff(0)={resp.dc('diff'):.6e}")


def cmd_link(args, cfg):
    link = _ofdm(args, cfg)
    resp = _channel(args, cfg, link)
    if args.los_only:
        resp = resp.los_only()
    snr_t = snr_target(link, resp)
    scale = power_scale_for_snr(link, resp, snr_t)
    rep = link_report(link, resp, scale, mode="los" if args.los_only else "full")
    if args.out:
        rep.to_csv(args.out)
    print(json.dumps({"mode": rep.mode, "led_cutoff_mhz": link.led_cutoff / 1e6,
                      "target_ber": link.target_ber, "snr_t_db": snr_t,
                      "average_ber": rep.p_b}, indent=2))


def cmd_simulate(args, cfg):
    link = _ofdm(args, cfg)
    resp = _channel(args, cfg, link, full=True)
    if args.los_only:
        resp = resp.los_only()
    bits_per_symbol = len(link.used_indices) * link.bits_per_symbol
    n_symbols = max(1, int(math.ceil(args.bits / bits_per_symbol)))
    rows = []
    for k, snr in enumerate(args.snr_db):
        sim = simulate_link(link, resp, snr, n_symbols, rng_seed=[args.seed, k],
                            cyclic=not args.linear)
        theory = link_report(link, resp, power_scale_for_snr(link, resp, snr)).p_b
        rows.append([snr, sim.ber, theory, sim.n_bits, sim.n_errors, sim.binomial_sigma,
                     int(sim.low_confidence)])
    header = ["snr_db", "ber_sim", "ber_theory", "n_bits", "n_errors", "sigma", "low_confidence"]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(r[0])), repr(r[1]), repr(float(r[2])), r[3], r[4],
                        repr(r[5]), r[6]])
    finally:
        if args.out:
            out.close()


def _orientation_params(args, cfg):
    params = OrientationProcessParams.from_table(args.activity, args.angle)
    over = dict(cfg.get("orientation", {}))
    for key in ("amplitude", "frequency", "sigma_v", "mean", "sigma_n2", "noise_family"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    return replace(params, **over) if over else params


def cmd_orient_gen(args, cfg):
    params = _orientation_params(args, cfg)
    if args.sampler == "random":
        t = random_sampling_times(args.duration, [args.seed, 1])
    elif args.sampler == "periodic":
        t = periodic_sampling_times(args.duration)
    else:
        t = even_sampling_times(args.duration, args.step)
    # theta and omega share the sampling instants but get independent draws
    s = noisy_measurement(params, t, [args.seed, 2, ("theta", "omega").index(args.angle)])
    s.to_csv(args.out)
    print(f"wrote {len(s)} samples to {args.out}")


def cmd_orient_estimate(args, cfg):
    s = SampledSeries.from_csv(args.input)
    sigma_n2 = args.sigma_n2
    if sigma_n2 is None:
        sigma_n2 = OrientationProcessParams.from_table("walking", args.angle).sigma_n2
    est = estimate_params(s, sigma_n2=sigma_n2, rng_seed=args.seed)
    text = est.to_json(args.out)
    if args.periodogram and est.cleaned is not None:
        est.cleaned.to_csv(args.periodogram)
    print(text)


def _experiment(args, cfg, scenario):
    d = dict(cfg.get("experiment", {}))
    d["scenario"] = scenario
    d["seed"] = args.seed if args.seed is not None else d.get("seed", 0)
    if args.resolution is not None:
        d["resolution"] = args.resolution
    if getattr(args, "samples", None) is not None:
        d["n_samples"] = args.samples
    if getattr(args, "workers", None) is not None:
        d["workers"] = args.workers
    if getattr(args, "rho", None) is not None:
        d["rho_override"] = args.rho
    return ExperimentConfig.from_dict(d)


def cmd_fixed(args, cfg):
    exp = _experiment(args, cfg, "fixed")
    rep = run_fixed(exp)
    files = export_report(rep, args.out)
    for r in rep.records:
        cells = [f"{r['configuration']} {r['activity']:8s}",
                 f"LOS {100 * r['los_ratio']:6.2f}%"]
        for mhz in exp.led_cutoffs_mhz:
            k = f"{mhz:g}"
            pen = r[f"penalty_db_{k}"]
            cells.append(f"{k} MHz: SNR_t {r[f'snr_t_db_{k}']:6.2f} dB, penalty "
                         + ("   -  " if math.isnan(pen) else f"{pen:5.2f}") + " dB")
        print("  ".join(cells))
    print(f"wrote {', '.join(sorted(files.values()))}")


def cmd_montecarlo(args, cfg):
    exp = _experiment(args, cfg, "montecarlo")

    def progress(k, n):
        if k % 50 == 0 or k == n:
            log.info("%d/%d samples", k, n)
    rep = run_monte_carlo(exp, progress=progress)
    files = export_report(rep, args.out)
    print(json.dumps(rep.aggregates, indent=2, sort_keys=True))
    print(f"wrote {len(files)} files to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifisim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scene_opts(sp):
        sp.add_argument("--activity", choices=("sitting", "walking"), default="walking")
        sp.add_argument("--anchor", type=float, nargs=2, metavar=("X", "Y"))
        sp.add_argument("--direction-deg", type=float)
        sp.add_argument("--polar-deg", type=float)
        sp.add_argument("--no-body", action="store_true")
        sp.add_argument("--resolution", type=float)
        sp.add_argument("--channel", help="channel CSV to use instead of computing one")

    def link_opts(sp):
        sp.add_argument("--led-cutoff-mhz", type=float)
        sp.add_argument("--target-ber", type=float)
        sp.add_argument("--los-only", action="store_true")

    sp = sub.add_parser("cir", help="channel response of one scene to CSV")
    scene_opts(sp)
    sp.add_argument("--full-grid", action="store_true", help="every DFT bin up to f_s/2")
    sp.add_argument("--led-cutoff-mhz", type=float)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_cir)

    sp = sub.add_parser("link", help="analytical link report")
    scene_opts(sp)
    link_opts(sp)
    sp.add_argument("--out", help="per-subcarrier CSV")
    sp.set_defaults(func=cmd_link)

    sp = sub.add_parser("simulate", help="time-domain BER points")
    scene_opts(sp)
    link_opts(sp)
    sp.add_argument("--snr-db", type=float, nargs="+", required=True)
    sp.add_argument("--bits", type=float, default=1e6)
    sp.add_argument("--linear", action="store_true",
                    help="serial linear convolution (shows ISI beyond the prefix)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("orient-gen", help="synthesize a noisy orientation series")
    sp.add_argument("--activity", choices=("sitting", "walking"), default="walking")
    sp.add_argument("--angle", choices=("theta", "omega"), default="theta")
    sp.add_argument("--duration", type=float, default=60.0)
    sp.add_argument("--sampler", choices=("random", "periodic", "even"), default="random")
    sp.add_argument("--step", type=float, default=1e-3, help="step for --sampler even")
    sp.add_argument("--amplitude", type=float)
    sp.add_argument("--frequency", type=float)
    sp.add_argument("--sigma-v", dest="sigma_v", type=float)
    sp.add_argument("--mean", type=float)
    sp.add_argument("--sigma-n2", dest="sigma_n2", type=float)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_orient_gen)

    sp = sub.add_parser("orient-estimate", help="recover (A, f, sigma_v) from a series CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--angle", choices=("theta", "omega"), default="theta",
                    help="selects the default measurement-noise variance")
    sp.add_argument("--sigma-n2", dest="sigma_n2", type=float)
    sp.add_argument("--out", help="JSON diagnostics")
    sp.add_argument("--periodogram", help="cleaned periodogram CSV")
    sp.set_defaults(func=cmd_orient_estimate)

    sp = sub.add_parser("fixed", help="fixed configurations C1-C5")
    sp.add_argument("--resolution", type=float)
    sp.add_argument("--rho", type=float, help="override every reflectivity")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_fixed)

    sp = sub.add_parser("montecarlo", help="random placement and orientation")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--resolution", type=float)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_montecarlo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        args.func(args, cfg)
    except (LifiSimError, OSError, ValueError, yaml.YAMLError) as exc:
        print(f"lifisim: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
