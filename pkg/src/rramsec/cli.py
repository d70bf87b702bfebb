"""``rramsec`` command line: calibrate, trng, puf, sweep and nist.

Every output file is a pure function of the config and the master seed, so
reruns are byte-identical. Timing goes to the log (stderr), never to files.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure
(non-converging fit, failed search, I/O error).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time

import numpy as np

from . import config as config_mod
from . import metrics, puf, seeding, stattests, trng
from .crossbar import Crossbar
from .device import calibrate_resistance, calibrate_switching
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    ParseError,
    SearchError,
    StateError,
    ValidationError,
)

logger = logging.getLogger("rramsec")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
_INVALID = (DomainError, ConfigurationError, ValidationError, ParseError)
_RUNTIME = (ConvergenceError, SearchError, StateError, OSError)

SWEEP_HEADER = "duration_s,set_fraction,lrs_min_kohm,lrs_max_kohm,hrs_min_kohm,hrs_max_kohm"


class _Parser(argparse.ArgumentParser):
    """Usage errors count as invalid input (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigurationError(message)


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path, payload):
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _fmt(value):
    return "" if value is None else repr(float(value))


# -- commands ----------------------------------------------------------------


def cmd_calibrate(cfg, out, write_back=None):
    """Fit resistance constants and the switching curve; store them in ``cfg``."""
    cal = cfg.calibration
    k_hrs, k_lrs = calibrate_resistance(cal.hrs_target, cal.lrs_target)
    dev = cfg.device
    tau50, sigma, residuals = calibrate_switching(
        [tuple(row) for row in cal.switching_table],
        t_min=dev.t_min,
        t_max=dev.t_max,
        initial=(dev.tau50_set, dev.sigma_tau),
    )
    cfg.device = dataclasses.replace(dev, k_hrs=k_hrs, k_lrs=k_lrs, tau50_set=tau50, sigma_tau=sigma)
    report = {
        "k_hrs": k_hrs,
        "k_lrs": k_lrs,
        "tau50_set_s": tau50,
        "sigma_tau": sigma,
        "residuals": [
            {"duration_s": row[0], "target": row[1], "residual": float(r)}
            for row, r in zip(cal.switching_table, residuals)
        ],
    }
    _write_json(os.path.join(out, "calibration.json"), report)
    config_mod.dump(cfg, os.path.join(out, "config.json"))
    if write_back:
        config_mod.dump(cfg, write_back)
    for entry in report["residuals"]:
        print(f"{entry['duration_s']:.3g} s: target {entry['target']:.2f} residual {entry['residual']:+.4f}")
    return report


def resolve_half_pulse(cfg, model=None):
    """The configured half pulse, searching for its duration when unset."""
    p = cfg.pulses
    if p.half_duration is not None:
        return p.half_pulse()
    model = cfg.device.to_model() if model is None else model
    found = trng.find_half_pulse(
        cfg.variation.to_spec(),
        amplitude=p.half_amplitude,
        tol=p.half_search_tol,
        rng=seeding.derive_rng(cfg.seed, seeding.SEARCH),
        model=model,
    )
    logger.info("half pulse: %.6g s at %.2f V", found.duration, found.amplitude)
    return found


def cmd_trng(cfg, out, method=None, bits=None):
    method = cfg.trng.method if method is None else method
    bits = cfg.trng.bits if bits is None else bits
    model = cfg.device.to_model()
    pulse = resolve_half_pulse(cfg, model) if method == "halfpulse" else None
    p = cfg.pulses
    stream = trng.harvest(
        method,
        bits,
        cfg.seed,
        shape=(cfg.crossbar.n_rows, cfg.crossbar.n_cols),
        variation=cfg.variation.to_spec(),
        model=model,
        r_wire=cfg.crossbar.r_wire,
        pulse=pulse,
        writeback_pulses={"form": p.set_pulse(), "reset": p.reset_pulse(), "write": p.set_pulse()},
    )
    trng.save_stream(stream, os.path.join(out, "bits.txt"))
    report = stattests.run_suite(stream, cfg.alpha)
    _write_text(os.path.join(out, "nist.json"), report.to_json())
    _write_text(os.path.join(out, "nist.txt"), report.to_text())
    print(report.to_text(), end="")
    return stream, report


def cmd_puf(cfg, out, devices=None, crps=None):
    k = cfg.puf.devices if devices is None else devices
    n = cfg.puf.crps if crps is None else crps
    if k < 1 or n < 2:
        raise DomainError("need at least one device and two CRPs")
    model = cfg.device.to_model()
    half = resolve_half_pulse(cfg, model) if cfg.puf.entropy == "halfpulse" else None
    rows, cols = cfg.crossbar.n_rows, cfg.crossbar.n_cols
    challenges = puf.random_challenges(seeding.derive_rng(cfg.seed, seeding.CHALLENGES), n, rows)
    responses = []
    first = None
    for d in range(k):
        inst = puf.CrossbarPUF(
            n_rows=rows,
            n_cols=cols,
            entropy=cfg.puf.entropy,
            reference=cfg.puf.reference,
            n_cal=cfg.puf.n_cal,
            read_voltage=cfg.pulses.read_amplitude,
            r_wire=cfg.crossbar.r_wire,
            read_noise=cfg.puf.read_noise,
            half_pulse=half,
            variation=cfg.variation.to_spec(),
            device_model=model,
            random_state=seeding.derive_seed(cfg.seed, seeding.CROSSBAR, d),
        ).fit()
        crps = inst.collect(challenges)
        puf.save_crps(
            crps,
            os.path.join(out, f"crps_d{d:02d}.csv"),
            thresholds_path=os.path.join(out, f"thresholds_d{d:02d}.csv"),
        )
        responses.append(crps.responses)
        first = inst if first is None else first
    stack = np.stack(responses)
    repeated = np.repeat(challenges[:1], cfg.puf.reliability_repeats, axis=0)
    reports = {
        "intra_hd": metrics.intra_hd(stack),
        "uniformity": metrics.uniformity(stack.reshape(-1, cols)),
        "reliability": metrics.reliability(first.predict(repeated)),
    }
    if k >= 2:
        reports["uniqueness"] = metrics.uniqueness(stack)
        reports["bit_aliasing"] = metrics.bit_aliasing(stack)
    else:
        reports["uniqueness"] = metrics.not_applicable("uniqueness", "needs at least two devices")
        reports["bit_aliasing"] = metrics.not_applicable("bit_aliasing", "needs at least two devices")
    _write_json(os.path.join(out, "metrics.json"), {name: r.to_dict() for name, r in reports.items()})
    for name, report in reports.items():
        if report.applicable and report.histogram is not None:
            metrics.save_histogram(report, os.path.join(out, f"hist_{name}.csv"))
    for name, report in reports.items():
        shown = "NA" if not report.applicable else f"{report.value:.2f}%"
        print(f"{name}: {shown}")
    return reports


def sweep_rows(cfg, model=None):
    """Switched fraction and post-pulse resistance ranges per configured duration."""
    model = cfg.device.to_model() if model is None else model
    spec = cfg.variation.to_spec()
    sw = cfg.sweep
    result = []
    for index, duration in enumerate(sw.durations):
        pulse = cfg.pulses.half_pulse(duration)
        switched = total = 0
        lrs, hrs = [], []
        for s in range(sw.n_seeds):
            rng = seeding.derive_rng(cfg.seed, seeding.SWEEP, index, s)
            xbar = Crossbar.sample(sw.n_rows, sw.n_cols, rng, variation=spec, r_wire=cfg.crossbar.r_wire, model=model)
            bitmap = trng.pulse_generate(xbar, pulse)
            r = xbar.resistances()
            switched += int(bitmap.sum())
            total += bitmap.size
            lrs.append(r[bitmap == 1])
            hrs.append(r[bitmap == 0])
        lrs, hrs = np.concatenate(lrs), np.concatenate(hrs)

        def span(values):
            return (values.min() / 1e3, values.max() / 1e3) if values.size else (None, None)

        result.append((duration, switched / total) + span(lrs) + span(hrs))
    return result


def cmd_sweep(cfg, out):
    rows = sweep_rows(cfg)
    lines = [SWEEP_HEADER] + [",".join(_fmt(v) for v in row) for row in rows]
    _write_text(os.path.join(out, "sweep.csv"), "\n".join(lines) + "\n")
    for row in rows:
        print(f"{row[0]:.3g} s: {100 * row[1]:.1f}% switched")
    return rows


def cmd_nist(path, out, alpha):
    stream = trng.load_stream(path)
    report = stattests.run_suite(stream, alpha)
    _write_text(os.path.join(out, "nist.json"), report.to_json())
    _write_text(os.path.join(out, "nist.txt"), report.to_text())
    print(report.to_text(), end="")
    return report


# -- entry point -------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (defaults apply to missing fields)")
    common.add_argument("--seed", type=_u64, help="master seed; overrides the config")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--alpha", type=float, help="significance level for the randomness battery")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress and timing to stderr")

    parser = _Parser(prog="rramsec", description="RRAM crossbar TRNG and PUF experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    cal = sub.add_parser("calibrate", parents=[common], help="fit device constants to the targets")
    cal.add_argument("--write-back", action="store_true", help="also overwrite the --config file")

    t = sub.add_parser("trng", parents=[common], help="harvest random bits and run the battery")
    t.add_argument("--method", choices=("writeback", "halfpulse"))
    t.add_argument("--bits", type=int)

    p = sub.add_parser("puf", parents=[common], help="enroll PUF instances, collect CRPs, compute metrics")
    p.add_argument("--devices", type=int)
    p.add_argument("--crps", type=int)

    sub.add_parser("sweep", parents=[common], help="switched fraction versus pulse duration")

    n = sub.add_parser("nist", parents=[common], help="run the battery on an existing bit-stream file")
    n.add_argument("stream", help="bit-stream file written by 'rramsec trng'")
    return parser


def _load_config(args):
    cfg = config_mod.load(args.config) if args.config else config_mod.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.alpha is not None:
        cfg.alpha = args.alpha
    return cfg.validate()


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    start = time.perf_counter()
    if args.command == "calibrate":
        if args.write_back and not args.config:
            raise ConfigurationError("--write-back needs --config")
        cmd_calibrate(cfg, args.out, args.config if args.write_back else None)
    elif args.command == "trng":
        if args.bits is not None and args.bits < 1:
            raise DomainError("--bits must be positive")
        cmd_trng(cfg, args.out, args.method, args.bits)
    elif args.command == "puf":
        cmd_puf(cfg, args.out, args.devices, args.crps)
    elif args.command == "sweep":
        cmd_sweep(cfg, args.out)
    else:
        cmd_nist(args.stream, args.out, cfg.alpha)
    logger.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except _INVALID as exc:
        print(f"rramsec: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except _RUNTIME as exc:
        print(f"rramsec: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
