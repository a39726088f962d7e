"""Command-line interface.

Exit status: 0 on success, 1 on a usage error, 2 when the input data or a
config file cannot be used.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .harness import ConfigError, SweepConfig, run_sweep
from .mle import Likelihood, LikelihoodError, estimate_frequency
from .model import MeasurementModel, ParaState, PureState
from .projective import ProjectiveRecord, count_switches, projective_mle, simulate_projective
from .simulate import RecordFormatError, load_record, make_drift_profile, save_record, simulate_record
from .spectral import default_half_width, fft_estimate
from .tracker import TrackerConfig, track

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

INITIAL_STATES = {
    "ground": PureState.ground,
    "excited": PureState.excited,
    "plus": PureState.plus,
    "mixed": ParaState.mixed,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="TOML or JSON config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=Path, help="output file (default: stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    return p


def _band(values):
    if values is None:
        return None
    lo, hi = values
    if not lo < hi:
        raise UsageError("--band needs LO < HI")
    return (lo, hi)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="rabitrack", description="Rabi-frequency estimation from continuous weak measurement.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate a readout record")
    p.add_argument("--f", type=float, default=1.0, help="Rabi frequency (MHz)")
    p.add_argument("--tau-m", type=float, default=1.0, help="measurement time (us)")
    p.add_argument("--dt", type=float, default=0.01, help="bin width (us)")
    p.add_argument("--T", type=float, default=50.0, help="record duration (us)")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--t1", type=float, default=math.inf, help="us")
    p.add_argument("--t2", type=float, default=math.inf, help="us")
    p.add_argument("--initial", choices=sorted(INITIAL_STATES), default="ground")
    p.add_argument("--drift", type=float, default=0.0, help="total drift range as a fraction of --f")
    p.add_argument("--drift-timescale", type=float, default=40.0, help="shortest drift timescale (us)")
    p.add_argument("--binary", action="store_true", help="write the binary format")

    est = sub.add_parser("estimate", help="estimate the frequency of a record")
    esub = est.add_subparsers(dest="method", required=True, parser_class=_Parser)

    m = esub.add_parser("mle", parents=[common], help="maximum likelihood")
    m.add_argument("record", type=Path)
    m.add_argument("--seed-from-fft", action="store_true", help="search around the FFT peak")
    m.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"), default=(0.0, 2.0))
    m.add_argument("--halo", type=float, default=0.3, help="half-width of the FFT-seeded search (MHz)")
    m.add_argument("--initial", choices=sorted(INITIAL_STATES), default="ground")
    m.add_argument("--ideal-model", action="store_true", help="ignore eta, T1 and T2 of the record")
    m.add_argument("--curve", type=Path, help="write the evaluated likelihood curve (CSV)")

    f = esub.add_parser("fft", parents=[common], help="filtered periodogram peak")
    f.add_argument("record", type=Path)
    f.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"), default=(0.0, 2.0))
    f.add_argument("--half-width", type=int, help="filter half-width in bins")
    f.add_argument("--spectrum", type=Path, help="write the filtered spectrum (CSV)")

    t = sub.add_parser("track", parents=[common], help="moving-window tracking")
    t.add_argument("record", type=Path)
    t.add_argument("--window", type=float, default=40.0, help="us")
    t.add_argument("--step", type=float, default=10.0, help="us")
    t.add_argument("--no-chain", action="store_true", help="estimate windows independently")
    t.add_argument("--ideal-model", action="store_true")

    s = sub.add_parser("sweep", parents=[common], help="RMS error over a (T, tau_m) grid")
    s.add_argument("--n-ensemble", type=int, help="override n_ensemble from the config")

    q = sub.add_parser("projective", parents=[common], help="periodic projective-measurement baseline")
    q.add_argument("--bits", type=Path, help="file of 0/1 outcomes; simulated when omitted")
    q.add_argument("--omega", type=float, default=math.pi / 2, help="angular frequency for simulation (rad/us)")
    q.add_argument("--tau", type=float, default=1.0, help="measurement period (us)")
    q.add_argument("--n-meas", type=int, default=400)
    q.add_argument("--initial-bit", type=int, choices=(0, 1), default=0)
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    from .harness import tomllib

    text = path.read_text(encoding="utf-8")
    try:
        return tomllib.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_simulate(args) -> int:
    if args.out is None:
        raise UsageError("simulate needs --out")
    cfg = _load_config(args.config).get("simulate", {})
    f = cfg.get("f_mhz", args.f)
    T = cfg.get("T_us", args.T)
    model = MeasurementModel(
        tau_m=cfg.get("tau_m_us", args.tau_m),
        dt=cfg.get("dt_us", args.dt),
        eta=cfg.get("eta", args.eta),
        t1=cfg.get("t1_us", args.t1),
        t2=cfg.get("t2_us", args.t2),
    )
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    n = int(round(T / model.dt))
    profile = f
    if args.drift > 0:
        profile = make_drift_profile(f, args.drift, args.drift_timescale, T, seed=(seed, 1))
    rec = simulate_record(profile, model, n, INITIAL_STATES[args.initial](), seed=seed)
    save_record(rec, args.out, binary=args.binary or None)
    return EXIT_OK


def cmd_estimate_mle(args) -> int:
    rec = load_record(args.record)
    model = rec.model.ideal() if args.ideal_model else rec.model
    lik = Likelihood(rec, model, INITIAL_STATES[args.initial](), threads=args.threads)
    extra = {}
    if args.seed_from_fft:
        f_fft, _ = fft_estimate(rec, band=_band(args.band))
        extra["f_fft_mhz"] = f_fft
        est = estimate_frequency(lik, seed_f=f_fft, halo=args.halo)
    else:
        est = estimate_frequency(lik, band=_band(args.band))
    if args.curve is not None:
        est.curve.to_csv(args.curve)
    _emit(est.to_json(n=rec.n, duration_us=rec.duration, **extra), args.out)
    return EXIT_OK


def cmd_estimate_fft(args) -> int:
    rec = load_record(args.record)
    hw = args.half_width or default_half_width(rec.duration, rec.model.tau_m)
    f_fft, spec = fft_estimate(rec, band=_band(args.band), half_width_bins=hw)
    if args.spectrum is not None:
        spec.to_csv(args.spectrum)
    doc = {"f_fft_mhz": f_fft, "half_width_bins": hw, "n": rec.n, "duration_us": rec.duration}
    _emit(json.dumps(doc, indent=2, sort_keys=True), args.out)
    return EXIT_OK


def cmd_track(args) -> int:
    rec = load_record(args.record)
    model = rec.model.ideal() if args.ideal_model else rec.model
    cfg = TrackerConfig(window=args.window, step=args.step, chain=not args.no_chain)
    _emit(track(rec, model, cfg).to_csv(), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config is None:
        raise UsageError("sweep needs --config")
    data = _load_config(args.config)
    if args.seed is not None:
        data = dict(data.get("sweep", data), seed=args.seed)
    if args.n_ensemble is not None:
        data = dict(data.get("sweep", data), n_ensemble=args.n_ensemble)
    cfg = SweepConfig.from_dict(data)
    result = run_sweep(cfg, threads=args.threads)
    text = result.to_csv()
    _emit(text, args.out)
    return EXIT_OK


def cmd_projective(args) -> int:
    if args.bits is not None:
        raw = "".join(args.bits.read_text(encoding="utf-8").split())
        if not raw or set(raw) - {"0", "1"}:
            raise RecordFormatError(f"{args.bits}: expected a sequence of 0/1 characters")
        rec = ProjectiveRecord([int(c) for c in raw], args.tau, args.initial_bit)
    else:
        seed = 0 if args.seed is None else args.seed
        rec = simulate_projective(args.omega, args.tau, args.n_meas, args.initial_bit, seed=seed)
    n = count_switches(rec)
    omega, sigma, boundary = projective_mle(n, rec.n_meas, rec.tau)
    doc = {"n": n, "N": rec.n_meas, "omega_ml": omega, "sigma": sigma, "boundary": boundary, "tau_us": rec.tau}
    _emit(json.dumps(doc, indent=2, sort_keys=True), args.out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "mle": cmd_estimate_mle,
    "fft": cmd_estimate_fft,
    "track": cmd_track,
    "sweep": cmd_sweep,
    "projective": cmd_projective,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    key = args.method if args.command == "estimate" else args.command
    try:
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        return COMMANDS[key](args)
    except UsageError as exc:
        print(f"rabitrack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RecordFormatError, ConfigError, LikelihoodError, ValueError) as exc:
        print(f"rabitrack: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
