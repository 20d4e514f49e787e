"""Command-line interface.

Subcommands wire plain-text chain configs to the numeric modules and emit
plot-ready CSV tables or JSON reports.  Physical inputs are SI (masses in
u, frequencies in Hz in config files); simulator times are dimensionless
in units of 1/Omega_0 unless a carrier rate is supplied for conversion.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .chain import (ChainTemplate, modes_to_csv, read_chain_file,
                    solve_axial_modes, solve_equilibrium)
from .detection import (ReadoutModel, calibrate, composite_dists,
                        estimate_period, ml_fit, parity_from_fit,
                        parity_scan_analysis, parity_std_from_fit,
                        synthesize_shots)
from .dicke import rotated_density, weights
from .errors import (ConvergenceError, DataError, IdentifiabilityError,
                     SearchError, SweepError, UnstableCrystalError)
from .sideband import fidelity_vs_mass_ratio, first_max_fidelity

SWEEP_CSV_SCHEMA = "sweep.v1"
SEED_ENV_VAR = "DICKESIM_SEED"

DEFAULT_MODEL = dict(lambda_bright=30.0, lambda_dark=0.3, lambda_bg=2.0,
                     gamma=500.0, t_detect=200e-6)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _resolve_seed(args_seed):
    if args_seed is not None:
        return args_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise _UsageError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return 0


def _jsonify(value):
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def _write_json(data, stream):
    stream.write(json.dumps(_jsonify(data), indent=2, sort_keys=True))
    stream.write("\n")


def _model_from_args(args):
    return ReadoutModel(
        lambda_bright=args.lambda_bright,
        lambda_dark=args.lambda_dark,
        lambda_bg=args.lambda_bg,
        gamma=args.gamma,
        t_detect=args.t_detect,
    )


def _add_model_flags(parser):
    parser.add_argument("--lambda-bright", type=float,
                        default=DEFAULT_MODEL["lambda_bright"],
                        help="mean counts per window from one bright ion")
    parser.add_argument("--lambda-dark", type=float,
                        default=DEFAULT_MODEL["lambda_dark"],
                        help="mean counts per window from one dark ion")
    parser.add_argument("--lambda-bg", type=float,
                        default=DEFAULT_MODEL["lambda_bg"],
                        help="mean background counts per window")
    parser.add_argument("--gamma", type=float, default=DEFAULT_MODEL["gamma"],
                        help="dark-to-bright repump rate (1/s)")
    parser.add_argument("--t-detect", type=float,
                        default=DEFAULT_MODEL["t_detect"],
                        help="detection window (s)")


# --- modes --------------------------------------------------------------------


def cmd_modes(args):
    chain_file = read_chain_file(args.config)
    eq = solve_equilibrium(chain_file.config)
    modes = solve_axial_modes(chain_file.config, eq)
    with _open_out(args.out) as out:
        if args.format == "csv":
            modes_to_csv(modes, out)
        else:
            _write_json({
                "schema": "modes.v1",
                "frequencies": modes.frequencies,
                "inphase_index": modes.inphase_index,
                "eigenvectors": modes.eigenvectors,
                "ground_state_amplitudes": modes.ground_state_amplitudes,
                "lamb_dicke": modes.lamb_dicke,
                "equilibrium_positions_scaled": eq.positions,
            }, out)
    return 0


# --- sweep --------------------------------------------------------------------


def _template_from_file(chain_file, path):
    if chain_file.ancilla_index is None:
        raise DataError(f"{path}: sweep needs an ancilla_index entry")
    cfg = chain_file.config
    if cfg.reference_index == chain_file.ancilla_index:
        raise DataError(f"{path}: reference_index must name a qubit ion")
    return ChainTemplate(
        base_masses=cfg.masses,
        ancilla_index=chain_file.ancilla_index,
        reference_index=cfg.reference_index,
        omega_z=cfg.omega_z,
        k_projection=cfg.k_projection,
        dimensionless_mode=False,
    )


def _mu_grid(args):
    if args.mu_points < 1:
        raise _UsageError("--mu-points must be >= 1")
    if args.mu_start <= 0 or args.mu_stop <= 0:
        raise _UsageError("mass ratios must be positive")
    if args.mu_points == 1:
        return np.array([args.mu_start])
    if args.mu_log:
        return np.geomspace(args.mu_start, args.mu_stop, args.mu_points)
    return np.linspace(args.mu_start, args.mu_stop, args.mu_points)


def _write_sweep_csv(rows, m, out, carrier_rate=None):
    out.write(f"# {SWEEP_CSV_SCHEMA}\n")
    cols = ["mu", "duration", "duration_s", "fidelity"]
    cols += [f"p{k}" for k in range(m + 1)]
    cols += ["error"]
    out.write(",".join(cols) + "\n")
    for row in rows:
        if row.error is not None:
            cells = [repr(row.mu)] + [""] * (3 + m + 1) + [row.error.replace(",", ";")]
        else:
            dur_s = repr(row.duration / carrier_rate) if carrier_rate else ""
            cells = [repr(row.mu), repr(row.duration), dur_s, repr(row.fidelity)]
            cells += [repr(float(p)) for p in row.phonon_distribution]
            cells += [""]
        out.write(",".join(cells) + "\n")


def cmd_sweep(args):
    chain_file = read_chain_file(args.config)
    template = _template_from_file(chain_file, args.config)
    grid = _mu_grid(args)
    rows = fidelity_vs_mass_ratio(template, grid, args.m, fail_fast=False,
                                  keep_density=args.format == "json",
                                  jobs=args.jobs)
    with _open_out(args.out) as out:
        if args.format == "csv":
            _write_sweep_csv(rows, args.m, out, carrier_rate=args.carrier_rate)
        else:
            payload = {
                "schema": SWEEP_CSV_SCHEMA,
                "m": args.m,
                "rows": [{
                    "mu": row.mu,
                    "duration": row.duration,
                    "duration_s": (row.duration / args.carrier_rate
                                   if args.carrier_rate and row.duration is not None
                                   else None),
                    "fidelity": row.fidelity,
                    "phonon_distribution": row.phonon_distribution,
                    "reduced_density": (row.reduced_density.to_json_dict()
                                        if row.reduced_density is not None else None),
                    "error": row.error,
                } for row in rows],
            }
            _write_json(payload, out)
    return 0


# --- experiment ---------------------------------------------------------------


def _bright_populations(rho):
    """Populations (c0, c1, c2) of 0/1/2 bright (down) ions from a two-qubit
    density matrix diagonal."""
    diag = np.real(np.diag(rho.matrix))
    ups = weights(rho.n_qubits)
    c = np.zeros(rho.n_qubits + 1)
    for idx, w in enumerate(ups):
        c[rho.n_qubits - w] += max(diag[idx], 0.0)
    return c / np.sum(c)


def run_experiment(chain_file, shots, seed, model=None, n_phases=12,
                   n_bootstrap=200):
    """End-to-end synthetic run on one chain config; returns the report dict.

    Simulates the preparation pulse, generates reference/experiment/parity
    shot records from the true readout model, calibrates against the
    references, fits populations and parity scans, and assembles the
    final fidelity with its statistical error.
    """
    if model is None:
        model = ReadoutModel(**DEFAULT_MODEL)
    if chain_file.ancilla_index is None:
        raise DataError("experiment needs an ancilla_index entry in the config")
    config = chain_file.config
    addressed = tuple(i for i in range(config.n_ions)
                      if i != chain_file.ancilla_index)
    if len(addressed) != 2:
        raise DataError("the readout pipeline models exactly 2 qubit ions")

    pulse = first_max_fidelity(config, addressed, m=1)
    rho = pulse.reduced_density

    phases = [k * np.pi / n_phases for k in range(n_phases)]
    seeds = np.random.SeedSequence(seed).spawn(6 + 2 * n_phases)
    seed_iter = iter(seeds)

    cm_true = composite_dists(model)
    ref_bright = synthesize_shots((0.0, 0.0, 1.0), cm_true, shots, next(seed_iter))
    ref_dark = synthesize_shots((1.0, 0.0, 0.0), cm_true, shots, next(seed_iter))
    hist_bright = np.bincount(ref_bright, minlength=cm_true.n_max + 1)
    hist_dark = np.bincount(ref_dark, minlength=cm_true.n_max + 1)
    cal = calibrate(hist_bright, hist_dark, t_detect=model.t_detect)
    cm_fit = composite_dists(cal.model)

    exp_shots = synthesize_shots(_bright_populations(rho), cm_true, shots,
                                 next(seed_iter))
    fit = ml_fit(exp_shots, cm_fit, n_bootstrap=n_bootstrap, seed=next(seed_iter))

    shots_per_phase = max(shots // 5, 200)
    scan_single = [
        (phi, synthesize_shots(
            _bright_populations(rotated_density(rho, np.pi / 2, phi)),
            cm_true, shots_per_phase, next(seed_iter)))
        for phi in phases
    ]
    rho_rotated = rotated_density(rho, np.pi / 2, 0.0)
    scan_double = [
        (phi, synthesize_shots(
            _bright_populations(rotated_density(rho_rotated, np.pi / 2, phi)),
            cm_true, shots_per_phase, next(seed_iter)))
        for phi in phases
    ]
    res_single = parity_scan_analysis(scan_single, cm_fit,
                                      n_bootstrap=max(n_bootstrap // 2, 1),
                                      seed=next(seed_iter))
    res_double = parity_scan_analysis(scan_double, cm_fit,
                                      n_bootstrap=max(n_bootstrap // 2, 1),
                                      seed=next(seed_iter))
    period = estimate_period(res_double.phases, res_double.parities)

    c1_hat = float(fit.populations[1])
    c1_err = float(fit.std_errors[1])
    coherence = res_single.coherence_term
    coherence_err = res_single.offset_error
    fidelity = 0.5 * (c1_hat + coherence)
    fidelity_err = 0.5 * float(np.hypot(c1_err, coherence_err))

    return {
        "schema": "experiment.v1",
        "chain": {
            "masses": list(config.masses),
            "ancilla_index": chain_file.ancilla_index,
            "omega_z_hz": chain_file.omega_z_hz,
            "k_projection": config.k_projection,
        },
        "simulation": {
            "couplings": pulse.couplings,
            "pulse_duration": pulse.duration,
            "fidelity": pulse.fidelity,
            "populations": _bright_populations(rho),
        },
        "readout_model_true": {k: getattr(model, k) for k in DEFAULT_MODEL},
        "calibration": {
            "lambda_bright": cal.model.lambda_bright,
            "lambda_dark": cal.model.lambda_dark,
            "lambda_bg": cal.model.lambda_bg,
            "gamma": cal.model.gamma,
            "log_likelihood": cal.log_likelihood,
            "chi2_bright": cal.chi2_bright,
            "dof_bright": cal.dof_bright,
            "chi2_dark": cal.chi2_dark,
            "dof_dark": cal.dof_dark,
        },
        "population_fit": {
            "c": fit.populations,
            "std_errors": fit.std_errors,
            "log_likelihood": fit.log_likelihood,
            "n_samples": fit.n_samples,
            "parity": parity_from_fit(fit),
        },
        "parity_scan": {
            "phases": res_single.phases,
            "parity": res_single.parities,
            "parity_errors": res_single.parity_errors,
            "amplitude": res_single.amplitude,
            "amplitude_error": res_single.amplitude_error,
            "offset": res_single.offset,
            "offset_error": res_single.offset_error,
        },
        "parity_scan_double": {
            "phases": res_double.phases,
            "parity": res_double.parities,
            "parity_errors": res_double.parity_errors,
            "amplitude": res_double.amplitude,
            "amplitude_error": res_double.amplitude_error,
            "offset": res_double.offset,
            "phase_offset": res_double.phase_offset,
            "period_estimate": period,
        },
        "fidelity": {
            "coherence_term": coherence,
            "coherence_error": coherence_err,
            "odd_population": c1_hat,
            "odd_population_error": c1_err,
            "value": fidelity,
            "error": fidelity_err,
            "simulated": pulse.fidelity,
        },
        "shots": {"per_reference": shots, "experiment": shots,
                  "per_phase": shots_per_phase},
        "seed": seed,
    }


def cmd_experiment(args):
    if args.shots < 100:
        raise _UsageError("need at least 100 shots per record")
    chain_file = read_chain_file(args.config)
    report = run_experiment(chain_file, args.shots, _resolve_seed(args.seed),
                            model=_model_from_args(args))
    with _open_out(args.out) as out:
        _write_json(report, out)
    return 0


# --- fit ----------------------------------------------------------------------


def _read_shot_file(path, n_max):
    counts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                value = int(line)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: not an integer count: "
                                f"{line!r}") from exc
            if value < 0 or value > n_max:
                raise DataError(f"{path}:{lineno}: count {value} outside "
                                f"[0, {n_max}]")
            counts.append(value)
    if not counts:
        raise DataError(f"{path}: no shot records found")
    return np.array(counts, dtype=int)


def _read_histogram(path, n_max):
    hist = np.zeros(n_max + 1)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.lower().startswith("n,"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'n,count'")
            try:
                n, count = int(parts[0]), float(parts[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad histogram row "
                                f"{line!r}") from exc
            if n < 0 or n > n_max:
                raise DataError(f"{path}:{lineno}: bin {n} outside [0, {n_max}]")
            if count < 0:
                raise DataError(f"{path}:{lineno}: negative count")
            hist[n] += count
    return hist


def cmd_fit(args):
    shots = _read_shot_file(args.shots, args.n_max)
    hist_bright = _read_histogram(args.ref_bright, args.n_max)
    hist_dark = _read_histogram(args.ref_dark, args.n_max)
    cal = calibrate(hist_bright, hist_dark, t_detect=args.t_detect,
                    n_max=args.n_max)
    cm = composite_dists(cal.model, args.n_max)
    fit = ml_fit(shots, cm, n_bootstrap=args.bootstrap,
                 seed=_resolve_seed(args.seed))
    report = {
        "schema": "fit.v1",
        "populations": fit.populations,
        "std_errors": fit.std_errors,
        "log_likelihood": fit.log_likelihood,
        "n_samples": fit.n_samples,
        "parity": parity_from_fit(fit),
        "parity_std": parity_std_from_fit(fit),
        "calibration": {
            "lambda_bright": cal.model.lambda_bright,
            "lambda_dark": cal.model.lambda_dark,
            "lambda_bg": cal.model.lambda_bg,
            "gamma": cal.model.gamma,
            "t_detect": cal.model.t_detect,
            "chi2_bright": cal.chi2_bright,
            "chi2_dark": cal.chi2_dark,
        },
    }
    with _open_out(args.out) as out:
        _write_json(report, out)
    return 0


# --- synth --------------------------------------------------------------------


def cmd_synth(args):
    c = np.array([args.c0, args.c1, args.c2])
    if np.any(c < 0) or abs(float(np.sum(c)) - 1.0) > 1e-9:
        raise _UsageError("--c0/--c1/--c2 must be non-negative and sum to 1")
    if args.shots < 0:
        raise _UsageError("--shots must be >= 0")
    model = _model_from_args(args)
    counts = synthesize_shots(c, model, args.shots, _resolve_seed(args.seed))
    with _open_out(args.out) as out:
        for value in counts:
            out.write(f"{value}\n")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="dickesim",
                     description="Mixed-species ion chain Dicke-state "
                                 "preparation simulator and readout analysis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_modes = sub.add_parser("modes", help="axial mode table for one chain")
    p_modes.add_argument("--config", required=True, help="chain config file")
    p_modes.add_argument("--out", default="-")
    p_modes.add_argument("--format", choices=("csv", "json"), default="csv")
    p_modes.set_defaults(func=cmd_modes)

    p_sweep = sub.add_parser("sweep", help="fidelity versus ancilla mass ratio")
    p_sweep.add_argument("--config", required=True,
                         help="chain config file (needs ancilla_index)")
    p_sweep.add_argument("--m", type=int, default=1,
                         help="number of excitations in the target state")
    p_sweep.add_argument("--mu-start", type=float, default=0.1)
    p_sweep.add_argument("--mu-stop", type=float, default=10.0)
    p_sweep.add_argument("--mu-points", type=int, default=20)
    p_sweep.add_argument("--mu-log", action="store_true",
                         help="log-spaced mass-ratio grid")
    p_sweep.add_argument("--carrier-rate", type=float, default=None,
                         help="carrier Rabi rate Omega_0 (rad/s) for "
                              "converting durations to seconds")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel workers for sweep rows")
    p_sweep.add_argument("--out", default="-")
    p_sweep.add_argument("--format", choices=("csv", "json"), default="csv")
    p_sweep.set_defaults(func=cmd_sweep)

    p_exp = sub.add_parser("experiment",
                           help="synthetic end-to-end preparation and readout")
    p_exp.add_argument("--config", required=True,
                       help="chain config file (needs ancilla_index)")
    p_exp.add_argument("--shots", type=int, default=50000)
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--out", default="-")
    _add_model_flags(p_exp)
    p_exp.set_defaults(func=cmd_experiment)

    p_fit = sub.add_parser("fit", help="fit populations to external shot data")
    p_fit.add_argument("--shots", required=True, help="one integer count per line")
    p_fit.add_argument("--ref-bright", required=True,
                       help="bright reference histogram CSV (n,count)")
    p_fit.add_argument("--ref-dark", required=True,
                       help="dark reference histogram CSV (n,count)")
    p_fit.add_argument("--n-max", type=int, default=100)
    p_fit.add_argument("--t-detect", type=float, default=200e-6)
    p_fit.add_argument("--bootstrap", type=int, default=200)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--out", default="-")
    p_fit.set_defaults(func=cmd_fit)

    p_synth = sub.add_parser("synth", help="generate synthetic shot records")
    p_synth.add_argument("--c0", type=float, required=True)
    p_synth.add_argument("--c1", type=float, required=True)
    p_synth.add_argument("--c2", type=float, required=True)
    p_synth.add_argument("--shots", type=int, default=10000)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--out", default="-")
    _add_model_flags(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"dickesim: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, IdentifiabilityError) as exc:
        print(f"dickesim: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"dickesim: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, UnstableCrystalError, SearchError, SweepError,
            np.linalg.LinAlgError, ValueError) as exc:
        print(f"dickesim: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
