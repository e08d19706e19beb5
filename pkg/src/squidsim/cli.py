"""Command-line front end: ``squidsim <command> ...``.

Exit codes: 0 success, 2 input error, 3 domain error, 4 fit divergence.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import warnings

import numpy as np

from . import fitting, perturbation, scans
from .circuits import CircuitParams, ModeKind
from .composite import DEFAULT_TOL, Mode, SystemSpec, converge_dims, solve
from .config import dump_config, load_config
from .errors import ConfigError, FitDiverged, SquidsimError
from .observables import frequency

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN, EXIT_FIT = 0, 2, 3, 4
TOL_ENV = "SQUIDSIM_TOL_GHZ"


def fmt(x) -> str:
    """Fixed float format used by every CSV writer."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, str):
        return x
    return "%.9g" % x


def _tol(args, cfg=None) -> float:
    if getattr(args, "tol", None) is not None:
        return args.tol
    env = os.environ.get(TOL_ENV)
    if env:
        try:
            val = float(env)
        except ValueError:
            raise ConfigError(f"{TOL_ENV} must be a number, got {env!r}") from None
        if not val > 0:
            raise ConfigError(f"{TOL_ENV} must be positive")
        return val
    return cfg.defaults.tol_ghz if cfg is not None else DEFAULT_TOL


def _k(args, cfg) -> int:
    return args.k if args.k is not None else cfg.defaults.k_levels


def _open_out(path):
    if path in (None, "-"):
        return _Stdout()
    return open(path, "w", encoding="utf-8", newline="")


class _Stdout(io.StringIO):
    def close(self):
        sys.stdout.write(self.getvalue())
        sys.stdout.flush()
        super().close()


def _write_csv(path, header, rows):
    fh = _open_out(path)
    try:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    finally:
        fh.close()


def _write_json(path, obj):
    fh = _open_out(path)
    try:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    finally:
        fh.close()


def _keyvals(items, allowed, where) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"{where}: expected KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r} (allowed: {', '.join(allowed)})")
        if allowed[key] is str:
            out[key] = val
            continue
        try:
            out[key] = float(val)
        except ValueError:
            raise ConfigError(f"{where}: {key} is not a number: {val!r}") from None
    return out


def _require(d, keys, where):
    missing = [k for k in keys if k not in d]
    if missing:
        raise ConfigError(f"{where}: missing {', '.join(missing)}")


# -------------------------------------------------------------- commands

def cmd_spectrum(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.to_system(include_readout=not args.no_readout,
                         include_parasitics=not args.no_parasitics)
    fm = cfg.flux_mode
    fluxes = scans.parse_range(args.flux)
    if fm is None:
        # nothing tunes with flux: one static spectrum repeated on the grid
        lab = solve(spec, converge_dims(spec, _k(args, cfg), _tol(args, cfg))[0], _k(args, cfg))
        from .observables import transition_table
        table = transition_table(lab, include_sidebands=args.sidebands)
        rows = [(f, t.name, t.frequency, t.overlap) for f in fluxes for t in table]
    else:
        res = scans.spectrum_sweep(spec, fluxes, fm, _k(args, cfg), _tol(args, cfg),
                                   args.sidebands, threads=args.threads)
        rows = [(r.flux, r.transition, r.frequency, r.overlap) for r in res]
    _write_csv(args.out, ("flux_phi0", "transition", "freq_ghz", "overlap"), rows)
    return EXIT_OK


def _two_qubit(cfg, args):
    qubits = cfg.qubits
    if len(qubits) != 2:
        raise ConfigError("config must name exactly two qubit modes")
    spec = cfg.to_system(include_readout=args.include_readout,
                         include_parasitics=not args.no_parasitics)
    return spec, qubits


def cmd_zz_sweep(args) -> int:
    cfg = load_config(args.config)
    spec, qubits = _two_qubit(cfg, args)
    sw = scans.zz_sweep(spec, scans.parse_range(args.flux), qubits, cfg.flux_mode,
                        _k(args, cfg), _tol(args, cfg), threads=args.threads)
    rows = []
    for i, f in enumerate(sw.flux):
        crossed = i > 0 and sw.ranks[i] != sw.ranks[i - 1]
        rows.append((f, sw.qubit_freq[i], sw.zeta[i] * 1e6, bool(sw.ambiguous[i]), crossed))
    _write_csv(args.out, ("flux_phi0", "ist_freq_ghz", "zeta_khz", "ambiguous",
                          "level_crossing"), rows)
    return EXIT_OK


def cmd_zz_scan2d(args) -> int:
    cfg = load_config(args.config)
    spec, qubits = _two_qubit(cfg, args)
    flux = scans.parse_range(args.flux)
    if len(flux) != 1:
        raise ConfigError("zz-scan2d takes a single flux value")
    res = scans.zz_scan2d(spec, scans.parse_range(args.ej_ratio), scans.parse_range(args.ec_ratio),
                          float(flux[0]), qubits, _k(args, cfg), _tol(args, cfg),
                          threads=args.threads)
    rows = [(r.ej_ratio, r.ec_ratio, r.zeta * 1e6, r.delta, r.alpha * 1e3, r.ambiguous)
            for r in res]
    _write_csv(args.out, ("ej_ratio", "ec_ratio", "zeta_khz", "delta_ghz", "alpha_ist_mhz",
                          "ambiguous"), rows)
    return EXIT_OK


def cmd_perturb(args) -> int:
    if not (args.duffing or args.sweetspot or args.sidebands):
        raise ConfigError("perturb needs --duffing, --sweetspot or --sidebands")
    out = {}
    if args.duffing:
        d = _keyvals(args.duffing, {"J": float, "a1": float, "a2": float, "delta": float},
                     "--duffing")
        _require(d, ("J", "a1", "a2", "delta"), "--duffing")
        pair = perturbation.DuffingPair(d["delta"], 0.0, d["a1"], d["a2"], d["J"])
        out["duffing"] = {"zeta_ghz": perturbation.duffing_zz(pair),
                          "zeta_exact_ghz": perturbation.duffing_exact_zz(pair)}
    if args.sweetspot:
        d = _keyvals(args.sweetspot, {"EC": float, "EJ": float, "EL": float, "which": str},
                     "--sweetspot")
        _require(d, ("EC", "EJ", "EL"), "--sweetspot")
        which = perturbation.SweetSpot(d.get("which", "half"))
        flux = 0.5 if which is perturbation.SweetSpot.HALF_FLUX else 0.0
        p = CircuitParams.ist(d["EC"], d["EJ"], d["EL"], flux)
        est = perturbation.sweet_spot_formulas(p, which)
        lab = solve(SystemSpec((Mode("q", p),)), (4,), 4)
        out["sweetspot"] = {"which": which.value, "omega01_ghz": est.omega01,
                            "alpha_ghz": est.alpha, "phi_zpf": est.phi_zpf,
                            "omega01_exact_ghz": frequency(lab, "q")}
    if args.sidebands:
        keys = {"wa": float, "wb": float, "alpha": float, "c3": float, "J": float, "beta": float,
                "Omega": float, "wd": float, "wa_dressed": float}
        d = _keyvals(args.sidebands, keys, "--sidebands")
        _require(d, ("wa", "wb", "alpha", "c3", "J"), "--sidebands")
        s = perturbation.SidebandInputs(d["wa"], d["wb"], d["alpha"], d["c3"], d["J"],
                                        d.get("beta", 0.0))
        co = perturbation.sw_coefficients(s)
        st = perturbation.sideband_strengths(s)
        asym = -6.0 * s.c3 * s.J / s.delta
        res = {"d": co.d, "p": co.p, "q": co.q, "M1_ghz": st.M1, "M2_ghz": st.M2,
               "M1_closed_ghz": st.M1_closed, "M2_closed_ghz": st.M2_closed,
               "closed_form_rel_diff": st.closed_form_rel_diff, "asymptote_ghz": asym,
               "M1_over_asymptote": st.M1 / asym if asym else math.nan,
               "M2_over_asymptote": st.M2 / asym if asym else math.nan}
        if "Omega" in d:
            _require(d, ("wd", "wa_dressed"), "--sidebands")
            res["drive_factor_ghz"] = perturbation.sideband_drive_factor(
                s, d["Omega"], d["wd"], d["wa_dressed"])
        out["sidebands"] = res
    _write_json(args.out, out)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    data = fitting.read_spectroscopy_csv(args.data)
    spec = cfg.to_system(include_readout=not args.no_readout,
                         include_parasitics=not args.no_parasitics)
    free = [x for x in args.free.split(",") if x]
    init = _keyvals(args.init, {n: float for n in free}, "--init")
    bounds = {}
    for item in args.bounds or []:
        try:
            key, rng = item.split("=", 1)
            lo, hi = (float(v) for v in rng.split(":"))
        except ValueError:
            raise ConfigError(f"--bounds: expected NAME=lo:hi, got {item!r}") from None
        bounds[key] = (lo, hi)
    try:
        res = fitting.fit_spectrum(data, spec, free, init, bounds, cfg.flux_mode,
                                   k=_k(args, cfg), max_nfev=args.max_evals)
    except FitDiverged as exc:
        _write_json(args.out, {"converged": False, "error": "FitDiverged", "message": str(exc),
                               "last": exc.last})
        print(f"FitDiverged: {exc}", file=sys.stderr)
        return EXIT_FIT
    _write_json(args.out, res.to_dict())
    if args.out_config:
        with open(args.out_config, "w", encoding="utf-8") as fh:
            fh.write(dump_config(cfg.with_fit(res.params)))
    return EXIT_OK


def cmd_fluxnoise(args) -> int:
    cfg = load_config(args.config)
    pts = fitting.read_gamma_csv(args.data)
    spec = cfg.to_system(include_readout=not args.no_readout,
                         include_parasitics=not args.no_parasitics)
    fm = cfg.flux_mode
    if fm is None or spec.mode(fm).kind is ModeKind.LINEAR:
        raise ConfigError("config has no flux-tunable mode")
    from .observables import flux_dispersion
    fl = [f for f, _ in pts]
    k = min(_k(args, cfg), 4)
    dims = scans.sweep_dims(spec, fm, fl, k, _tol(args, cfg))
    disp = scans.pmap(lambda f: flux_dispersion(spec, f, mode=fm, dims=dims, k=k), fl,
                      args.threads)
    res = fitting.fit_flux_noise(pts, disp)
    _write_json(args.out, res.to_dict())
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="squidsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="device TOML (or bundled fixture name)")
        p.add_argument("--out", default="-", help="output file (default: stdout)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--tol", type=float, default=None, help="convergence tolerance in GHz")
        p.add_argument("--k", type=int, default=None, help="number of levels to converge")

    p = sub.add_parser("spectrum", help="transition frequencies along a flux grid")
    common(p)
    p.add_argument("--flux", default="0:1:101")
    p.add_argument("--sidebands", action="store_true")
    p.add_argument("--no-readout", action="store_true")
    p.add_argument("--no-parasitics", action="store_true")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("zz-sweep", help="ZZ shift along a flux grid")
    common(p)
    p.add_argument("--flux", default="0.4:0.5:101")
    p.add_argument("--include-readout", action="store_true")
    p.add_argument("--no-parasitics", action="store_true")
    p.set_defaults(func=cmd_zz_sweep)

    p = sub.add_parser("zz-scan2d", help="ZZ shift over IST E_J and E_C ratios")
    common(p)
    p.add_argument("--flux", default="0.5")
    p.add_argument("--ej-ratio", default="0.6:1.2:13")
    p.add_argument("--ec-ratio", default="0.6:1.6:11")
    p.add_argument("--include-readout", action="store_true")
    p.add_argument("--with-parasitics", dest="no_parasitics", action="store_false")
    p.set_defaults(func=cmd_zz_scan2d, no_parasitics=True)

    p = sub.add_parser("perturb", help="closed-form perturbative estimates")
    common(p, config=False)
    p.add_argument("--duffing", nargs="+", metavar="KEY=VAL", help="J a1 a2 delta")
    p.add_argument("--sweetspot", nargs="+", metavar="KEY=VAL", help="EC EJ EL [which]")
    p.add_argument("--sidebands", nargs="+", metavar="KEY=VAL",
                   help="wa wb alpha c3 J [beta Omega wd wa_dressed]")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("fit", help="fit circuit parameters to spectroscopy data")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--free", default="E_C,E_J,E_L")
    p.add_argument("--init", nargs="+", metavar="NAME=VAL")
    p.add_argument("--bounds", nargs="+", metavar="NAME=LO:HI")
    p.add_argument("--max-evals", type=int, default=200)
    p.add_argument("--out-config", default=None, help="write the fitted device TOML here")
    p.add_argument("--no-readout", action="store_true")
    p.add_argument("--no-parasitics", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fluxnoise", help="flux-noise amplitude from Gaussian dephasing rates")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--no-readout", action="store_true")
    p.add_argument("--no-parasitics", action="store_true")
    p.set_defaults(func=cmd_fluxnoise)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FitDiverged as exc:
        print(f"FitDiverged: {exc}", file=sys.stderr)
        return EXIT_FIT
    except SquidsimError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
