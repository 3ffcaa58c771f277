"""Command-line entry point: ``fluxmech <command> [options]``.

Exit codes: 0 success, 1 physics or fit failure, 2 usage error (bad flags,
missing files, malformed config).
"""

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import circuit, coupled, decoherence, dynamics, fluxonium, io, spectra
from .config import ConfigError, load_config
from .fitting import FitError


class UsageError(Exception):
    pass


def _linspace(spec, name):
    try:
        lo, hi, n = spec
        return np.linspace(float(lo), float(hi), int(n))
    except (TypeError, ValueError):
        raise UsageError(f"{name} needs LO HI N") from None


def _out(args, cfg, name):
    base = Path(args.out) if args.out else Path(cfg.run.output_dir)
    return base / name


def _emit(args, cfg, obj, name):
    text = io.dumps(obj)
    print(text)
    if not args.dry_run and name:
        io.write_json(_out(args, cfg, name), obj)


def _resolved(args, cfg, extra=None):
    d = cfg.as_dict()
    d["command"] = " ".join(a for a in (args.command, getattr(args, "sub", None)) if a)
    d["seed"] = args.seed if args.seed is not None else cfg.run.seed
    d["jobs"] = args.jobs
    if extra:
        d["resolved"] = extra
    return d


def _dry(args, cfg, extra=None):
    if args.dry_run:
        print(io.dumps(_resolved(args, cfg, extra)))
        return True
    return False


def _flux(args, cfg):
    return cfg.device.flux_coherent if args.flux is None else args.flux


# -- commands -------------------------------------------------------------

def cmd_spectrum(args, cfg):
    grid = _linspace(args.grid, "--grid")
    dev = cfg.device
    mech = coupled.ModeParams(dev.omega_m0_mhz, dev.g_m_mhz if args.g_m is None else args.g_m)
    if _dry(args, cfg, {"grid": grid, "levels": args.levels, "joint": args.joint,
                        "g_m_mhz": mech.g}):
        return 0
    p = dev.fluxonium
    rows = []
    if args.joint:
        dims = coupled.FockSpaceSpec(cfg.dims.n_qudit_fock, cfg.dims.n_qudit_kept, args.n_phonon)
        header = ["flux_phi0"] + [f"e{k}_mhz" for k in range(1, args.levels + 1)]
        for f in grid:
            e = np.linalg.eigvalsh(coupled.build_joint_hamiltonian(p, f, mech, dims=dims))
            rows.append([f, *((e[1:args.levels + 1] - e[0]) * 1e3)])
    else:
        header = ["flux_phi0"] + [f"f0{k}_mhz" for k in range(1, args.levels + 1)]
        for f in grid:
            s = fluxonium.qudit_spectrum(p, f, args.levels + 1, cfg.dims.n_qudit_fock)
            rows.append([f, *(s.energies[1:] * 1e3)])
    path = io.write_csv(_out(args, cfg, "spectrum.csv"), header, rows)
    print(path)
    return 0


def cmd_fit_tuning(args, cfg):
    header, data = io.read_csv(args.peaks)
    dev = cfg.device
    init = coupled.TuningFitResult(dev.fluxonium, dev.omega_m0_mhz, dev.g_m_mhz)
    override = {}
    if args.override_omega is not None:
        override["omega_m0"] = args.override_omega
    if args.override_g is not None:
        override["g_m"] = args.override_g
    if _dry(args, cfg, {"peaks": str(args.peaks), "n_points": len(data),
                        "other_modes_mhz": args.other_modes, "override": override}):
        return 0
    res = coupled.fit_tuning_spectrum(data[:, :2], init, args.other_modes, n_fock=args.n_fock,
                                      override=override or None)
    _emit(args, cfg, res.as_dict(), "fit_tuning.json")
    return 0


def _chi_at(cfg, flux, n_phonon):
    dev = cfg.device
    dims = coupled.FockSpaceSpec(cfg.dims.n_qudit_fock, cfg.dims.n_qudit_kept, n_phonon)
    js = coupled.joint_system(dev.fluxonium, flux, dev.mechanics, dims=dims)
    exact = coupled.dispersive_shift_exact(js.h, dims)
    pt = {}
    for k in (1, 2, 3):
        try:
            pt[k] = coupled.dispersive_shift_pt(js.spectrum, dev.g_m_mhz, dev.omega_m0_mhz, k).two_chi
        except coupled.ResonanceError:
            pt[k] = np.nan
    return exact, pt


def cmd_chi(args, cfg):
    if args.grid is not None:
        fluxes = _linspace(args.grid, "--grid")
    else:
        fluxes = np.array([_flux(args, cfg)])
    if _dry(args, cfg, {"flux_phi0": fluxes, "n_phonon": args.n_phonon}):
        return 0
    rows = []
    for f in fluxes:
        try:
            exact, pt = _chi_at(cfg, f, args.n_phonon)
        except coupled.ResonanceError as exc:
            if fluxes.size == 1:
                raise
            warnings.warn(f"flux {f:.6f}: {exc}", stacklevel=1)
            exact, pt = np.nan, {1: np.nan, 2: np.nan, 3: np.nan}
        rows.append([f, exact, pt[1], pt[2], pt[3]])
    header = ["flux_phi0", "two_chi_exact_mhz", "two_chi_pt_e_mhz", "two_chi_pt_f_mhz",
              "two_chi_pt_h_mhz"]
    if fluxes.size == 1:
        r = rows[0]
        _emit(args, cfg, dict(zip(header, r)), "chi.json")
    else:
        print(io.write_csv(_out(args, cfg, "chi.csv"), header, rows))
    return 0


def _read_traces(path):
    header, data = io.read_csv(path)
    if data.shape[1] < 2:
        raise UsageError("trace CSV needs freq_mhz, amplitude[, trace_index]")
    if data.shape[1] == 2:
        return [spectra.SpectrumTrace(data[:, 0], data[:, 1])]
    out = []
    for idx in np.unique(data[:, 2]):
        m = data[:, 2] == idx
        out.append(spectra.SpectrumTrace(data[m, 0], data[m, 1]))
    return out


def cmd_numbersplit(args, cfg):
    seed = args.seed if args.seed is not None else cfg.run.seed
    if args.sub == "synth":
        grid = _linspace(args.grid, "--grid")
        extra = {"n_bar": args.n_bar, "alpha_sq": args.alpha_sq, "two_chi_mhz": args.two_chi,
                 "f_eg_mhz": args.f_eg, "widths_mhz": [args.sigma, args.gamma], "snr": args.snr,
                 "traces": args.traces, "drift_steps_rms": args.drift, "seed": seed}
        if _dry(args, cfg, extra):
            return 0
        rng = np.random.default_rng(seed)
        dist = spectra.PhononDistribution.displaced_thermal(args.n_bar, args.alpha_sq, args.n_max)
        clean = spectra.synth_number_splitting(args.f_eg, args.two_chi, dist,
                                               (args.sigma, args.gamma), grid)
        noise = clean.amplitude.max() / args.snr * np.sqrt(args.traces) if args.snr > 0 else 0.0
        step = grid[1] - grid[0]
        offsets = np.cumsum(rng.normal(0, args.drift * step, args.traces))
        rows = []
        for i, d in enumerate(offsets):
            tr = spectra.synth_number_splitting(args.f_eg + d, args.two_chi, dist,
                                                (args.sigma, args.gamma), grid)
            amp = tr.amplitude + rng.normal(0.0, noise, grid.size) if noise else tr.amplitude
            rows.extend([f, a, i] for f, a in zip(grid, amp))
        print(io.write_csv(_out(args, cfg, "numbersplit_synth.csv"),
                           ["freq_mhz", "amplitude", "trace_index"], rows))
        return 0
    traces = _read_traces(args.input)
    if args.sub == "align":
        if _dry(args, cfg, {"input": str(args.input), "traces": len(traces), "bin": args.bin,
                            "window_mhz": args.window}):
            return 0
        out = spectra.drift_align(traces, args.bin, tuple(args.window))
        print(io.write_csv(_out(args, cfg, "numbersplit_aligned.csv"), ["freq_mhz", "amplitude"],
                           zip(out.freqs, out.amplitude)))
        _emit(args, cfg, out.meta, "numbersplit_align.json")
        return 0
    # fit
    init = {"f_eg": args.f_eg, "two_chi": args.two_chi, "sigma": args.sigma, "gamma": args.gamma}
    if _dry(args, cfg, {"input": str(args.input), "n_peaks": args.n_peaks, "init": init}):
        return 0
    if len(traces) > 1:
        if args.window is None:
            raise UsageError("several traces in the input: give --window to align them first")
        trace = spectra.drift_align(traces, args.bin, tuple(args.window))
    else:
        trace = traces[0]
    peaks, dist = spectra.fit_number_splitting(trace, args.n_peaks, init)
    report = {
        "two_chi_mhz": peaks.two_chi, "f_eg_mhz": peaks.centers[0],
        "centers_mhz": peaks.centers, "sigmas_mhz": peaks.sigmas, "gammas_mhz": peaks.gammas,
        "areas": peaks.areas, "baseline": peaks.baseline,
        "n_bar_th": dist.n_bar_th, "alpha_sq": dist.alpha_sq, "mean_n": dist.mean_n,
        "p_n": dist.p[:args.n_peaks],
        "errors": {k: v for k, v in {**peaks.errors, **dist.errors}.items() if k != "cov"},
        "flags": sorted(set(peaks.flags) | set(dist.flags)),
    }
    _emit(args, cfg, report, "numbersplit_fit.json")
    return 0


def cmd_circuit(args, cfg):
    path = Path(args.network)
    if not path.is_file():
        raise FileNotFoundError(f"network file not found: {path}")
    try:
        net = circuit.CapacitanceNetwork.parse(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    coords = []
    for c in args.coord:
        try:
            name, a, b = c.split(":")
            coords.append((name, int(a), int(b)))
        except ValueError:
            raise UsageError(f"--coord expects NAME:A:B, got {c!r}") from None
    elim = [[int(x) for x in e.split(",")] for e in args.eliminate]
    if _dry(args, cfg, {"network": str(path), "coordinates": coords, "eliminate": elim}):
        return 0
    for sub in elim:
        net = circuit.eliminate_free_node(net, sub)
    red = circuit.reduce_to_dynamical(net, coords)
    names = red.coordinates
    report = {"coordinates": names, "inv_cap_per_ff": red.inv_cap,
              "e_c_ghz": {n: red.e_c(n) for n in names},
              "beta": {f"{a}{b}": red.beta(a, b) for i, a in enumerate(names) for b in names[i + 1:]}}
    if args.f_mode is not None and "q" in names:
        report["g_mhz"] = {n: red.coupling_rate(args.f_mode, "q", n) for n in names if n != "q"}
    _emit(args, cfg, report, "circuit.json")
    return 0


def _model(cfg, flux):
    dev = cfg.device
    rates = dynamics.RateSet.from_device(t1m=dev.t1m_us[0], n_th_m=dev.n_th_m, t1q=dev.t1q_us,
                                         t2q=dev.t2q_us, temp=dev.temp_eff_k,
                                         f_q_ghz=fluxonium.transition_frequency(
                                             dev.fluxonium, flux, (0, 1), cfg.dims.n_qudit_fock))
    return dynamics.build_lindblad_model(dev.fluxonium, flux, dev.mechanics, rates, cfg.dims), rates


def cmd_sim(args, cfg):
    flux = cfg.device.flux_swap if args.flux is None else args.flux
    pulse = cfg.pulse if args.f_mod is None else cfg.pulse.with_(f_mod=args.f_mod)
    if args.v0 is not None:
        pulse = pulse.with_(v0=args.v0)
    if args.sub == "rabi":
        v0s = _linspace(args.v0_grid, "--v0-grid")
        fms = _linspace(args.fmod_grid, "--fmod-grid")
        if _dry(args, cfg, {"flux_phi0": flux, "v0_grid": v0s, "f_mod_grid": fms,
                            "dt_ns": args.dt, "jobs": args.jobs}):
            return 0
        model, _ = _model(cfg, flux)
        sweep = dynamics.rabi_amplitude_sweep(model, pulse, v0s, fms, cfg.device.temp_eff_k,
                                              args.dt, args.jobs)
        rows = [[v, f, sweep.signal[i, j], sweep.p1[i, j], sweep.qubit[i, j, 1]]
                for i, v in enumerate(v0s) for j, f in enumerate(fms)]
        print(io.write_csv(_out(args, cfg, "rabi.csv"),
                           ["v0_mvpp", "f_mod_mhz", "signal", "p1", "p_e"], rows), file=sys.stderr)
        summary = sweep.summary(pulse.f_mod)
        summary["ridge_f_mod_mhz"] = sweep.ridge().tolist()
        _emit(args, cfg, summary, "rabi_summary.json")
        print(f"elapsed {sweep.elapsed_s:.1f} s", file=sys.stderr)
        return 0
    delays = _linspace(args.delays, "--delays")
    prep = "pi" if args.sub == "t1m" else "pi_half"
    recovery = "identity" if args.sub == "t1m" else "pi_half"
    if _dry(args, cfg, {"flux_phi0": flux, "pulse": pulse.__dict__, "delays_us": delays,
                        "prep": prep, "recovery": recovery}):
        return 0
    model, _ = _model(cfg, flux)
    res = dynamics.swap_sequence(model, pulse, delays, prep, recovery,
                                 temp=cfg.device.temp_eff_k, dt=args.dt)
    rows = [[d, res.signal[j], res.mean_p_e[j], res.phonon_before_return[j, 1]]
            for j, d in enumerate(delays)]
    print(io.write_csv(_out(args, cfg, f"{args.sub}.csv"),
                       ["delay_us", "signal", "p_e", "p1_before_return"], rows), file=sys.stderr)
    summary = {"delays_us": delays, "signal": res.signal, "p_e": res.mean_p_e}
    if args.sub == "t1m" and delays.size >= 8:
        try:
            fit = decoherence.stretched_exp_fit(delays, res.mean_p_e, offset=True)
            summary["t1m_fit_us"] = fit.one_over_e
        except FitError as exc:
            summary["t1m_fit_error"] = str(exc)
    _emit(args, cfg, summary, f"{args.sub}_summary.json")
    return 0


def cmd_decohere(args, cfg):
    dev = cfg.device
    if args.sub == "1f":
        noise = decoherence.OneOverFNoise(args.a_phi, 1.0, 2 * np.pi / args.t_exp, args.t_ref * 1e-6)
        if _dry(args, cfg, {"noise": noise.__dict__, "slopes_ghz_per_phi0": args.slope}):
            return 0
        rows = []
        for s in args.slope:
            t0 = decoherence.dephasing_time_1f(noise, s, 0)
            t1 = decoherence.dephasing_time_1f(noise, s, 1)
            rows.append({"slope_ghz_per_phi0": s, "t_phi_ramsey_us": t0, "t_phi_echo_us": t1,
                         "ratio": t1 / t0})
        _emit(args, cfg, {"results": rows}, "decohere_1f.json")
        return 0
    if args.sub == "thermal":
        t1m = dev.t1m_us[0] if args.t1m is None else args.t1m
        n_bar = dev.n_th_m if args.n_bar is None else args.n_bar
        if _dry(args, cfg, {"t1m_us": t1m, "two_chi_mhz": args.two_chi, "n_bar": n_bar}):
            return 0
        rate = decoherence.thermal_dephasing_rate(1.0 / t1m, args.two_chi / 2, n_bar)
        _emit(args, cfg, {"gamma_per_us": rate, "one_over_gamma_us": 1 / rate if rate else None,
                          "t1m_us": t1m, "two_chi_mhz": args.two_chi, "n_bar": n_bar},
              "decohere_thermal.json")
        return 0
    if args.sub == "coop":
        vals = {"two_chi_mhz": args.two_chi, "t1q_us": dev.t1q_us, "t1m1_us": dev.t1m_us[0],
                "t2q_us": dev.t2q_us, "t2m_us": dev.t2m_us}
        if _dry(args, cfg, vals):
            return 0
        c1, c2 = decoherence.cooperativities(args.two_chi, dev.t1q_us, dev.t1m_us[0], dev.t2q_us,
                                             dev.t2m_us)
        _emit(args, cfg, {**vals, "c_t1": c1, "c_t2": c2,
                          "t_phi_echo_us": decoherence.pure_dephasing(dev.t2eq_us, dev.t1q_us)},
              "decohere_coop.json")
        return 0
    # fit
    header, data = io.read_csv(args.input)
    if _dry(args, cfg, {"input": str(args.input), "model": args.model, "n_samples": len(data)}):
        return 0
    t, y = data[:, 0], data[:, 1]
    if args.model in ("stretched", "stretched-free"):
        fit = decoherence.stretched_exp_fit(t, y, constrained=args.model == "stretched",
                                            offset=args.offset)
    else:
        fit = decoherence.multi_exp_fit(t, y, 3, offset=args.offset)
    _emit(args, cfg, {"times_us": fit.times, "amps": fit.amps, "stretch_n": fit.stretch_n,
                      "one_over_e_us": fit.one_over_e, "offset": fit.offset,
                      "errors": fit.errors, "flags": list(fit.flags)}, "decohere_fit.json")
    return 0


# -- parser ---------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file layered over the shipped defaults")
    common.add_argument("--out", help="output directory (default: [run] output_dir)")
    common.add_argument("--seed", type=int, help="random seed (default: [run] seed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for grid commands")
    common.add_argument("--dry-run", action="store_true", help="print resolved parameters and exit")

    ap = argparse.ArgumentParser(prog="fluxmech", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="qudit or joint tuning curves")
    p.add_argument("--grid", nargs=3, default=(0.45, 0.55, 101), metavar=("LO", "HI", "N"))
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--joint", action="store_true", help="dressed joint levels instead of bare qudit")
    p.add_argument("--n-phonon", type=int, default=4)
    p.add_argument("--g-m", type=float, help="override the mechanical coupling (MHz)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("fit-tuning", parents=[common], help="JC fit of qubit-like peaks")
    p.add_argument("--peaks", required=True, help="CSV flux_phi0,freq_mhz")
    p.add_argument("--other-modes", type=float, nargs="*", default=())
    p.add_argument("--override-omega", type=float)
    p.add_argument("--override-g", type=float)
    p.add_argument("--n-fock", type=int, default=60)
    p.set_defaults(func=cmd_fit_tuning)

    p = sub.add_parser("chi", parents=[common], help="exact and perturbative 2 chi")
    p.add_argument("--flux", type=float)
    p.add_argument("--grid", nargs=3, metavar=("LO", "HI", "N"))
    p.add_argument("--n-phonon", type=int, default=6)
    p.set_defaults(func=cmd_chi)

    p = sub.add_parser("numbersplit", help="number-splitting synthesis, alignment and fits")
    ns = p.add_subparsers(dest="sub", required=True)
    for name in ("synth", "fit", "align"):
        q = ns.add_parser(name, parents=[common])
        q.add_argument("--f-eg", type=float, default=815.0)
        q.add_argument("--two-chi", type=float, default=2.23)
        q.add_argument("--sigma", type=float, default=0.3)
        q.add_argument("--gamma", type=float, default=0.3)
        q.add_argument("--bin", type=int, default=2)
        q.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
        q.set_defaults(func=cmd_numbersplit)
        if name == "synth":
            q.add_argument("--grid", nargs=3, default=(811.0, 831.0, 401), metavar=("LO", "HI", "N"))
            q.add_argument("--n-bar", type=float, default=0.57)
            q.add_argument("--alpha-sq", type=float, default=0.0)
            q.add_argument("--n-max", type=int, default=5)
            q.add_argument("--snr", type=float, default=20.0)
            q.add_argument("--traces", type=int, default=20)
            q.add_argument("--drift", type=float, default=1.0, help="random-walk drift, grid steps")
        else:
            q.add_argument("--input", required=True)
            q.add_argument("--n-peaks", type=int, default=6)
        if name == "align":
            q.set_defaults(window=None)

    p = sub.add_parser("circuit", help="circuit reduction")
    cs = p.add_subparsers(dest="sub", required=True)
    q = cs.add_parser("reduce", parents=[common])
    q.add_argument("--network", required=True)
    q.add_argument("--coord", action="append", default=[], help="NAME:A:B, repeatable")
    q.add_argument("--eliminate", action="append", default=[], help="comma-separated node set")
    q.add_argument("--f-mode", type=float, help="mode frequency (MHz) for coupling rates")
    q.set_defaults(func=cmd_circuit)

    p = sub.add_parser("sim", help="Lindblad pulse simulations")
    ss = p.add_subparsers(dest="sub", required=True)
    for name in ("rabi", "t1m", "t2m"):
        q = ss.add_parser(name, parents=[common])
        q.add_argument("--flux", type=float, help="static bias (default: swap bias)")
        q.add_argument("--f-mod", type=float)
        q.add_argument("--v0", type=float)
        q.add_argument("--dt", type=float, default=0.1, help="step during pulses (ns)")
        q.set_defaults(func=cmd_sim)
        if name == "rabi":
            q.add_argument("--v0-grid", nargs=3, default=(0.0, 600.0, 40), metavar=("LO", "HI", "N"))
            q.add_argument("--fmod-grid", nargs=3, default=(145.0, 175.0, 40),
                           metavar=("LO", "HI", "N"))
        else:
            q.add_argument("--delays", nargs=3, default=(0.0, 4.0, 21), metavar=("LO", "HI", "N"))

    p = sub.add_parser("decohere", help="dephasing models and decay fits")
    ds = p.add_subparsers(dest="sub", required=True)
    q = ds.add_parser("1f", parents=[common])
    q.add_argument("--slope", type=float, nargs="+", default=[10.67, 11.34])
    q.add_argument("--a-phi", type=float, default=1.0, help="uPhi0/sqrt(Hz)")
    q.add_argument("--t-ref", type=float, default=5.0, help="us")
    q.add_argument("--t-exp", type=float, default=600.0, help="acquisition time, s")
    q = ds.add_parser("thermal", parents=[common])
    q.add_argument("--two-chi", type=float, default=-11.2)
    q.add_argument("--t1m", type=float)
    q.add_argument("--n-bar", type=float)
    q = ds.add_parser("coop", parents=[common])
    q.add_argument("--two-chi", type=float, default=1.67)
    q = ds.add_parser("fit", parents=[common])
    q.add_argument("--input", required=True, help="CSV delay_us,signal")
    q.add_argument("--model", choices=("stretched", "stretched-free", "exp3"), default="stretched")
    q.add_argument("--offset", action="store_true")
    for q in ds.choices.values():
        q.set_defaults(func=cmd_decohere)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.jobs < 1:
        ap.error("--jobs must be >= 1")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"fluxmech: error: {exc}", file=sys.stderr)
        return 2
    except (FitError, ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        where = type(exc).__module__.replace("fluxmech.", "")
        print(f"fluxmech: {where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
