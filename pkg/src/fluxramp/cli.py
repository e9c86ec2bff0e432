"""Command-line front end: four studies, file outputs, frozen exit codes.

Exit codes:  0 ok, 1 numerical failure, 2 validation failure, 3 puncture
event (partial data still written), 4 iteration did not converge,
5 a requested check failed its tolerance.

Every data file is deterministic: floats are written with 17 significant
digits, JSON keys are sorted, and nothing time- or host-dependent goes
into the files, so repeated runs with the same flags are byte-identical.
A simple ``key = value`` config file can seed any long option; explicit
flags win.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__, adiabatic, classical, reduced, spectral
from .errors import (
    BranchError,
    DenominatorVanishes,
    FluxrampError,
    GridTooCoarse,
    NoConvergence,
    NotConverged,
    PunctureHit,
    StepFailure,
    ValidationError,
)

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_VALIDATION = 2
EXIT_PUNCTURE = 3
EXIT_NO_CONVERGENCE = 4
EXIT_CHECK_FAILED = 5


def _fmt(x):
    return f"{float(x):.17g}"


def _write_csv(path, header, columns):
    rows = zip(*columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_vec2(text, name):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValidationError(f"{name} needs two components, got {text!r}")
    return np.array([float(parts[0]), float(parts[1])])


def _parse_list(text):
    return [float(p) for p in text.replace(",", " ").split() if p]


def _apply_config(parser, argv):
    """Seed subcommand defaults from an optional key=value config file.

    Values are coerced with each option's declared type; seeded options
    stop being required, and explicit flags still win because defaults
    only apply when the flag is absent.
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    overrides = {}
    with open(known.config) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line without '=': {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            overrides[key.replace("-", "_")] = value
    actions = {}
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            for sub in act.choices.values():
                for sact in sub._actions:
                    actions.setdefault(sact.dest, []).append(sact)
        else:
            actions.setdefault(act.dest, []).append(act)
    unknown = set(overrides) - set(actions)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    for key, raw in overrides.items():
        for act in actions[key]:
            if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif act.type is not None:
                value = act.type(raw)
            else:
                value = raw
            act.default = value
            act.required = False


# ---------------------------------------------------------------------------
# classical
# ---------------------------------------------------------------------------

def _classical_files(traj, params, out):
    c, v, I1, H = classical.guiding_series(traj)
    K = classical.motion_constant_series(traj)
    _write_csv(out + ".csv",
               ["s", "qx", "qy", "px", "py", "cx", "cy", "H", "K", "I1"],
               [traj.s, traj.q[:, 0], traj.q[:, 1], traj.p[:, 0], traj.p[:, 1],
                c[:, 0], c[:, 1], H, K, I1])
    return K


def cmd_classical(args):
    params = classical.FluxParams(phi=args.phi)
    state = classical.PhaseState(s=args.s_start,
                                 q=_parse_vec2(args.q0, "--q0"),
                                 p=_parse_vec2(args.p0, "--p0"))
    summary = {"phi": args.phi, "s_start": args.s_start, "s_end": args.s_end,
               "tol": args.tol, "puncture_hit": False, "s_hit": None,
               "s0": None, "slope": None, "K_drift": None,
               "a0": None, "drift_angle": None, "H_limit": None,
               "angle_residual": None}
    try:
        traj = classical.integrate(state, args.s_end, params, tol=args.tol,
                                   samples=args.samples)
    except PunctureHit as hit:
        if hit.trajectory is not None and len(hit.trajectory) > 0:
            _classical_files(hit.trajectory, params, args.out)
        summary["puncture_hit"] = True
        summary["s_hit"] = hit.s_hit
        _write_json(args.out + ".json", summary)
        print(f"puncture reached at s = {hit.s_hit}", file=sys.stderr)
        return EXIT_PUNCTURE
    K = _classical_files(traj, params, args.out)
    summary["K_drift"] = float(np.max(np.abs(K - K[0])))
    if len(traj) >= 10:
        fit = classical.center_energy_fit(traj, params)
        summary["s0"] = fit.s0
        summary["slope"] = fit.slope
    span = (min(args.s_start, args.s_end), max(args.s_start, args.s_end))
    if span[1] >= 1e3:
        fwd = classical.asymptotics_forward(traj, params)
        summary.update(a0=fwd.a0, drift_angle=fwd.drift_angle,
                       H_limit=fwd.H_limit, angle_residual=fwd.angle_residual)
    if span[0] <= -1e2:
        bwd = classical.asymptotics_backward(traj, params)
        summary["H_over_abs_s"] = bwd.H_over_abs_s
        summary["q_over_sqrt_abs_s"] = bwd.q_over_sqrt_abs_s
    _write_json(args.out + ".json", summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reduced
# ---------------------------------------------------------------------------

def _reduced_inverse_state(t, x1, x2, phi):
    """A full phase state mapping to (t, x1, x2); the free overall angle is
    fixed by phi2 = 0, and the trajectory constant s0 is gauged to 0 so the
    physical time equals the reduced time."""
    j = np.sqrt(x1 * x1 + (x2 - phi) ** 2 + (phi * t) ** 2)
    i1, i2 = 0.5 * (j + phi * t), 0.5 * (j - phi * t)
    if min(i1, i2) < 0:
        raise ValidationError("reduced state maps to negative action")
    amp = np.sqrt(max(j * j - (phi * t) ** 2, 0.0))
    psi = np.arctan2(x2 - phi, x1) if amp > 0 else 0.0
    rho, sig = np.sqrt(2 * i1), np.sqrt(2 * i2)
    cvec = rho * np.array([np.cos(psi), np.sin(psi)])
    vperp = np.array([sig, 0.0])
    q = cvec + vperp
    v = np.array([0.0, -sig])
    a = classical.vector_potential(t, q, classical.FluxParams(phi))
    return classical.PhaseState(s=t, q=q, p=v + a)


def cmd_reduced(args):
    config = reduced.IntegralEqConfig(s_max=args.s_max, c1=args.c1, c2=args.c2,
                                      picard_tol=args.picard_tol)
    try:
        sol = reduced.picard_solve(config, args.phi, args.s_start,
                                   force_zero_f=args.force_zero_f)
    except NoConvergence as exc:
        print(f"no convergence: {exc} (iterations={exc.iterations}, "
              f"last delta={exc.last_delta})", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    res1, res2 = reduced.residual(sol)
    _write_csv(args.out + ".csv", ["s", "x1", "x2", "residual1", "residual2"],
               [sol.grid, sol.x1, sol.x2, res1, res2])
    summary = {"phi": args.phi, "iters": sol.iterations,
               "tail_estimate": sol.tail_estimate,
               "residual_sup": float(max(np.max(np.abs(res1)), np.max(np.abs(res2)))),
               "c1": args.c1, "c2": args.c2,
               "c1_fit": None, "c2_fit": None, "a0": None}
    if config.s_max >= 1e3 and not args.force_zero_f:
        ext = reduced.extract_constants(sol, args.phi)
        summary.update(c1_fit=ext.c1, c2_fit=ext.c2, a0=ext.a0,
                       H_limit=ext.H_limit,
                       a0_from_amplitude=ext.a0_from_amplitude)
    if args.crosscheck:
        summary["ode_deviation"] = reduced.crosscheck_ode(sol)
        state = _reduced_inverse_state(sol.grid[0], sol.x1[0], sol.x2[0], args.phi)
        traj = classical.integrate(state, float(sol.grid[-1]),
                                   classical.FluxParams(args.phi),
                                   tol=1e-12, samples=2049)
        summary["classical_deviation"] = reduced.crosscheck_ode(
            sol, trajectory=traj, params=classical.FluxParams(args.phi))
    _write_json(args.out + ".json", summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# spectral
# ---------------------------------------------------------------------------

def _check_oracle(s, n_levels):
    par = spectral.SectorParams(s=s, N=n_levels)
    fam = spectral.analytic_spectrum(par)
    fd = spectral.fd_spectrum(par)
    half = slice(0, max(1, n_levels // 2))
    ev_err = float(np.max(np.abs(fd.energies[half] - fam.energies[half])))
    min_overlap = float(np.min(fd.overlaps_with_analytic(fam)[half]))
    return {"eigenvalue_error": ev_err, "min_overlap": min_overlap,
            "pass": bool(ev_err <= 1e-6 and min_overlap >= 1.0 - 1e-6)}


def _check_kernel(s):
    res = spectral.kernel_bound_check(s)
    return {"bound": res.bound, "norm": res.norm, "refined_norm": res.refined_norm,
            "extrapolated": res.extrapolated, "refinement_drift": res.refinement_drift,
            "tail_estimate": res.tail_estimate,
            "pass": bool(res.refined_norm <= res.bound + 1e-6)}


def _check_coupling(s, n_levels):
    fam = spectral.analytic_spectrum(spectral.SectorParams(s=s, N=n_levels))
    mat = spectral.coupling_matrix(fam)
    herm = float(np.linalg.norm(mat.P - mat.P.conj().T, 2))
    diag = float(np.max(np.abs(np.diag(mat.P))))
    ratios = []
    for d in range(1, n_levels // 2 + 1):
        m = np.arange(0, n_levels - d)
        vals = np.abs(mat.P[m, m + d]) * d * ((m + d + 1) / (m + 1)) ** (s / 2.0)
        ratios.extend(vals.tolist())
    ratios = np.asarray(ratios) if ratios else np.array([1.0])
    norm_est = spectral.coupling_norm(
        mat, [max(2, n_levels // 4), max(3, n_levels // 2), n_levels])
    envelope_ok = bool(s == 0.0 or (ratios.min() >= 0.1 and ratios.max() <= 10.0))
    return {"hermiticity_defect": herm, "diagonal_max": diag,
            "envelope_min": float(ratios.min()), "envelope_max": float(ratios.max()),
            "norms": norm_est.norms.tolist(),
            "truncations": norm_est.truncations.tolist(),
            "extrapolated_norm": norm_est.extrapolated,
            "pass": bool(herm <= 1e-10 and diag <= 1e-10 and envelope_ok)}


def _check_gamma(s, n_levels):
    fam = spectral.analytic_spectrum(spectral.SectorParams(s=s, N=n_levels))
    mat = spectral.coupling_matrix(fam)
    gam = spectral.gamma_potential(mat, fam)
    resid = spectral.commutator_residual(gam, mat, fam)
    h = 1e-3
    gp = spectral.gamma_potential(
        spectral.coupling_matrix(spectral.analytic_spectrum(
            spectral.SectorParams(s=s + h, N=n_levels))), fam)
    gm_s = max(s - h, 0.0)
    gm = spectral.gamma_potential(
        spectral.coupling_matrix(spectral.analytic_spectrum(
            spectral.SectorParams(s=gm_s, N=n_levels))), fam)
    dgam = float(np.linalg.norm((gp - gm), 2) / (s + h - gm_s))
    gnorm = float(np.linalg.norm(gam, 2))
    return {"commutator_residual": resid, "gamma_norm": gnorm,
            "gamma_derivative_norm": dgam, "bound_constant": gnorm + dgam,
            "pass": bool(resid <= 1e-10)}


def cmd_spectral(args):
    s_values = _parse_list(args.s)
    if not s_values:
        raise ValidationError("--s needs at least one value")
    fams = [spectral.analytic_spectrum(spectral.SectorParams(s=s, N=args.levels))
            for s in s_values]
    header = ["s"] + [f"E{n}" for n in range(args.levels)]
    columns = [np.array(s_values)] + [
        np.array([f.energies[n] for f in fams]) for n in range(args.levels)]
    _write_csv(args.out + ".csv", header, columns)
    which = args.check
    report = {"s": s_values, "levels": args.levels, "checks": {}}
    ok = True
    for s in s_values:
        entry = {}
        if which in ("oracle", "all"):
            entry["oracle"] = _check_oracle(s, args.levels)
        if which in ("kernel", "all"):
            entry["kernel"] = _check_kernel(s)
        if which in ("coupling", "all"):
            entry["coupling"] = _check_coupling(s, args.levels)
        if which in ("gamma", "all"):
            entry["gamma"] = _check_gamma(s, args.levels)
        ok = ok and all(block["pass"] for block in entry.values())
        report["checks"][_fmt(s)] = entry
    report["pass"] = bool(ok)
    _write_json(args.out + ".json", report)
    if not ok:
        print("one or more spectral checks failed; see JSON report", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# adiabatic
# ---------------------------------------------------------------------------

def cmd_adiabatic(args):
    epsilons = _parse_list(args.epsilons)
    if not epsilons:
        raise ValidationError("--epsilons needs at least one value")
    res = adiabatic.run_sweep(epsilons=epsilons, s_end=args.s_end, N=args.levels,
                              n_samples=args.samples,
                              force_zero_coupling=args.force_zero_coupling)
    n_eps, n_s = res.norm_twisted.shape
    eps_col, s_col, ni, nc, nw, ud = [], [], [], [], [], []
    for i in range(n_eps):
        for k in range(n_s):
            eps_col.append(res.epsilons[i])
            s_col.append(res.s_grid[k])
            ni.append(res.norm_twisted[i, k])
            nc.append(res.norm_c_minus_id[i, k])
            nw.append(res.norm_uw_minus_uad[i, k])
            ud.append(res.unitarity_defect[i])
    _write_csv(args.out + ".csv",
               ["epsilon", "s", "norm_I", "norm_C_minus_id",
                "norm_Uw_minus_Uad", "unitarity_defect"],
               [eps_col, s_col, ni, nc, nw, ud])
    window = (0.8, 1.2)
    summary = {"epsilons": sorted(epsilons, reverse=True), "s_end": args.s_end,
               "levels": args.levels, "exponents": res.exponents,
               "window": list(window),
               "unitarity_defect_max": float(res.unitarity_defect.max())}
    ok = True
    if res.exponents is not None and not args.force_zero_coupling:
        for value in res.exponents.values():
            ok = ok and (window[0] <= value <= window[1])
    summary["pass"] = bool(ok)
    _write_json(args.out + ".json", summary)
    if not ok:
        print("epsilon-scaling exponents left the window; see JSON", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="fluxramp",
        description="Numerical studies of a charged particle in a punctured "
                    "plane with a linearly ramped flux line")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("classical", help="integrate the classical flow")
    pc.add_argument("--config", help="key=value file seeding the options")
    pc.add_argument("--phi", type=float, required=True)
    pc.add_argument("--q0", required=True, help="initial position 'qx,qy'")
    pc.add_argument("--p0", required=True, help="initial momentum 'px,py'")
    pc.add_argument("--s-start", type=float, default=0.0)
    pc.add_argument("--s-end", type=float, required=True)
    pc.add_argument("--tol", type=float, default=1e-10)
    pc.add_argument("--samples", type=int, default=513)
    pc.add_argument("--out", required=True, help="output path prefix")
    pc.set_defaults(func=cmd_classical)

    pr = sub.add_parser("reduced", help="solve the Bessel integral equations")
    pr.add_argument("--config")
    pr.add_argument("--phi", type=float, required=True)
    pr.add_argument("--c1", type=float, default=1.0)
    pr.add_argument("--c2", type=float, default=0.0)
    pr.add_argument("--s-start", type=float, default=10.0)
    pr.add_argument("--s-max", type=float, default=150.0)
    pr.add_argument("--picard-tol", type=float, default=1e-8)
    pr.add_argument("--force-zero-f", action="store_true",
                    help="test hook: drop the nonlinearity")
    pr.add_argument("--crosscheck", action="store_true",
                    help="also compare against direct ODE and flow integration")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_reduced)

    ps = sub.add_parser("spectral", help="spectral family and its checks")
    ps.add_argument("--config")
    ps.add_argument("--s", required=True, help="flux value(s), comma separated")
    ps.add_argument("--levels", type=int, default=spectral.DEFAULT_LEVELS)
    ps.add_argument("--check", choices=["oracle", "kernel", "coupling", "gamma", "all"],
                    default="all")
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_spectral)

    pa = sub.add_parser("adiabatic", help="adiabatic propagator epsilon sweep")
    pa.add_argument("--config")
    pa.add_argument("--s-end", type=float, default=2.0)
    pa.add_argument("--epsilons", default="0.2,0.1,0.05,0.025")
    pa.add_argument("--levels", type=int, default=64)
    pa.add_argument("--samples", type=int, default=41)
    pa.add_argument("--force-zero-coupling", action="store_true",
                    help="test hook: drop the coupling operator")
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=cmd_adiabatic)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        code = args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except PunctureHit as exc:
        print(f"puncture event: {exc}", file=sys.stderr)
        return EXIT_PUNCTURE
    except (StepFailure, BranchError, DenominatorVanishes, GridTooCoarse,
            NotConverged, FluxrampError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


if __name__ == "__main__":
    sys.exit(main())
