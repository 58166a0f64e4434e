"""Command-line entry point ``qnd``: figure data, POVM sweeps and validation suites."""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .dynamics import (analytic_photon_mean, analytic_photon_variance, evolve_closed_form,
                       reduce_light, spin_trajectory)
from .errors import (CutoffLeakageError, ImpossibleOutcomeError, IntegrationError, InvalidInputError,
                     NoPeakError, UnsupportedInputError)
from .measurement import (DetectionRecord, MeasurementParams, apply_povm, completeness_check,
                          conditional_probability_density, gaussian_summary, m_marginal,
                          state_prep_superoperator)
from .quasiprob import SphereGrid, q_function, wigner_function
from .spin_algebra import AtomState, m_values, spin_coherent_state, thermal_state

TOOL = "qnd-povm-lab"
COMMANDS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "povm", "validate")
KEYS = ("alpha-sq", "chi-sq", "R", "tau", "J", "N", "theta", "phi", "E0", "nc", "nd", "phi-p",
        "u", "v", "points", "state", "grid-theta", "grid-phi", "out", "format", "config")

# Per-command defaults; the R lists for fig5-fig7 are chosen to make the trends with R visible.
DEFAULTS = {
    "fig2": {"alpha-sq": "50", "J": "20", "R": "0,0.001", "theta": str(math.pi / 2), "phi": "0",
             "tau": f"0:{2 * math.pi}", "points": "401"},
    "fig3": {"alpha-sq": "50", "J": "20", "R": "0.001", "theta": str(math.pi / 2), "phi": "0",
             "tau": f"0:{2 * math.pi}", "points": "201"},
    "fig4": {"alpha-sq": "20", "J": "10", "R": "0,0.02", "tau": str(math.pi / 20), "E0": "1e-12",
             "theta": str(math.pi / 2), "phi": "0", "grid-theta": "181", "grid-phi": "360"},
    "fig5": {"alpha-sq": "20", "chi-sq": "20", "N": "20", "R": "0,0.005,0.02", "tau": str(math.pi / 20),
             "nc": "20,10", "nd": "20,40", "E0": "1e-12", "theta": str(math.pi / 2), "phi": "0"},
    "fig6": {"alpha-sq": "20", "chi-sq": "20", "N": "20", "R": "0,0.03,0.06,0.1", "tau": str(math.pi / 2),
             "nc": "20", "nd": "20", "theta": str(math.pi / 2), "phi": "0",
             "grid-theta": "181", "grid-phi": "360"},
    "fig7": {"alpha-sq": "20", "chi-sq": "20", "N": "20", "R": "0,0.03,0.06,0.1", "tau": str(math.pi / 2),
             "nc": "20", "nd": "20", "theta": str(math.pi / 2), "phi": "0"},
    "povm": {"alpha-sq": "20", "chi-sq": "20", "N": "20", "R": "0", "tau": str(math.pi / 20),
             "nc": "20", "nd": "20", "theta": str(math.pi / 2), "phi": "0", "E0": "1e-12",
             "state": "coherent", "format": "json"},
    "validate": {},
}


class UsageError(Exception):
    pass


# -- configuration ----------------------------------------------------------------

def read_config(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in KEYS or k == "config":
                raise UsageError(f"{path}:{lineno}: unknown key {k!r}")
            out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qnd", description="QND measurement with spontaneous emission.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("suite", nargs="?", help="validation suite: oracle, povm, adiabatic or all")
    for k in KEYS:
        ap.add_argument(f"--{k}", dest=k.replace("-", "_"), default=None)
    ap.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    return ap


def resolve(ns: argparse.Namespace) -> dict[str, str]:
    """CLI flags override the config file, which overrides the command defaults."""
    cfg = dict(DEFAULTS[ns.command])
    if ns.config:
        cfg.update(read_config(ns.config))
    for k in KEYS:
        v = getattr(ns, k.replace("-", "_"))
        if v is not None:
            cfg[k] = v
    cfg.pop("config", None)
    return cfg


def _float(cfg, key):
    try:
        return float(cfg[key])
    except KeyError:
        raise UsageError(f"missing --{key}") from None
    except ValueError:
        raise UsageError(f"--{key} expects a number, got {cfg[key]!r}") from None


def _int(cfg, key):
    x = _float(cfg, key)
    if x != int(x):
        raise UsageError(f"--{key} expects an integer")
    return int(x)


def _list(cfg, key, cast=float):
    try:
        return [cast(s) for s in str(cfg[key]).split(",") if s.strip()]
    except KeyError:
        raise UsageError(f"missing --{key}") from None
    except ValueError:
        raise UsageError(f"--{key} expects a comma-separated list, got {cfg[key]!r}") from None


def _tau_grid(cfg):
    spec = str(cfg["tau"])
    if ":" in spec:
        lo, hi = (float(s) for s in spec.split(":"))
        return np.linspace(lo, hi, _int(cfg, "points"))
    return np.array(_list(cfg, "tau"))


def _spin(cfg):
    if "J" in cfg:
        return _float(cfg, "J")
    return _int(cfg, "N") / 2


def _coherent(cfg, J=None, N=None):
    J = _spin(cfg) if J is None else J
    st = spin_coherent_state(J, _float(cfg, "theta"), _float(cfg, "phi"))
    return AtomState(st.sectors, N if N is not None else int(round(2 * J)))


def _records(cfg):
    if "u" in cfg and "v" in cfg:
        us, vs = _list(cfg, "u"), _list(cfg, "v")
        if len(us) != len(vs):
            raise UsageError("--u and --v lists must have equal length")
        return [DetectionRecord.from_uv(u, v) for u, v in zip(us, vs)]
    ncs, nds = _list(cfg, "nc", int), _list(cfg, "nd", int)
    if len(ncs) != len(nds):
        raise UsageError("--nc and --nd lists must have equal length")
    return [DetectionRecord(a, b) for a, b in zip(ncs, nds)]


def _params(cfg, R, tau=None):
    return MeasurementParams(math.sqrt(_float(cfg, "alpha-sq")), math.sqrt(_float(cfg, "chi-sq")), R,
                             _float(cfg, "tau") if tau is None else tau, float(cfg.get("phi-p", 0.0)))


# -- output -----------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_table(cmd, columns, rows, cfg, out):
    if cfg.get("format", "csv") == "json":
        doc = {"params": {k: v for k, v in sorted(cfg.items()) if k != "out"},
               "results": [dict(zip(columns, r)) for r in rows], "version": __version__}
        out.write(json.dumps(doc, default=_json_default, indent=1) + "\n")
        return
    out.write(f"# {TOOL} {__version__} {cmd}\n")
    out.write(",".join(columns) + "\n")
    for r in rows:
        out.write(",".join(fmt(x) for x in r) + "\n")


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    raise TypeError(type(x))


# -- figure commands --------------------------------------------------------------

def cmd_fig2(cfg):
    J = _spin(cfg)
    rho = _coherent(cfg, J)
    alpha0 = math.sqrt(_float(cfg, "alpha-sq"))
    taus = _tau_grid(cfg)
    rows = []
    for R in _list(cfg, "R"):
        tr = spin_trajectory(rho, alpha0, R, taus)
        for i, t in enumerate(taus):
            rows.append((R, t, tr["jx"][i], tr["jy"][i], tr["jz"][i], tr["djx"][i], tr["djy"][i], tr["djz"][i]))
    return ["R", "tau", "jx", "jy", "jz", "djx", "djy", "djz"], rows


def cmd_fig3(cfg):
    J = _spin(cfg)
    theta = _float(cfg, "theta")
    rho = _coherent(cfg, J)
    alpha0 = math.sqrt(_float(cfg, "alpha-sq"))
    rows = []
    for R in _list(cfg, "R"):
        for t in _tau_grid(cfg):
            light = reduce_light(evolve_closed_form(rho, alpha0, R, t))
            rows.append((R, t, light.mean_photon_number(), light.photon_number_variance(),
                         analytic_photon_mean(alpha0, J, R, t, theta),
                         analytic_photon_variance(alpha0, J, R, t, theta)))
    return ["R", "tau", "mean_exact", "variance_exact", "mean_analytic", "variance_analytic"], rows


def _grid(cfg):
    return SphereGrid.make(_int(cfg, "grid-theta"), _int(cfg, "grid-phi"))


def cmd_fig4(cfg):
    J = _spin(cfg)
    N = int(round(2 * J))
    grid = _grid(cfg)
    states = {"coherent": _coherent(cfg, J), "thermal": thermal_state(N, _float(cfg, "E0"))}
    rows = []
    for R in _list(cfg, "R"):
        p = MeasurementParams(math.sqrt(_float(cfg, "alpha-sq")), 1.0, R, _float(cfg, "tau"))
        for name, rho in states.items():
            q = q_function(state_prep_superoperator(rho, p), grid)
            for i, th in enumerate(grid.theta):
                for j, ph in enumerate(grid.phi):
                    rows.append((name, R, th, ph, q[i, j]))
    return ["state", "R", "theta", "phi", "q"], rows


def cmd_fig5(cfg):
    N = _int(cfg, "N")
    states = {"coherent": _coherent(cfg, N / 2, N), "thermal": thermal_state(N, _float(cfg, "E0"))}
    rows = []
    for rec in _records(cfg):
        for R in _list(cfg, "R"):
            p = _params(cfg, R)
            for name, rho in states.items():
                try:
                    dens = conditional_probability_density(rho, rec, p)
                except ImpossibleOutcomeError:
                    continue
                for J, d in dens.items():
                    for m, w in zip(m_values(J), d):
                        rows.append((name, rec.n_c, rec.n_d, R, J, m, w))
    return ["state", "nc", "nd", "R", "J", "m", "probability"], rows


def _cat_states(cfg):
    N = _int(cfg, "N")
    rho = _coherent(cfg, N / 2, N)
    rec = _records(cfg)[0]
    for R in _list(cfg, "R"):
        yield R, apply_povm(rho, rec, _params(cfg, R))[0]


def cmd_fig6(cfg):
    grid = _grid(cfg)
    rows = []
    for R, st in _cat_states(cfg):
        w = wigner_function(st, grid)
        for i, th in enumerate(grid.theta):
            for j, ph in enumerate(grid.phi):
                rows.append((R, th, ph, w[i, j]))
    return ["R", "theta", "phi", "wigner"], rows


def cmd_fig7(cfg):
    rows = []
    for R, st in _cat_states(cfg):
        ms, w = m_marginal({J: np.real(d) for J, d in st.diagonal().items()})
        rows.extend((R, m, x) for m, x in zip(ms, w))
    return ["R", "m", "probability"], rows


# -- povm -------------------------------------------------------------------------

def _summary_dict(rec, p):
    try:
        g = gaussian_summary(rec, p)
    except (NoPeakError, InvalidInputError) as exc:
        return None, str(exc)
    c = g.sigma_tilde_sq
    return {"m0": g.m0, "xi": g.xi, "m_tilde0": g.m_tilde0, "sigma_sq": g.sigma_sq,
            "sigma_R_sq": None if math.isinf(g.sigma_R_sq) else g.sigma_R_sq,
            "sigma_tilde_sq": [c.real, c.imag], "sigma_eff": g.sigma_eff,
            "y": None if math.isinf(g.y) else g.y, "valid": g.valid}, None


def cmd_povm(cfg):
    N = _int(cfg, "N")
    kind = cfg.get("state", "coherent")
    if kind == "coherent":
        rho = _coherent(cfg, N / 2, N)
    elif kind == "thermal":
        rho = thermal_state(N, _float(cfg, "E0"))
    else:
        raise UsageError("--state must be coherent or thermal")
    results = []
    for rec in _records(cfg):
        for R in _list(cfg, "R"):
            p = _params(cfg, R)
            entry = {"nc": rec.n_c, "nd": rec.n_d, "u": rec.u, "v": rec.v, "R": R, "tau": p.tau}
            try:
                st, prob = apply_povm(rho, rec, p)
            except ImpossibleOutcomeError as exc:
                entry.update(probability=None, density=None, marginal=None, std=None, reason=str(exc))
            else:
                dens = {J: np.clip(np.real(d), 0, None) for J, d in st.diagonal().items()}
                ms, w = m_marginal(dens)
                mu = float(np.sum(ms * w))
                entry.update(
                    probability=prob,
                    density=[{"J": J, "m": float(m), "p": float(x)} for J, d in dens.items()
                             for m, x in zip(m_values(J), d)],
                    marginal=[{"m": float(m), "p": float(x)} for m, x in zip(ms, w)],
                    std=float(np.sqrt(max(np.sum(ms * ms * w) - mu * mu, 0.0))),
                    argmax=float(ms[np.argmax(w)]), reason=None)
            entry["gaussian"], entry["gaussian_reason"] = _summary_dict(rec, p)
            results.append(entry)
    return results


# -- validate ---------------------------------------------------------------------

def _check(report, name, value, tol):
    ok = bool(value < tol)
    report.append((name, float(value), tol, ok))


def validate_oracle(report):
    from .dynamics import atom_matrix_at, reduce_atoms
    from .oracle import FockConfig, lindblad_rk4, matrix_element_ode

    rho = spin_coherent_state(2, math.pi / 2, 0)
    for R in (0.0, 0.05, 0.2):
        cf = atom_matrix_at(rho, 2.0, R, 1.0).matrix
        fock = lindblad_rk4(rho, 2.0, R, 1.0, FockConfig(cutoff=20, dt=1e-3))
        ode = reduce_atoms(matrix_element_ode(rho, 2.0, R, 1.0)).matrix
        _check(report, f"closed form vs Fock RK4, R={R}", np.max(np.abs(fock.reduced_atom() - cf)), 1e-6)
        _check(report, f"closed form vs matrix-element ODE, R={R}", np.max(np.abs(ode - cf)), 1e-6)
        _check(report, f"Fock RK4 trace drift, R={R}", fock.max_trace_drift, 1e-8)


def validate_povm(report):
    p = MeasurementParams(2.0, 2.0, 0.05, 0.3)
    _check(report, "completeness J=4 alpha=chi=2 tau=0.3 R=0.05 cutoff=32", completeness_check(p, 4, 32), 1e-6)
    _check(report, "completeness tau=0 R=0", completeness_check(MeasurementParams(2.0, 2.0, 0, 0), 4, 32), 1e-10)


def validate_adiabatic(report):
    from .oracle import TwoLevelParams, adiabatic_alpha, stationary_coherences, two_level_trajectories

    p = TwoLevelParams(omega=0.5, delta=100.0, gamma=1.0, alpha0=1.0)
    tr = two_level_trajectories(p, 3 / p.gamma_eff, 0.01)
    ad = adiabatic_alpha(tr.t, p)
    _check(report, "adiabatic |alpha| relative error", np.max(np.abs(np.abs(tr.alpha) / np.abs(ad) - 1)), 0.01)
    _check(report, "adiabatic alpha phase error (rad)", np.max(np.abs(np.angle(tr.alpha / ad))), 0.02)
    late = tr.t > 20 / p.gamma
    _, _, pee = stationary_coherences(p, tr.alpha[late], tr.p_gg[late])
    _check(report, "stationary P_ee relative error", np.max(np.abs(tr.p_ee[late] / pee - 1)), 0.02)


SUITES = {"oracle": validate_oracle, "povm": validate_povm, "adiabatic": validate_adiabatic}


def cmd_validate(suite, out):
    suite = suite or "all"
    names = list(SUITES) if suite == "all" else [suite]
    if any(n not in SUITES for n in names):
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}, all")
    report = []
    for n in names:
        t = time.perf_counter()
        SUITES[n](report)
        out.write(f"# suite {n} ({time.perf_counter() - t:.1f} s)\n")
    for name, value, tol, ok in report:
        out.write(f"{'PASS' if ok else 'FAIL'}  {name}: {value:.3e} (tolerance {tol:g})\n")
    return all(ok for *_, ok in report)


# -- entry point ------------------------------------------------------------------

FIGURES = {"fig2": cmd_fig2, "fig3": cmd_fig3, "fig4": cmd_fig4, "fig5": cmd_fig5,
           "fig6": cmd_fig6, "fig7": cmd_fig7}


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    ns = build_parser().parse_args(argv)
    try:
        cfg = resolve(ns)
        if cfg.get("format", "csv") not in ("csv", "json"):
            raise UsageError("--format must be csv or json")
        buf = io.StringIO()
        code = 0
        if ns.command == "validate":
            code = 0 if cmd_validate(ns.suite, buf) else 1
        elif ns.command == "povm":
            doc = {"params": {k: v for k, v in sorted(cfg.items()) if k != "out"},
                   "results": cmd_povm(cfg), "version": __version__}
            buf.write(json.dumps(doc, indent=1) + "\n")
        else:
            if ns.suite is not None:
                raise UsageError(f"{ns.command} takes no positional argument")
            columns, rows = FIGURES[ns.command](cfg)
            write_table(ns.command, columns, rows, cfg, buf)
    except (UsageError, InvalidInputError, UnsupportedInputError, NoPeakError, OSError) as exc:
        print(f"qnd: error: {exc}", file=sys.stderr)
        return 2
    except (CutoffLeakageError, IntegrationError) as exc:
        print(f"qnd: validation error: {exc}", file=sys.stderr)
        return 1
    if cfg.get("out"):
        with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(buf.getvalue())
    else:
        stdout.write(buf.getvalue())
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
