"""Command-line entry point.

    tibbm validate-airy --N 20
    tibbm predict --sigma linear2 --T 1000
    tibbm solve-airy --q linear --epsilon 0.01 --t 1 --oracle
    tibbm solve-fkpp --sigma linear2 --T 200,400,800,1600,3200,6400
    tibbm simulate-bbm --sigma linear2 --T 40 --replicas 50000 --prune-depth 10
    tibbm gibbs --t 15 --replicas 200

Options may also come from an INI file (``--config run.ini``) with one
section per subcommand; flags given on the command line win over the file,
which wins over the defaults.  Each run writes its merged options to
``<subcommand>.ini`` in the output directory so it can be replayed.

Exit codes: 0 success, 2 usage or invalid input, 3 I/O, 4 numerical guard.
"""
from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import airy, fkpp, gibbs, io, montecarlo, spectral
from . import sigma as sig
from .offspring import LawError, parse_law

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_GUARD = 0, 2, 3, 4

# options that change where or how fast a run happens, never what it produces
NON_SEMANTIC = {"out", "workers", "report", "config"}


class UsageError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _floor(text: str):
    if str(text).lower() in ("none", "off"):
        return None
    return float(text)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class Opt:
    name: str
    type: object
    default: object = None
    help: str = ""
    required: bool = False
    flag: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


COMMON = [
    Opt("out", str, None, f"output directory (default ${io.ENV_OUTPUT} or ./{io.DEFAULT_OUTPUT})"),
    Opt("report", _bool, False, "also render PNG figures", flag=True),
    Opt("workers", int, 1, "worker processes where the command parallelises"),
]

COMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "validate-airy": ("Airy zeros, normalisers, orthogonality and eigen-residuals", [
        Opt("N", int, 20, "number of modes"),
    ]),
    "predict": ("closed-form predictions v(1), w(1), m'_T and barrier samples", [
        Opt("sigma", str, "linear2", "registry name, spec like linear:a,b, or table file"),
        Opt("T", float, None, "horizon", required=True),
        Opt("K", float, 1.0, "barrier offset"),
        Opt("samples", int, 101, "number of barrier sample times"),
    ]),
    "solve-airy": ("spectral solve of the canonical PDE from a smooth bump", [
        Opt("q", str, "linear", "potential: linear[:a,b] or const[:q0]"),
        Opt("epsilon", float, None, "small parameter", required=True),
        Opt("t", float, 1.0, "final canonical time in (0, 1]"),
        Opt("N", int, airy.DEFAULT_TRUNCATION, "truncation"),
        Opt("xmax", float, 16.0, "field snapshot extent"),
        Opt("oracle", _bool, False, "compare with the finite-difference oracle", flag=True),
    ]),
    "solve-fkpp": ("FKPP fronts and the expansion fit", [
        Opt("sigma", str, "linear2", "variance profile"),
        Opt("T", _floats, None, "comma-separated horizons", required=True),
        Opt("law", str, "2", "offspring law, e.g. 2 or 2:0.5,3:0.5"),
        Opt("dx", float, 0.05, "grid spacing"),
        Opt("dt", float, 0.02, "time step"),
    ]),
    "simulate-bbm": ("pruned Monte Carlo of the inhomogeneous BBM", [
        Opt("sigma", str, "linear2", "variance profile"),
        Opt("T", float, None, "horizon", required=True),
        Opt("replicas", int, 1000, "number of replicas"),
        Opt("prune-depth", float, 10.0, "pruning depth below the leader"),
        Opt("prune", str, "leader", "pruning rule: leader, gamma, leader-scaled, none"),
        Opt("K-list", _floats, [1.0, 2.0, 3.0, 4.0, 5.0], "comma-separated K values"),
        Opt("zeta-K", _floor, None, "K of the zeta barrier for the N_T count (none to skip)"),
        Opt("seed", int, 0, "master seed"),
        Opt("law", str, "2", "offspring law"),
    ]),
    "gibbs": ("derivative Gibbs measure of drifted homogeneous BBM", [
        Opt("t", float, 15.0, "time"),
        Opt("replicas", int, 200, "number of replicas"),
        Opt("seed", int, 0, "master seed"),
        Opt("floor", _floor, -5.0, "pruning floor (none disables)"),
        Opt("law", str, "2", "offspring law"),
        Opt("killed", _bool, False, "absorb at 0 and estimate the second moment", flag=True),
        Opt("x", float, None, "starting point of the killed process"),
        Opt("bins", int, 40, "histogram bins on [0, 4]"),
    ]),
}


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    def semantic(self) -> dict:
        return {"command": self.command, **{k: v for k, v in sorted(self.options.items()) if k not in NON_SEMANTIC}}

    @property
    def seed(self):
        return self.options.get("seed", "none")

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp[self.command] = {k: _ini_value(v) for k, v in self.semantic().items() if k != "command" and v is not None}
        from io import StringIO
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def _ini_value(v) -> str:
    if isinstance(v, list):
        return ",".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tibbm", description="Branching Brownian motion with decreasing variance: predictors, solvers, simulators.")
    p.add_argument("--version", action="version", version=f"tibbm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (desc, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=desc, description=desc, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="INI file with a [%s] section" % name)
        for o in opts + COMMON:
            if o.flag:
                sp.add_argument(f"--{o.name}", dest=o.dest, action="store_true", help=o.help)
            else:
                sp.add_argument(f"--{o.name}", dest=o.dest, type=o.type, help=o.help
                                + ("" if o.default is None else f" (default {o.default})"))
    return p


def _read_file(path: str, command: str, opts: list[Opt]) -> dict:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise UsageError(f"malformed config file {path}: {exc}") from exc
    unknown_sections = [s for s in cp.sections() if s not in COMMANDS]
    if unknown_sections:
        raise UsageError(f"unknown config section(s): {', '.join(unknown_sections)}")
    if not cp.has_section(command):
        return {}
    by_key = {o.dest: o for o in opts + COMMON}
    by_key.update({o.name: o for o in opts + COMMON})
    out = {}
    for key, raw in cp[command].items():
        o = by_key.get(key)
        if o is None:
            raise UsageError(f"unknown key {key!r} in [{command}]")
        try:
            out[o.dest] = o.type(raw)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"bad value for {key!r} in [{command}]: {exc}") from exc
    return out


def parse_config(argv=None) -> RunConfig:
    """Merge defaults, the optional config file, and command-line flags."""
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    opts = COMMANDS[command][1]
    merged = {o.dest: o.default for o in opts + COMMON}
    cfile = args.pop("config", None)
    if cfile:
        merged.update(_read_file(cfile, command, opts))
    merged.update(args)
    missing = [o.name for o in opts if o.required and merged.get(o.dest) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m for m in missing))
    if command == "gibbs":
        if merged["x"] is not None and not merged["killed"]:
            raise UsageError("--x only applies with --killed")
        if merged["killed"] and merged["x"] is None:
            raise UsageError("--killed needs --x")
    return RunConfig(command, merged)


# ---------------------------------------------------------------- commands

class _Writer:
    def __init__(self, rc: RunConfig):
        self.rc = rc
        self.dir = io.output_dir(rc.options.get("out"))
        self.cfg = rc.semantic()
        self.seed = rc.seed
        self.stem = rc.command.replace("-", "_")
        self.paths: list[Path] = []

    def path(self, suffix: str) -> Path:
        return self.dir / f"{self.stem}_{suffix}"

    def json(self, suffix, payload):
        self.paths.append(io.write_json(self.path(suffix), payload, self.cfg, self.seed))

    def csv(self, suffix, columns, rows, notes=None):
        self.paths.append(io.write_csv(self.path(suffix), columns, rows, self.cfg, self.seed, notes))

    def plot(self, suffix, columns, data):
        self.paths.append(io.write_plotfile(self.path(suffix), columns, data, self.cfg, self.seed))

    def figure(self, fn, suffix, *args, **kw):
        if self.rc.options.get("report"):
            from . import plotting
            self.paths.append(getattr(plotting, fn)(*args, path=self.path(suffix), **kw))

    def finish(self):
        ini = self.dir / f"{self.stem}.ini"
        try:
            ini.write_text(f"# {io.header(self.cfg, self.seed)}\n" + self.rc.to_ini())
        except OSError as exc:
            raise io.OutputError(f"cannot write {ini}: {exc}") from exc
        self.paths.append(ini)
        for p in self.paths:
            print(f"wrote {p}")


def run_validate_airy(rc: RunConfig, w: _Writer) -> None:
    rows = airy.validation_table(rc.options["N"])
    cols = ["n", "alpha_n", "abs_ai_prime", "ortho_error", "eigen_residual"]
    w.csv("table.csv", cols, [[r[c] for c in cols] for r in rows])
    print(" ".join(f"{c:>14}" for c in cols))
    for r in rows:
        print(f"{r['n']:>14d} " + " ".join(f"{r[c]:>14.6e}" for c in cols[1:]))
    x = np.linspace(0, 12, 601)
    b = airy.basis(max(4, rc.options["N"]))
    w.figure("airy_modes", "modes.png", x, [b.psi(n, x) for n in range(1, 5)])


def run_predict(rc: RunConfig, w: _Writer) -> None:
    o = rc.options
    profile = sig.make_profile(o["sigma"])
    bundle = sig.m_prime(profile, o["T"])
    t = np.linspace(0.0, o["T"], o["samples"])
    g = np.asarray(sig.gamma(profile, o["T"], t))
    z, note = None, None
    try:
        z = np.asarray(sig.zeta(sig.barrier(profile, o["T"], o["K"], "zeta"), t))
    except sig.SigmaError as exc:
        note = str(exc)
    payload = {
        "v1": bundle.v1, "w1": bundle.w1, "m_prime": bundle.m_prime, "sigma0": bundle.sigma0,
        "sigma1": bundle.sigma1, "J1": float(sig.J_of(profile, 1.0)), "identity_gap": bundle.identity_gap(),
        "gamma_samples": np.column_stack([t, g]),
        "zeta_samples": None if z is None else np.column_stack([t, z]),
    }
    if note:
        payload["zeta_note"] = note
    w.json("summary.json", payload)
    w.plot("barrier.dat", ["t", "gamma", "zeta"], [t, g, z if z is not None else np.full_like(t, np.nan)])
    w.figure("barrier_curves", "barrier.png", t, g, z)
    print(f"v1={bundle.v1:.10g} w1={bundle.w1:.10g} m_prime={bundle.m_prime:.10g}")


def run_solve_airy(rc: RunConfig, w: _Writer) -> None:
    o = rc.options
    if not 0 < o["t"] <= 1:
        raise UsageError("--t must lie in (0, 1]")
    problem = spectral.make_problem(o["q"], o["epsilon"], o["N"])
    st0 = spectral.project_function(spectral.initial_bump, problem)
    st = spectral.evolve(st0, problem, o["t"])
    w.csv("coefficients.csv", ["n", "c_n"], [[n, c] for n, c in enumerate(st.coeffs, start=1)])
    dx = math.sqrt(o["epsilon"]) / 20
    field_ = spectral.bump_field(dx, o["xmax"])
    x = field_.grid
    vals = spectral.evaluate(st, x, problem)
    payload = {"norm_initial": float(st0.norm()), "norm_final": float(st.norm()),
               "max_norm_ratio": st.max_norm_ratio, "log_scale": st.log_scale}
    oracle_vals = None
    if o["oracle"]:
        fd = spectral.fd_oracle(problem, field_, o["t"])
        oracle_vals = fd.values
        payload["oracle_gap"] = spectral.relative_l2_gap(fd.values, vals, x)
        print(f"relative L2 gap to FD oracle: {payload['oracle_gap']:.3e}")
    w.json("summary.json", payload)
    cols, data = ["x", "W"], [x, vals]
    if oracle_vals is not None:
        cols, data = cols + ["W_fd"], data + [oracle_vals]
    w.plot("field.dat", cols, data)
    w.figure("field_snapshot", "field.png", x, vals, oracle=oracle_vals)


def run_solve_fkpp(rc: RunConfig, w: _Writer) -> None:
    o = rc.options
    profile = sig.make_profile(o["sigma"])
    law = parse_law(o["law"])
    grid = fkpp.GridConfig(dx=o["dx"], dt=o["dt"])
    fronts = fkpp.front_sweep(profile, law, o["T"], grid, workers=o["workers"])
    Ts = sorted(fronts)
    mp = [sig.m_prime(profile, T).m_prime if T >= 3 else math.nan for T in Ts]
    w.csv("fronts.csv", ["T", "front_median", "m_prime", "gap"],
          [[T, fronts[T], m, fronts[T] - m] for T, m in zip(Ts, mp)])
    payload = {"fronts": {repr(T): fronts[T] for T in Ts}}
    fitted = None
    try:
        fit = fkpp.fit_expansion(fronts)
        fitted = fkpp.design_matrix(Ts) @ fit.coef
        payload["fit"] = fit.as_dict()
        print(f"fit: v1={fit.v1:.6f} w1={fit.w1:.4f} log_coef={fit.log_coef:.3f}")
    except fkpp.FKPPError as exc:
        payload["fit_note"] = str(exc)
    w.json("summary.json", payload)
    w.plot("expansion_fit.dat", ["T", "front", "fitted", "m_prime"],
           [Ts, [fronts[T] for T in Ts], fitted if fitted is not None else np.full(len(Ts), np.nan), mp])
    w.figure("fkpp_fronts", "fronts.png", Ts, [fronts[T] for T in Ts], mp, fitted=fitted)
    for T, m in zip(Ts, mp):
        print(f"T={T:g} front={fronts[T]:.6f} m_prime={m:.6f}")


def run_simulate_bbm(rc: RunConfig, w: _Writer) -> None:
    o = rc.options
    cfg = montecarlo.MCConfig(sigma=o["sigma"], T=o["T"], delta=o["prune_depth"], law=parse_law(o["law"]).spec(),
                              prune=o["prune"], zeta_K=o["zeta_K"])
    run = montecarlo.run_replicas(cfg, o["replicas"], o["seed"], workers=o["workers"])
    s0 = sig.make_profile(o["sigma"]).sigma0
    payload = {"replicas": o["replicas"], "extinct_fraction": run.extinct_fraction,
               "mean_population": float(run.population.mean()), "reference_slope": -1 / s0}
    if run.ok.any():
        tail = montecarlo.tail_estimate(run, o["K_list"])
        cross = montecarlo.crossing_probability(run, o["K_list"])
        payload.update(median_M=run.median_M(), tail=tail.as_dict(), crossing=cross.as_dict())
        if o["zeta_K"] is not None:
            payload["N_T_mean"] = float(run.NT[run.ok].mean())
        K = np.asarray(o["K_list"])
        ref = tail.p[0] / K[0] * K * np.exp(-(K - K[0]) / s0)
        w.figure("tail_plot", "tail.png", K, tail.p, tail.ci_low, tail.ci_high, ref, label="P(M_T >= median + K)")
        print(f"median M_T={run.median_M():.4f} tail slope={tail.slope:.4f} crossing slope={cross.slope:.4f}")
    w.json("summary.json", payload)
    w.csv("samples.csv", ["replica", "M_T", "excess", "N_T", "population", "pruned", "status"],
          zip(run.replicas, run.M, run.excess, run.NT, run.population, run.pruned, run.status),
          notes="status 0 ok, 1 population cap, 2 extinct; excess = max over grid of X - gamma_T")


def run_gibbs(rc: RunConfig, w: _Writer) -> None:
    o = rc.options
    law = parse_law(o["law"])
    if o["killed"]:
        sm = gibbs.second_moment_killed(o["x"], o["t"], law, o["replicas"], o["seed"])
        w.json("killed.json", sm.as_dict())
        w.csv("killed.csv", ["replica", "D_t"], [(i, d) for i, d in enumerate(sm.samples)])
        print(f"E_x[D_t^2]={sm.mean:.6e} +- {sm.stderr:.2e}  scaled={sm.scaled:.6e}")
        return
    rep = gibbs.gibbs_report(o["t"], o["replicas"], o["seed"], law, o["floor"])
    w.json("summary.json", rep.as_dict())
    w.csv("replicas.csv", ["replica", "D_t", "KS_contrib"], [(i, d, "" if math.isnan(k) else k) for i, (d, k) in enumerate(zip(rep.per_replica_D, rep.per_replica_ks))],
          notes="KS_contrib is the KS distance of the replica's own normalised measure (empty if D_t <= 0)")
    edges = np.linspace(0.0, 4.0, o["bins"] + 1)
    pooled = rep.pooled
    hist, _ = np.histogram(pooled.locations, bins=edges, weights=pooled.weights / pooled.total)
    centers = 0.5 * (edges[1:] + edges[:-1])
    dens = hist / np.diff(edges)
    rho = gibbs.BesselReference.pdf(centers)
    w.plot("histogram.dat", ["center", "pooled_density", "rho"], [centers, dens, rho])
    w.figure("gibbs_histogram", "histogram.png", centers, dens, rho)
    print(f"pooled KS={rep.ks:.4f} (equal-weight {rep.ks_equal:.4f}) degenerate={rep.degenerate}")


RUNNERS = {
    "validate-airy": run_validate_airy,
    "predict": run_predict,
    "solve-airy": run_solve_airy,
    "solve-fkpp": run_solve_fkpp,
    "simulate-bbm": run_simulate_bbm,
    "gibbs": run_gibbs,
}

GUARDS = (spectral.NumericalGuardError, montecarlo.PopulationCapError, gibbs.PopulationCapError)


def main(argv=None) -> int:
    try:
        rc = parse_config(argv)
        w = _Writer(rc)
        RUNNERS[rc.command](rc, w)
        w.finish()
    except SystemExit as exc:
        return int(exc.code or 0)
    except GUARDS as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except io.OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, LawError, ValueError) as exc:
        print(f"usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
