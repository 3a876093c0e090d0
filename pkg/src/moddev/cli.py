"""Command-line front end.

Subcommands::

    moddev example NAME       full pipeline on a built-in scenario
    moddev rate               J, J_gamma and contracted rates for given vectors
    moddev simulate NAME      dump a path ensemble (CSV long format or binary)
    moddev verify NAME        condition (i)/(ii) curves next to the drift bounds
    moddev estimator          tail curves of the OU drift estimator
    moddev report DIR         summarize the JSON reports in a directory

Exit status: 0 success, 2 configuration error, 3 scenario failure, 4 too many
aborted paths. Files are written into the output directory only
(``--out``, else ``$MODDEV_OUTPUT``, else ``./moddev-output``), each one
atomically, and carry the config hash and seed in a leading comment line.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import linalg
from .corrector import (affine_corrector, closed_form_corrector, compute_Q_green_kubo,
                        compute_Q_stationary, corrector_linear_gaussian, solve_poisson_quadratic,
                        stationary_q_1d)
from .estimator import estimator_mdp_experiment, estimator_reference
from .mdp import (RateFunction, bound_A1, bound_A2, contract_rate,
                  drift_diagnostics, empirical_rate_curve, rate_J, rate_J_regularized)
from .models import (available_scenarios, builtin_scenario, check_assumptions,
                     invariant_density_1d, load_scenario_file, parse_floats)
from .sim import SimConfig, SimulationAbort, simulate_batch

EXIT_CONFIG, EXIT_SCENARIO, EXIT_ABORT = 2, 3, 4
ENV_OUTPUT = "MODDEV_OUTPUT"
COMMANDS = ("example", "rate", "simulate", "verify", "estimator", "report")
RUN_KEYS = {"kappa", "delta", "eps", "checkpoints", "n_paths", "h", "seed", "output",
            "format", "workers", "theta", "stationary"}


class ConfigError(ValueError):
    pass


class ScenarioFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenario: Optional[str] = None
    kappa: Optional[float] = None
    delta: tuple = (1.0,)
    eps: tuple = (0.2,)
    checkpoints: tuple = (25.0, 50.0, 100.0, 200.0)
    n_paths: int = 2000
    h: Optional[float] = None
    seed: int = 0
    output: str = ""
    format: str = "csv"
    workers: int = 1
    theta: float = 1.0
    stationary: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format: must be csv or json, got {self.format!r}")
        if self.kappa is not None and not 0.5 < self.kappa < 1:
            raise ConfigError(f"kappa: must lie in (1/2, 1), got {self.kappa}")
        if any(d < 0 for d in self.delta):
            raise ConfigError("delta: levels must be nonnegative")
        if any(e <= 0 for e in self.eps):
            raise ConfigError("eps: levels must be positive")
        if self.workers < 1:
            raise ConfigError("workers: must be at least 1")
        if not self.theta > 0:
            raise ConfigError("theta: must be positive")
        if self.command in ("example", "simulate", "verify", "estimator"):
            try:
                self.sim_config(0.1 if self.h is None else self.h)
            except ValueError as exc:
                first = str(exc).split()[0]
                key = "checkpoints" if first.startswith("checkpoint") else first
                raise ConfigError(f"{key}: {exc}") from None

    def sim_config(self, h: float, **kw) -> SimConfig:
        return SimConfig(checkpoints=self.checkpoints, h=h, n_paths=self.n_paths,
                         seed=self.seed, **kw)

    def canonical(self) -> dict:
        # output location and worker count do not change results
        d = dataclasses.asdict(self)
        d.pop("output")
        d.pop("workers")
        return d

    def to_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_json(cls, text: str, output: str = "") -> "RunConfig":
        d = json.loads(text)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
        for k in ("delta", "eps", "checkpoints"):
            d[k] = tuple(d[k])
        return cls(output=output, **d)

    def header(self) -> str:
        return f"config_hash={self.config_hash} seed={self.seed} config={self.to_json()}"


def parse_matrix(text: str) -> np.ndarray:
    """``diag:a,b,...``, rows separated by ``;`` (``1,0;0,2``) or a scalar."""
    text = text.strip()
    if text.startswith("diag:"):
        return np.diag(parse_floats(text[5:]))
    rows = [parse_floats(r) for r in text.split(";") if r.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"cannot parse matrix {text!r}")
    return np.array(rows, dtype=float)


def _run_overrides(rmap: dict) -> dict:
    unknown = set(rmap) - RUN_KEYS
    if unknown:
        raise ConfigError(f"[run] unknown key(s): {', '.join(sorted(unknown))}")
    out = {}
    for k, v in rmap.items():
        if k in ("delta", "eps", "checkpoints"):
            out[k] = tuple(parse_floats(v))
        elif k in ("n_paths", "seed", "workers"):
            out[k] = int(v)
        elif k in ("kappa", "h", "theta"):
            out[k] = float(v)
        elif k == "stationary":
            out[k] = v.strip().lower() in ("1", "true", "yes")
        else:
            out[k] = v
    return out


# --------------------------------------------------------------------------
# output


class OutputDir:
    """Write-once, atomic file output confined to one directory."""

    def __init__(self, root):
        self.root = Path(root).resolve()
        self.written = []

    def path(self, name: str) -> Path:
        if not re.fullmatch(r"[A-Za-z0-9_.=+\-]+", name) or name.startswith("."):
            raise ValueError(f"unsafe output name {name!r}")
        return self.root / name

    def write(self, name: str, data) -> Path:
        target = self.path(name)
        self.root.mkdir(parents=True, exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        try:
            with os.fdopen(fd, mode) as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(target)
        return target


def _curve_text(curve, rc: RunConfig) -> str:
    buf = io.StringIO()
    if rc.format == "json":
        return json.dumps(_clean({"config_hash": rc.config_hash, "seed": rc.seed,
                                  **curve.as_dict()}), indent=1) + "\n"
    curve.write_csv(buf, rc.header())
    return buf.getvalue()


def _clean(v):
    """JSON-safe copy with infinities spelled out."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def _summary_text(summary: dict) -> str:
    return json.dumps(_clean(summary), indent=1, sort_keys=True) + "\n"


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=+\-]", "_", text)


# --------------------------------------------------------------------------
# pipeline pieces


def _load_scenario(rc: RunConfig):
    name = rc.scenario
    if name is None:
        raise ConfigError("scenario: a scenario name or file is required")
    if os.path.isfile(name):
        s, _, _ = load_scenario_file(name)
    else:
        try:
            s = builtin_scenario(name)
        except KeyError as exc:
            raise ConfigError(f"scenario: {exc.args[0]}") from None
    if rc.kappa is not None:
        s = s.replace(kappa=rc.kappa)
    return s


def _assumptions(s):
    rep = check_assumptions(s)
    if not rep.all_required_pass:
        failed = [k for k in rep.required if rep.verdicts.get(k) != "pass"]
        raise ScenarioFailure(f"scenario {s.label!r}: required assumption(s) not supported: "
                              f"{', '.join(failed)}")
    return rep


def corrector_and_Q(s):
    """Corrector and ``Q`` by the cheapest route available for the scenario."""
    if s.known_corrector is not None:
        U = closed_form_corrector(s)
        if s.linear_part is not None:
            A, B = s.linear_part
            Q = compute_Q_stationary(s, U, linalg.solve_lyapunov(A, B @ B.T))
        elif s.dim == 1:
            Q = compute_Q_stationary(s, U, invariant_density_1d(s, (-3.0, 3.0)))
        else:
            raise ScenarioFailure("closed-form corrector but no stationary law for Q")
        return U, Q, "closed_form"
    if s.linear_part is not None:
        A, B = s.linear_part
        P = linalg.solve_lyapunov(A, B @ B.T)
        U = affine_corrector(s)
        if U is not None:
            return U, compute_Q_stationary(s, U, P), "affine"
        if s.quadratic_form is not None and s.obs_dim == 1 and _centered_quadratic(s, P):
            U = solve_poisson_quadratic(A, B, s.quadratic_form)
            return U, compute_Q_stationary(s, U, P), "quadratic"
    if s.dim == 1:
        _, U, Q = stationary_q_1d(s)
        return U, Q, "poisson_1d"
    if s.linear_part is not None:
        return corrector_linear_gaussian(s), compute_Q_green_kubo(s), "gaussian_kernel"
    raise ScenarioFailure(f"no corrector route for scenario {s.label!r}")


def _centered_quadratic(s, P) -> bool:
    G = s.quadratic_form
    zero = np.zeros((1, s.dim))
    shift = -float(np.asarray(s.observable(zero)).reshape(-1)[0])
    return abs(shift - float(np.trace(G @ P))) <= 1e-10 * max(1.0, abs(shift))


def _corrector(s):
    try:
        return corrector_and_Q(s)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise ScenarioFailure(f"scenario {s.label!r}: corrector: {exc}") from None


def _default_h(s, rc: RunConfig) -> float:
    if rc.h is not None:
        return rc.h
    return 0.05 if s.linear_part is not None else 0.01


def _lyapunov_function(s):
    """``V(x) = x^T S x`` with ``A^T S + S A = -I`` for linear systems, else ``|x|^2``."""
    if s.linear_part is not None:
        S = linalg.solve_lyapunov(s.linear_part[0], np.eye(s.dim), transpose=True)
        return (lambda x: np.einsum("ni,ij,nj->n", np.atleast_2d(x), S, np.atleast_2d(x))), \
            "x^T S x, A^T S + S A = -I"
    return (lambda x: np.sum(np.atleast_2d(x) ** 2, axis=1)), "|x|^2"


def _simulate(s, U, rc: RunConfig, lyapunov=None, record_bracket=True):
    cfg = rc.sim_config(_default_h(s, rc), stationary=rc.stationary, record_bracket=record_bracket)
    return simulate_batch(s, U, cfg, lyapunov=lyapunov, workers=rc.workers), cfg


# --------------------------------------------------------------------------
# commands


def cmd_example(rc: RunConfig, out: OutputDir, log) -> dict:
    s = _load_scenario(rc)
    rep = _assumptions(s)
    U, Q, route = _corrector(s)
    rf = RateFunction.from_Q(Q.Q)
    ens, cfg = _simulate(s, U, rc)
    summary = {"command": "example", "scenario": s.label, "kappa": s.kappa,
               "config_hash": rc.config_hash, "seed": rc.seed,
               "assumptions": rep.as_dict(), "corrector": route, "Q": Q.Q, "Q_error": Q.error,
               "rank": rf.rank, "scheme": ens.config["scheme_resolved"], "h": cfg.h,
               "n_aborted": ens.n_aborted, "curves": {}}
    lines = [f"scenario: {s.label} (kappa = {s.kappa:g})",
             "assumptions: " + ", ".join(f"{k}={v}" for k, v in rep.verdicts.items()),
             f"corrector: {route}", f"Q: {np.array2string(Q.Q, precision=6)} (rank {rf.rank})"]
    if s.linear_part is not None:
        _, nonsing = linalg.controllability_gramian(*s.linear_part)
        ctrl = "nonsingular" if nonsing else "singular"
        summary["controllability"] = ctrl
        lines.append(f"controllability: {ctrl}")
    curves = [empirical_rate_curve(ens, "norm_S", d, Q.Q) for d in rc.delta]
    curves += [empirical_rate_curve(ens, "corrector", e) for e in rc.eps]
    curves += [empirical_rate_curve(ens, "bracket", e, Q.Q) for e in rc.eps]
    for c in curves:
        name = _slug(f"{s.label}_{c.label.split(':', 1)[1]}") + f".{rc.format}"
        out.write(name, _curve_text(c, rc))
        summary["curves"][c.label] = {"file": name, "reference": c.reference,
                                     "decreasing": c.is_decreasing(),
                                     "rho_log_p": c.rho_log_p}
        lines.append(f"{c.label}: reference {c.reference:.4g}, last value "
                     f"{c.rho_log_p[-1]:.4g}, decreasing {c.is_decreasing()}")
    out.write(_slug(f"{s.label}_summary.json"), _summary_text(summary))
    out.write(_slug(f"{s.label}_report.txt"), "\n".join([f"# {rc.header()}"] + lines) + "\n")
    for line in lines:
        log(line)
    return summary


def cmd_rate(args, log) -> dict:
    try:
        Q = parse_matrix(args.Q)
        rf = RateFunction.from_Q(Q, tau=args.tau)
    except ValueError as exc:
        raise ConfigError(f"Q: {exc}") from None
    result = {"command": "rate", "Q": Q, "rank": rf.rank}
    if args.Y is not None:
        try:
            Y = parse_floats(args.Y)
            result["J"] = rate_J(rf, Y)
        except ValueError as exc:
            raise ConfigError(f"Y: {exc}") from None
        if args.gamma is not None:
            if not args.gamma > 0:
                raise ConfigError("gamma: must be positive")
            result["J_gamma"] = rate_J_regularized(rf, Y, args.gamma)
    if args.T is not None:
        if args.y is None:
            raise ConfigError("y: --T needs --y")
        try:
            result["contracted"] = contract_rate(rf, parse_matrix(args.T), parse_floats(args.y))
        except ValueError as exc:
            raise ConfigError(f"T: {exc}") from None
    for k in ("J", "J_gamma", "contracted"):
        if k in result:
            log(f"{k} = {result[k]!r}")
    return result


def cmd_simulate(rc: RunConfig, out: OutputDir, log, binary: bool = False) -> dict:
    s = _load_scenario(rc)
    _assumptions(s)
    U, _, route = _corrector(s)
    ens, cfg = _simulate(s, U, rc)
    base = _slug(f"{s.label}_ensemble")
    if binary:
        name = base + ".bin"
        out.write(name, ens.to_binary())
    else:
        name = base + ".csv"
        buf = io.StringIO()
        buf.write(f"# {rc.header()}\n")
        ens.to_csv(buf, comment=False)
        out.write(name, buf.getvalue())
    log(f"wrote {name}: {ens.n_paths} paths, {len(ens.times)} checkpoints, "
        f"scheme {ens.config['scheme_resolved']}, h = {cfg.h:g}")
    return {"command": "simulate", "file": name, "n_paths": ens.n_paths,
            "n_aborted": ens.n_aborted, "config_hash": rc.config_hash}


def cmd_verify(rc: RunConfig, out: OutputDir, log) -> dict:
    s = _load_scenario(rc)
    rep = _assumptions(s)
    U, Q, _ = _corrector(s)
    V, vdesc = _lyapunov_function(s)
    fit = drift_diagnostics(s, V, grid=_diag_grid(s))
    lyap = (V, fit.ell) if fit.verdict == "pass" else None
    ens, _ = _simulate(s, U, rc, lyapunov=lyap)
    V0 = float(V(s.initial_point[None, :])[0])
    n_int = 2 * (fit.frak_c + fit.c) / fit.c + 1 if fit.verdict == "pass" else math.nan
    n_mart = 2 * float(np.abs(Q.Q).max()) + 1
    rows = []
    for e in rc.eps:
        ci = empirical_rate_curve(ens, "corrector", e)
        cii = empirical_rate_curve(ens, "bracket", e, Q.Q)
        cl = empirical_rate_curve(ens, "lyapunov_integral", n_int) if lyap else None
        for j, t in enumerate(ens.times):
            if fit.verdict == "pass":
                b_tail, b_int = bound_A1(fit.c, fit.frak_c, fit.bold_c, V0, e, n_int, s.kappa, t)
            else:
                b_tail = b_int = math.nan
            rows.append([t, e, ci.rho_log_p[j], ci.se_log[j], bool(ci.clamped[j]),
                         cii.rho_log_p[j], cii.se_log[j], bool(cii.clamped[j]),
                         cl.rho_log_p[j] if cl else math.nan,
                         b_tail, b_int, bound_A2(e, n_mart, s.kappa, t)])
    cols = ["t", "eps", "cond_i", "cond_i_se", "cond_i_clamped", "cond_ii", "cond_ii_se",
            "cond_ii_clamped", "lyapunov_integral", "bound_A1_tail", "bound_A1_integral",
            "bound_A2"]
    summary = {"command": "verify", "scenario": s.label, "config_hash": rc.config_hash,
               "seed": rc.seed, "assumptions": rep.as_dict(), "Q": Q.Q,
               "lyapunov_function": vdesc, "drift_fit": fit.as_dict(), "n_integral": n_int,
               "n_martingale": n_mart, "columns": cols, "rows": rows}
    if rc.format == "json":
        out.write(_slug(f"{s.label}_verify.json"), _summary_text(summary))
    else:
        buf = io.StringIO()
        buf.write(f"# {rc.header()}\n")
        buf.write(",".join(cols) + "\n")
        for r in rows:
            buf.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                               for v in r) + "\n")
        out.write(_slug(f"{s.label}_verify.csv"), buf.getvalue())
        out.write(_slug(f"{s.label}_verify_summary.json"),
                  _summary_text({k: v for k, v in summary.items() if k != "rows"}))
    log(f"drift fit ({vdesc}): ell={fit.ell:g} c={fit.c:.4g} frak_c={fit.frak_c:.4g} "
        f"bold_c={fit.bold_c:.4g} [{fit.verdict}]")
    for r in rows:
        log("t={:g} eps={:g} (i) {:.4g} (ii) {:.4g} A1 {:.4g}/{:.4g} A2 {:.4g}".format(
            r[0], r[1], r[2], r[5], r[9], r[10], r[11]))
    return summary


def _diag_grid(s):
    if s.dim == 1:
        return np.linspace(-5.0, 5.0, 1001)
    rng = np.random.default_rng(0)
    return rng.uniform(-5.0, 5.0, size=(2000, s.dim))


def cmd_estimator(rc: RunConfig, out: OutputDir, log) -> dict:
    kappa = 0.6 if rc.kappa is None else rc.kappa
    cfg = rc.sim_config(0.02 if rc.h is None else rc.h, stationary=rc.stationary)
    ex = estimator_mdp_experiment(rc.theta, kappa, cfg, rc.delta, rc.eps, workers=rc.workers)
    summary = {"command": "estimator", "theta": rc.theta, "kappa": kappa,
               "config_hash": rc.config_hash, "seed": rc.seed,
               "n_excluded": ex.run.n_excluded, "curves": {}}
    for name, c in ex.all_curves():
        fname = _slug(f"estimator_{name}") + f".{rc.format}"
        out.write(fname, _curve_text(c, rc))
        summary["curves"][name] = {"file": fname, "reference": c.reference,
                                   "rho_log_p": c.rho_log_p, "se_log": c.se_log}
    for d, o in ex.oracle.items():
        summary["curves"][f"error_delta={d:g}"]["delta_method_oracle"] = o
        log(f"delta={d:g}: reference {estimator_reference(rc.theta, d):.4g}; "
            + "; ".join(f"t={t:g}: {v:.4f} (oracle {w:.4f})"
                        for t, v, w in zip(ex.run.times, ex.error_curves[d].rho_log_p, o)))
    out.write("estimator_summary.json", _summary_text(summary))
    return summary


def cmd_report(directory: str, log) -> dict:
    root = Path(directory)
    if not root.is_dir():
        raise ConfigError(f"report: {directory} is not a directory")
    found = {}
    for p in sorted(root.glob("*summary*.json")):
        data = json.loads(p.read_text())
        found[p.name] = data
        log(f"{p.name}: command={data.get('command')} config_hash={data.get('config_hash')}")
        for name, c in sorted(data.get("curves", {}).items()):
            vals = ", ".join(f"{v:.4g}" if isinstance(v, (int, float)) else str(v)
                             for v in c.get("rho_log_p", []))
            log(f"  {name}: [{vals}] reference {c.get('reference')}")
    if not found:
        log("no summaries found")
    return found


# --------------------------------------------------------------------------
# argument parsing


def _floats(text):
    try:
        vals = tuple(parse_floats(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moddev", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("scenario", nargs="?",
                            help=f"built-in name ({', '.join(available_scenarios())}) or scenario file")
        sp.add_argument("--config", help="scenario file with [scenario] and [run] sections")
        sp.add_argument("--kappa", type=float)
        sp.add_argument("--delta", type=_floats, help="comma-separated levels")
        sp.add_argument("--eps", type=_floats, help="comma-separated levels")
        sp.add_argument("--checkpoints", type=_floats)
        sp.add_argument("--n-paths", dest="n_paths", type=int)
        sp.add_argument("--h", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT} or ./moddev-output)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--workers", type=int)
        sp.add_argument("--stationary", action="store_true", default=None)

    common(sub.add_parser("example", help="full pipeline on a scenario"))
    sp = sub.add_parser("simulate", help="write a path ensemble")
    common(sp)
    sp.add_argument("--binary", action="store_true", help="compact binary dump instead of CSV")
    common(sub.add_parser("verify", help="condition curves and drift bounds"))
    sp = sub.add_parser("estimator", help="OU drift-estimator tail curves")
    common(sp, scenario=False)
    sp.add_argument("--theta", type=float)
    sp = sub.add_parser("rate", help="evaluate rate functions")
    sp.add_argument("--Q", required=True, help="e.g. diag:2,0 or 1,0;0,2")
    sp.add_argument("--Y", help="vector for J and J_gamma")
    sp.add_argument("--gamma", type=float, help="regularization for J_gamma")
    sp.add_argument("--T", help="contraction map (rows separated by ';')")
    sp.add_argument("--y", help="image vector for the contracted rate")
    sp.add_argument("--tau", type=float, default=1e-8, help="range-membership tolerance")
    sp = sub.add_parser("report", help="summarize reports in a directory")
    sp.add_argument("directory", nargs="?")
    return p


def run_config_from_args(args) -> RunConfig:
    values = {}
    scenario = getattr(args, "scenario", None)
    config = getattr(args, "config", None)
    if config is None and scenario is not None and os.path.isfile(scenario):
        config = scenario
    if config:
        try:
            _, smap, rmap = load_scenario_file(config)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"config: {exc}") from None
        values.update(_run_overrides(rmap))
        scenario = scenario or config
    for key in ("kappa", "delta", "eps", "checkpoints", "n_paths", "h", "seed", "format",
                "workers", "theta", "stationary"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    output = getattr(args, "out", None) or values.pop("output", None) or \
        os.environ.get(ENV_OUTPUT) or "moddev-output"
    values.pop("output", None)
    try:
        return RunConfig(command=args.command, scenario=scenario, output=output, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    def log(msg):
        print(msg)

    try:
        if args.command == "rate":
            cmd_rate(args, log)
            return 0
        if args.command == "report":
            directory = args.directory or os.environ.get(ENV_OUTPUT) or "moddev-output"
            cmd_report(directory, log)
            return 0
        rc = run_config_from_args(args)
        out = OutputDir(rc.output)
        if args.command == "example":
            cmd_example(rc, out, log)
        elif args.command == "simulate":
            cmd_simulate(rc, out, log, binary=args.binary)
        elif args.command == "verify":
            cmd_verify(rc, out, log)
        elif args.command == "estimator":
            cmd_estimator(rc, out, log)
        return 0
    except ConfigError as exc:
        print(f"moddev: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioFailure as exc:
        print(f"moddev: scenario failure: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except SimulationAbort as exc:
        print(f"moddev: simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
