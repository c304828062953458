"""Command-line experiments.

Usage::

    spdelab COMMAND [--config FILE] [--seed N] [--threads N] [--out DIR] [--set key=value ...]

Commands are ``kernels-check``, ``variance-scaling``, ``clt-rate``,
``independence`` and ``oracle-compare``. Each writes ``COMMAND.csv`` and
``COMMAND.json`` into the output directory. Exit status is 0 when every
check passes, 1 when a check fails and 2 for configuration errors.

Config files are flat ``key = value`` lines; ``#`` starts a comment.
Recognised keys and their defaults are listed in :data:`DEFAULTS`; ``t`` and
``dx`` default per equation (heat 0.5 and 1/8, wave 1 and 1/16).
"""

import argparse
from dataclasses import asdict, dataclass
import hashlib
import json
import math
from pathlib import Path
import sys

import numpy as np

from spdelab import __version__
from spdelab import grid_noise as gn
from spdelab import kernels, oracle, stats
from spdelab.errors import ConfigError, NonAdditiveSigma, SpdelabError
from spdelab.solver import SolverConfig, is_additive_unit, parse_sigma, run_ensemble

COMMANDS = ("kernels-check", "variance-scaling", "clt-rate", "independence", "oracle-compare")

DEFAULTS = {
    "equation": "heat",
    "noise": "white",
    "alpha": "0.5",
    "sigma": "constant(1)",
    "t": "",
    "dx": "",
    "R": "4,8,16,32,64",
    "n": "4000",
    "x0": "0.5",
    "seed": "20240611",
    "boundary": "periodic",
    "n_perm": "199",
    "repetitions": "1",
    "z_max": "3",
}
EQUATION_DEFAULTS = {"heat": {"t": 0.5, "dx": 1 / 8}, "wave": {"t": 1.0, "dx": 1 / 16}}

EMPIRICAL_SLOPE_TOL = 0.08
Z_CELL_FRACTION = 0.95


@dataclass(frozen=True)
class ExperimentConfig:
    equation: str
    noise: str
    alpha: float | None
    sigma: str
    t: float
    dx: float
    R: tuple
    n: int
    x0: float
    seed: int
    boundary: str
    n_perm: int
    repetitions: int
    z_max: float

    def as_dict(self):
        d = asdict(self)
        d["R"] = list(self.R)
        return d

    @property
    def config_hash(self):
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def covariance(self):
        return gn.WHITE if self.noise == "white" else gn.riesz(self.alpha)

    @property
    def model(self):
        return oracle.ModelTag(self.equation, self.covariance)

    @property
    def additive(self):
        return is_additive_unit(parse_sigma(self.sigma))

    def solver_config(self):
        grid = gn.fit_grid(self.equation, self.dx, self.t, max(self.R), self.x0)
        return SolverConfig(grid, self.covariance, parse_sigma(self.sigma), self.boundary)


def read_config_file(path):
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def _number(raw, key, kind=float):
    try:
        if kind is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if "/" in raw:
            num, den = raw.split("/")
            return float(num) / float(den)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} = {raw!r} is not a valid {kind.__name__}") from None


def build_config(values):
    """Validate raw string values into an :class:`ExperimentConfig`."""
    unknown = set(values) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw = {**DEFAULTS, **values}
    equation = raw["equation"].lower()
    if equation not in EQUATION_DEFAULTS:
        raise ConfigError(f"equation must be heat or wave, got {equation!r}")
    noise = raw["noise"].lower()
    if noise not in ("white", "riesz"):
        raise ConfigError(f"noise must be white or riesz, got {noise!r}")
    alpha = _number(raw["alpha"], "alpha") if noise == "riesz" else None
    if alpha is not None and not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    try:
        parse_sigma(raw["sigma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    eq_def = EQUATION_DEFAULTS[equation]
    t = _number(raw["t"], "t") if raw["t"] else eq_def["t"]
    dx = _number(raw["dx"], "dx") if raw["dx"] else eq_def["dx"]
    R = tuple(_number(r, "R") for r in raw["R"].split(",") if r.strip())
    if not R or any(r <= 0 for r in R):
        raise ConfigError("R must be a nonempty list of positive radii")
    cfg = ExperimentConfig(
        equation=equation, noise=noise, alpha=alpha, sigma=raw["sigma"].replace(" ", ""),
        t=t, dx=dx, R=R, n=_number(raw["n"], "n", int), x0=_number(raw["x0"], "x0"),
        seed=_number(raw["seed"], "seed", int), boundary=raw["boundary"].lower(),
        n_perm=_number(raw["n_perm"], "n_perm", int),
        repetitions=_number(raw["repetitions"], "repetitions", int),
        z_max=_number(raw["z_max"], "z_max"),
    )
    if cfg.n < 0 or cfg.repetitions < 1 or not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("n must be >= 0, repetitions >= 1 and seed a 64-bit unsigned integer")
    try:
        cfg.solver_config()
    except (SpdelabError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from None
    return cfg


# -- output ------------------------------------------------------------------------

def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.17g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class Report:
    command: str
    config: dict
    config_hash: str
    seed: int
    columns: list
    rows: list
    footer: list | None
    summary: dict
    checks: dict

    @property
    def passed(self):
        return all(self.checks.values())

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = [
            f"# spdelab {__version__}",
            f"# command: {self.command}",
            f"# config_hash: {self.config_hash}",
            f"# master_seed: {self.seed}",
            f"# config: {json.dumps(_jsonable(self.config), sort_keys=True)}",
            ",".join(self.columns),
        ]
        lines += [",".join(fmt(v) for v in row) for row in self.rows]
        if self.footer is not None:
            lines.append(",".join(fmt(v) for v in self.footer))
        (out / f"{self.command}.csv").write_text("\n".join(lines) + "\n")
        doc = {
            "command": self.command, "version": __version__, "config_hash": self.config_hash,
            "master_seed": self.seed, "config": self.config,
            "columns": self.columns, "rows": self.rows, "footer": self.footer,
            "summary": self.summary, "checks": self.checks, "passed": self.passed,
        }
        (out / f"{self.command}.json").write_text(
            json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")

    def print_table(self, stream=None):
        stream = sys.stdout if stream is None else stream
        print(f"{self.command}  config {self.config_hash}  seed {self.seed}", file=stream)
        body = [[f"{v:.6g}" if isinstance(v, (float, np.floating)) else fmt(v) for v in row]
                for row in self.rows + ([self.footer] if self.footer else [])]
        widths = [max(len(c), *(len(r[i]) for r in body)) for i, c in enumerate(self.columns)]
        for line in [self.columns] + body:
            print("  ".join(c.rjust(w) for c, w in zip(line, widths)), file=stream)
        for name, ok in self.checks.items():
            print(f"  [{'PASS' if ok else 'FAIL'}] {name}", file=stream)


def _slope(Rs, values):
    vals = np.asarray(values, dtype=float)
    if len(Rs) < 3 or not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        return float("nan")
    return stats.loglog_fit(list(zip(Rs, vals))).slope


def _report(cmd, cfg, columns, rows, footer, summary, checks):
    return Report(cmd, cfg.as_dict(), cfg.config_hash, cfg.seed, columns, rows, footer,
                  summary, {k: bool(v) for k, v in checks.items()})


# -- commands ------------------------------------------------------------------------

def cmd_kernels_check(cfg=None, perturb=0.0, threads=1):
    checks = kernels.identity_suite(perturb=perturb)
    rows = [[c.name, c.max_residual, c.tolerance, c.cases, c.passed] for c in checks]
    config = {"perturb": perturb}
    h = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]
    return Report("kernels-check", config, h, 0,
                  ["identity", "max_residual", "tolerance", "cases", "passed"], rows, None,
                  {"identities": len(checks)}, {c.name: c.passed for c in checks})


def _ensemble(cfg, threads, n=None, first_replica=0, R=None):
    """``run_ensemble`` for the config; commands also accept a precomputed one."""
    return run_ensemble(cfg.solver_config(), cfg.n if n is None else n, R or cfg.R, cfg.t,
                        cfg.seed, x0=cfg.x0, threads=threads, first_replica=first_replica)


def _sd_and_se(a):
    n = len(a)
    s2 = float(np.var(a, ddof=1))
    m4 = float(np.mean((a - a.mean()) ** 4))
    se_var = math.sqrt(max(m4 - s2 * s2, 0.0) / n)
    s = math.sqrt(s2)
    return s, se_var / (2 * s) if s > 0 else float("nan")


def cmd_variance_scaling(cfg, threads=1, ens=None):
    ens = _ensemble(cfg, threads) if ens is None else ens
    additive = cfg.additive
    rows = []
    for R in cfg.R:
        s_or = oracle.sigma_R_exact(cfg.model, cfg.t, R) if additive else float("nan")
        s_emp, se = _sd_and_se(ens[R].a)
        rows.append([R, s_or, s_emp, se])
    Rs = list(cfg.R)
    slope_or = _slope(Rs, [r[1] for r in rows])
    slope_emp = _slope(Rs, [r[2] for r in rows])
    theory = 1 - cfg.model.beta / 2
    summary = {"slope_oracle": slope_or, "slope_empirical": slope_emp, "slope_theory": theory,
               "n": cfg.n}
    checks = {}
    if additive:
        checks["empirical slope within 0.08 of oracle"] = abs(slope_emp - slope_or) <= EMPIRICAL_SLOPE_TOL
    return _report("variance-scaling", cfg, ["R", "sigma_oracle", "sigma_empirical", "se_empirical"],
                   rows, ["slope", slope_or, slope_emp, None], summary, checks)


def cmd_clt_rate(cfg, threads=1, ens=None):
    ens = _ensemble(cfg, threads) if ens is None else ens
    additive = cfg.additive
    rows = []
    for R in cfg.R:
        if additive:
            mode = stats.OracleSigma(oracle.sigma_R_exact(cfg.model, cfg.t, R))
            cov_or = oracle.cov_FRu_exact(cfg.model, cfg.t, R, cfg.x0)
        else:
            mode, cov_or = stats.EmpiricalSigma(), float("nan")
        pairs = stats.standardize(ens[R], mode)
        w1 = stats.w1_to_std_normal(pairs[:, 0])
        sliced = stats.w1_joint_vs_product(pairs, stats.ProductResample(cfg.seed))
        cov_emp = float(np.cov(pairs[:, 0], pairs[:, 1])[0, 1])
        rows.append([R, w1, sliced, cov_emp, cov_or])
    Rs = list(cfg.R)
    footer = ["slope"] + [_slope(Rs, [r[k] for r in rows]) for k in (1, 2, 3, 4)]
    floors = {"marginal": stats.noise_floor("marginal", cfg.n), "sliced": stats.noise_floor("sliced", cfg.n)}
    summary = {"noise_floor_marginal": floors["marginal"], "noise_floor_sliced": floors["sliced"],
               "slope_w1_marginal": footer[1], "slope_w1_sliced": footer[2],
               "slope_cov_empirical": footer[3], "slope_cov_oracle": footer[4]}
    first, last = rows[0], rows[-1]
    if additive:
        checks = {"marginal W1 below noise floor at every R": all(r[1] <= floors["marginal"] for r in rows)}
    else:
        checks = {"marginal W1 decreases from first to last R": last[1] < first[1],
                  "sliced W1 decreases from first to last R": last[2] < first[2]}
    return _report("clt-rate", cfg, ["R", "w1_marginal", "w1_sliced", "cov_empirical", "cov_oracle"],
                   rows, footer, summary, checks)


def _corr_z(r, rho, n):
    return (math.atanh(r) - math.atanh(rho)) * math.sqrt(n - 3)


def cmd_independence(cfg, threads=1):
    additive = cfg.additive
    reps = cfg.repetitions
    p_values = {R: [] for R in cfg.R}
    dcovs = {R: [] for R in cfg.R}
    corrs = {R: [] for R in cfg.R}
    for k in range(reps):
        ens = _ensemble(cfg, threads, first_replica=k * cfg.n)
        for R in cfg.R:
            s = ens[R]
            res = stats.independence_test(s.a, s.u0, n_perm=cfg.n_perm, seed=cfg.seed + k)
            p_values[R].append(res.p_value)
            dcovs[R].append(res.statistic)
            corrs[R].append(float(np.corrcoef(s.a, s.u0)[0, 1]))
    rows, per_R = [], {}
    for R in cfg.R:
        rho = oracle.joint_gaussian_law(cfg.model, cfg.t, R, cfg.x0).correlation if additive else float("nan")
        r0 = corrs[R][0]
        z = _corr_z(r0, rho, cfg.n) if additive else float("nan")
        p = np.array(p_values[R])
        rows.append([R, dcovs[R][0], p_values[R][0], r0, rho, z,
                     float(np.mean(p <= 0.01)), float(np.mean(p > 0.05))])
        per_R[str(fmt(R))] = {"p_values": p_values[R], "distance_covariance": dcovs[R],
                              "correlation": corrs[R], "oracle_correlation": rho,
                              "verdict": "dependent" if p[0] <= 0.01 else
                              ("independent" if p[0] > 0.05 else "inconclusive")}
    first, last = rows[0], rows[-1]
    checks = {
        f"dependence detected at R={fmt(first[0])} (p <= 0.01) in >= 90% of repetitions": first[6] >= 0.9,
        f"independence not rejected at R={fmt(last[0])} (p > 0.05) in >= 90% of repetitions": last[7] >= 0.9,
    }
    if additive:
        checks["correlation within z_max of oracle at every R"] = all(abs(r[5]) <= cfg.z_max for r in rows)
    summary = {"repetitions": reps, "per_R": per_R}
    columns = ["R", "distance_covariance", "p_value", "correlation", "oracle_correlation",
               "z_correlation", "reject_rate_0.01", "accept_rate_0.05"]
    return _report("independence", cfg, columns, rows, None, summary, checks)


def oracle_compare_cells(cfg, ens):
    """Rows of (quantity, R, empirical, oracle, z) for the additive case.

    Quantities are ``Var u(t, x0)``, ``Var a_R``, ``Cov(F_R, u(t, x0))`` with
    ``F_R = a_R / sigma_R`` and ``Corr(a_R, u(t, x0))``.
    """
    model, t, n = cfg.model, cfg.t, cfg.n
    v = oracle.pointwise_cov(model, t, 0.0)
    u = ens[cfg.R[0]].u0
    var_u = float(np.var(u, ddof=1))
    cells = [["point_variance", 0.0, var_u, v, (var_u - v) / (v * math.sqrt(2 / (n - 1)))]]
    for R in cfg.R:
        s = ens[R]
        sR = oracle.sigma_R_exact(model, t, R)
        # covariance of F_R = a_R / sigma_R with u0
        c = oracle.cov_FRu_exact(model, t, R, cfg.x0)
        rho = c / math.sqrt(v)
        var_a = float(np.var(s.a, ddof=1))
        cov = float(np.cov(s.a / sR, s.u0)[0, 1])
        r = float(np.corrcoef(s.a, s.u0)[0, 1])
        cells.append(["variance", R, var_a, sR * sR, (var_a - sR * sR) / (sR * sR * math.sqrt(2 / (n - 1)))])
        cells.append(["covariance", R, cov, c, (cov - c) / math.sqrt((v + c * c) / (n - 1))])
        cells.append(["correlation", R, r, rho, _corr_z(r, rho, n)])
    return cells


def cmd_oracle_compare(cfg, threads=1, ens=None):
    if not cfg.additive:
        raise NonAdditiveSigma(f"oracle-compare needs sigma = constant(1), got {cfg.sigma}")
    ens = _ensemble(cfg, threads) if ens is None else ens
    rows = oracle_compare_cells(cfg, ens)
    within = [abs(r[4]) <= cfg.z_max for r in rows]
    frac = float(np.mean(within))
    wave_rows = [r for r in rows if r[0] == "covariance" and r[1] > cfg.x0 + 2 * cfg.t]
    summary = {"fraction_within_z_max": frac, "cells": len(rows)}
    checks = {f"|z| <= z_max in >= 95% of cells": frac >= Z_CELL_FRACTION}
    if cfg.equation == "wave" and len(wave_rows) > 1:
        ors = [r[3] for r in wave_rows]
        checks["oracle covariance decreasing in R beyond x0 + 2t"] = all(np.diff(ors) < 0)
    return _report("oracle-compare", cfg, ["quantity", "R", "empirical", "oracle", "z"],
                   rows, None, summary, checks)


RUNNERS = {
    "variance-scaling": cmd_variance_scaling,
    "clt-rate": cmd_clt_rate,
    "independence": cmd_independence,
    "oracle-compare": cmd_oracle_compare,
}


# -- entry point ---------------------------------------------------------------------

def make_parser():
    p = argparse.ArgumentParser(prog="spdelab", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    p.add_argument("--quiet", action="store_true", help="do not print the result table")
    return p


def load_values(args):
    values = read_config_file(args.config) if args.config else {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = value.strip()
    if args.seed is not None:
        values["seed"] = str(args.seed)
    return values


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        values = load_values(args)
        if args.command == "kernels-check":
            report = cmd_kernels_check(perturb=args.perturb)
        else:
            cfg = build_config(values)
            report = RUNNERS[args.command](cfg, threads=args.threads)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    report.write(args.out)
    if not args.quiet:
        report.print_table()
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
