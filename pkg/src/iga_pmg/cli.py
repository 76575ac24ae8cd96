"""
Benchmark runner: parse a flat ``key = value`` config, sweep the
(benchmark, p, h, smoother) grid and write ``results.csv``, ``results.md`` and
per-cell residual logs.

Usage::

    iga-pmg run tables/standalone.cfg --out out/
    iga-pmg table tables/spectral_b1.cfg
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import itertools
import math
from pathlib import Path
import sys
import time

import numpy as np

from . import analysis, pmg
from ._seed import seeded_initial_guess
from .discretization import assemble_mass, benchmark, laplace_variant
from .errors import ConfigError, IgaPmgError
from .sparselin import write_matrix, write_vector

__all__ = ["RunConfig", "CellResult", "ResultTable", "parse_config", "seeded_initial_guess",
           "run", "main"]

MODES = ("standalone", "bicgstab", "spectrum", "reduction", "condition")
CSV_HEADER = "benchmark,p,h_exp,smoother,mode,value,status,setup_s,solve_s"


@dataclass(frozen=True)
class RunConfig:
    """One sweep. Lists span the grid; scalars apply to every cell."""

    benchmarks: tuple = (1,)
    p_list: tuple = (2,)
    h_levels: tuple = (6,)
    smoothers: tuple = ("ilut",)
    mode: str = "standalone"
    nu1: int = 1
    nu2: int = 1
    cycle: str = "V"
    tau: float = 1e-12
    fillfactor: float = 1.0
    ordering: str = "rcm"
    coarse_ops: tuple = ("rediscretize",)
    split_depth: int = 0
    tol: float = 1e-8
    max_cycles: int = 200
    seed: int = 42
    out: str = "results"
    dump_matrices: bool = False

    def cells(self):
        """Grid cells in output order."""
        axis = self.coarse_ops if self.mode == "condition" else self.smoothers
        return list(itertools.product(self.benchmarks, self.p_list, self.h_levels, axis))


def _ints(key, lo, hi):
    def conv(text):
        try:
            vals = tuple(int(t) for t in _split(text))
        except ValueError:
            raise ConfigError(f"expected integers, got {text!r}", key=key) from None
        if not vals or any(v < lo or v > hi for v in vals):
            raise ConfigError(f"values must lie in [{lo}, {hi}], got {text!r}", key=key)
        return vals
    return conv


def _int(key, lo, hi):
    conv = _ints(key, lo, hi)

    def one(text):
        vals = conv(text)
        if len(vals) != 1:
            raise ConfigError("expected a single value", key=key)
        return vals[0]
    return one


def _float(key, lo):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise ConfigError(f"expected a number, got {text!r}", key=key) from None
        if not v >= lo or not math.isfinite(v):
            raise ConfigError(f"value must be >= {lo}, got {text!r}", key=key)
        return v
    return conv


def _choices(key, allowed, many=True, fold=str.lower):
    def conv(text):
        vals = tuple(fold(t) for t in _split(text))
        bad = [v for v in vals if v not in allowed]
        if not vals or bad:
            raise ConfigError(f"expected one of {', '.join(allowed)}, got {text!r}", key=key)
        if not many:
            if len(vals) != 1:
                raise ConfigError("expected a single value", key=key)
            return vals[0]
        return vals
    return conv


def _bool(key):
    def conv(text):
        t = text.strip().lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}", key=key)
    return conv


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


# config key -> (RunConfig field, converter)
_KEYS = {
    "benchmark": ("benchmarks", _ints("benchmark", 1, 3)),
    "p": ("p_list", _ints("p", 1, 8)),
    "h": ("h_levels", _ints("h", 1, 12)),
    "smoother": ("smoothers", _choices("smoother", ("ilut", "gs"))),
    "mode": ("mode", _choices("mode", MODES, many=False)),
    "nu1": ("nu1", _int("nu1", 0, 100)),
    "nu2": ("nu2", _int("nu2", 0, 100)),
    "cycle": ("cycle", _choices("cycle", ("V", "W"), many=False, fold=str.upper)),
    "tau": ("tau", _float("tau", 0.0)),
    "fillfactor": ("fillfactor", _float("fillfactor", 1.0)),
    "ordering": ("ordering", _choices("ordering", ("rcm", "none"), many=False)),
    "coarse_op": ("coarse_ops", _choices("coarse_op", ("rediscretize", "galerkin"))),
    "split": ("split_depth", _int("split", 0, 4)),
    "tol": ("tol", _float("tol", 0.0)),
    "max_cycles": ("max_cycles", _int("max_cycles", 1, 100000)),
    "seed": ("seed", _int("seed", 0, 2**64 - 1)),
    "out": ("out", str),
    "dump_matrices": ("dump_matrices", _bool("dump_matrices")),
}


def parse_config(text):
    """Parse ``key = value`` lines into a :class:`RunConfig`.

    Blank lines and ``#`` comments are ignored; lists are comma separated.
    ``h`` takes exponents, so ``h = 6, 7`` means ``h = 2^-6, 2^-7``.

    Raises
    ------
    ConfigError
        Unknown key, malformed line or out-of-range value; ``key`` names the
        offending entry.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", key=line)
        key, val = (t.strip() for t in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise ConfigError(f"unknown key (line {lineno})", key=key)
        name, conv = _KEYS[key]
        values[name] = conv(val)
    return RunConfig(**values)


@dataclass
class CellResult:
    benchmark: int
    p: int
    h_exp: int
    smoother: str
    mode: str
    value: float = math.nan
    status: str = "ok"
    setup_s: float = 0.0
    solve_s: float = 0.0
    history: list = field(default_factory=list)

    @property
    def name(self):
        return f"b{self.benchmark}_p{self.p}_h{self.h_exp}_{self.smoother}_{self.mode}"

    def csv_row(self):
        return (f"{self.benchmark},{self.p},{self.h_exp},{self.smoother},{self.mode},"
                f"{_format_value(self.value, self.mode)},{self.status},"
                f"{self.setup_s:.3f},{self.solve_s:.3f}")

    def display(self):
        """Table cell text; anything short of convergence is rendered ``-``."""
        if self.status not in ("ok", "converged"):
            return "-"
        return _format_value(self.value, self.mode)


def _format_value(value, mode):
    if value is None or not np.isfinite(value):
        return "nan"
    if mode in ("standalone", "bicgstab"):
        return str(int(value))
    if mode == "condition":
        return f"{value:.3e}"
    return f"{value:.4f}"


@dataclass
class ResultTable:
    config: RunConfig
    rows: list

    def to_csv(self):
        return "\n".join([CSV_HEADER] + [r.csv_row() for r in self.rows]) + "\n"

    def to_markdown(self):
        """One table per benchmark: rows ``h``, columns ``p`` x smoother."""
        cfg = self.config
        axis = cfg.coarse_ops if cfg.mode == "condition" else cfg.smoothers
        lookup = {(r.benchmark, r.p, r.h_exp, r.smoother): r for r in self.rows}
        out = []
        for b in cfg.benchmarks:
            out.append(f"### Benchmark {b}: {benchmark(b).name}, mode {cfg.mode}\n")
            cols = [(p, s) for p in cfg.p_list for s in axis]
            out.append("| h | " + " | ".join(f"p={p} {s}" for p, s in cols) + " |")
            out.append("|---" * (len(cols) + 1) + "|")
            for e in cfg.h_levels:
                cells = [lookup[(b, p, e, s)].display() for p, s in cols]
                out.append(f"| 2^-{e} | " + " | ".join(cells) + " |")
            out.append("")
        return "\n".join(out)


class _Cache:
    """Share assembled operators between cells that differ only in the smoother."""

    def __init__(self):
        self.ops = {}

    def hierarchy(self, spec, cfg, p, h_exp, smoother, coarse_op="rediscretize"):
        key = (spec.id, spec.name, p, h_exp, coarse_op)
        base = self.ops.get(key)
        hier = pmg.build_hierarchy(
            spec, p, 2.0**-h_exp, smoother=smoother, cycle=cfg.cycle, nu1=cfg.nu1,
            nu2=cfg.nu2, coarse_op=coarse_op, tau=cfg.tau, fillfactor=cfg.fillfactor,
            ordering=cfg.ordering, split_depth=cfg.split_depth, operators=base)
        self.ops[key] = hier
        return hier


def _run_cell(cfg, cell, cache, out_dir):
    b, p, e, axis = cell
    res = CellResult(b, p, e, axis, cfg.mode)
    try:
        spec = benchmark(b)
        if cfg.mode in ("spectrum", "reduction"):
            spec = laplace_variant(spec)
        if cfg.mode == "condition":
            t0 = time.perf_counter()
            hier = cache.hierarchy(spec, cfg, p, e, "gs", coarse_op=axis)
            res.setup_s = time.perf_counter() - t0
            t0 = time.perf_counter()
            res.value = analysis.condition_number(hier.level(p - 1).A)
            res.solve_s = time.perf_counter() - t0
        else:
            hier = cache.hierarchy(spec, cfg, p, e, axis)
            res.setup_s = hier.setup_seconds
            _run_mode(cfg, hier, res, out_dir)
        if cfg.dump_matrices:
            _dump(hier, out_dir / f"matrices_{res.name}")
    except IgaPmgError as exc:
        res.status = f"error:{type(exc).__name__}"
    except np.linalg.LinAlgError:
        res.status = "error:LinAlgError"
    return res


def _run_mode(cfg, hier, res, out_dir):
    t0 = time.perf_counter()
    if cfg.mode in ("standalone", "bicgstab"):
        solver = pmg.solve if cfg.mode == "standalone" else pmg.solve_bicgstab
        limit = {"max_cycles": cfg.max_cycles} if cfg.mode == "standalone" else {"max_iter": cfg.max_cycles}
        _, rep = solver(hier, tol=cfg.tol, seed=cfg.seed, **limit)
        res.value = rep.cycles
        res.status = "converged" if rep.converged else ("diverged" if rep.diverged else "maxiter")
        res.history = list(rep.residual_history)
        with open(out_dir / f"residuals_{res.name}.txt", "w") as fh:
            fh.writelines(f"{r:.17g}\n" for r in res.history)
    elif cfg.mode == "spectrum":
        if hier.ndof <= analysis.ITERATION_MATRIX_LIMIT:
            rep = analysis.spectral_radius(analysis.iteration_matrix(hier))
            res.value = rep.rho
            analysis.write_spectrum_csv(out_dir / f"spectrum_{res.name}.csv", rep.eigenvalues)
        else:
            res.value = analysis.estimate_spectral_radius(hier, seed=cfg.seed)
    else:
        M = assemble_mass(hier.problem.space, hier.problem.domain)
        eig = analysis.generalized_eigs(hier.A, M)
        prof = analysis.reduction_factors(hier, eig)
        analysis.write_reduction_csv(out_dir / f"reduction_{res.name}.csv", prof)
        upper = prof[len(prof) // 2:]
        res.value = max(r.smoother for r in upper)
    res.solve_s = time.perf_counter() - t0


def _dump(hier, prefix):
    prefix.mkdir(parents=True, exist_ok=True)
    for lvl in hier.levels:
        write_matrix(prefix / f"A_p{lvl.degree}.mtx", lvl.A)
        write_vector(prefix / f"lumped_mass_p{lvl.degree}.txt", lvl.lumped_mass)
        if lvl.transfer_up is not None:
            write_matrix(prefix / f"P_p{lvl.degree + 1}_p{lvl.degree}.mtx", lvl.transfer_up)
    write_vector(prefix / "rhs.txt", hier.problem.rhs)


def run(config, threads=1, log=None):
    """Execute every cell of ``config`` and write the artifacts to ``config.out``.

    Cell failures (factorization breakdown, analysis limits) are recorded in
    the status column; the sweep always completes.

    Returns
    -------
    ResultTable
    """
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = config.cells()
    # cells sharing (benchmark, p, h) reuse one operator set, so group them per worker
    groups = {}
    for c in cells:
        groups.setdefault(c[:3], []).append(c)

    def work(group):
        cache = _Cache()
        out = []
        for c in group:
            r = _run_cell(config, c, cache, out_dir)
            if log is not None:
                print(f"{r.name}: {_format_value(r.value, r.mode)} ({r.status})", file=log, flush=True)
            out.append(r)
        return out

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = [r for rs in pool.map(work, groups.values()) for r in rs]
    else:
        results = [r for g in groups.values() for r in work(g)]
    order = {c: i for i, c in enumerate(cells)}
    results.sort(key=lambda r: order[(r.benchmark, r.p, r.h_exp, r.smoother)])
    table = ResultTable(config, results)
    (out_dir / "results.csv").write_text(table.to_csv())
    (out_dir / "results.md").write_text(table.to_markdown())
    return table


def _load(path, args):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SystemExit(f"iga-pmg: cannot read {path}: {exc.strerror}")
    cfg = parse_config(text)
    over = {}
    if args.out is not None:
        over["out"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    if args.dump_matrices:
        over["dump_matrices"] = True
    return replace(cfg, **over)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="iga-pmg", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run a sweep and write results"),
                        ("table", "run a sweep and print the markdown table")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="key = value config file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="seed of the initial guess")
        p.add_argument("--threads", type=int, default=1, help="cells run concurrently")
        p.add_argument("--dump-matrices", action="store_true",
                       help="write level operators in MatrixMarket format")
    args = parser.parse_args(argv)
    try:
        cfg = _load(args.config, args)
    except ConfigError as exc:
        parser.exit(2, f"iga-pmg: {exc}\n")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.exit(2, "iga-pmg: --seed must be an unsigned 64-bit integer\n")
    log = sys.stderr
    table = run(cfg, threads=max(1, args.threads), log=log)
    if args.command == "table":
        sys.stdout.write(table.to_markdown())
    else:
        print(f"wrote {Path(cfg.out) / 'results.csv'}", file=log)
    return 0


if __name__ == "__main__":
    sys.exit(main())
