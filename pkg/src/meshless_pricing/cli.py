"""Batch front end.

A run is described by an ini-style file, for example::

    [run]
    test = test1-european
    job = convergence
    grids = 32x16x16, 64x32x32, 128x64x64
    kernel = C6

    [scheme]
    support_factor = 2.0
    rq_factor = 0.52

    [sweep]
    rq_factors = 0.45, 0.52
    support_factors = 2.0, 2.5

The thread count of the BLAS/LAPACK back end follows the usual
``OMP_NUM_THREADS`` / ``OPENBLAS_NUM_THREADS`` environment variables.

Command-line flags override the file. Results are written as CSV with the
header ``model,style,right,kernel,nx,nz,m,metric,value,ratio,seconds``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .models import Style
from .solver import (Discretization, build_system, convergence_ratio, error_metrics,
                     price_surface, stability_diagnostic)
from .validation import BenchmarkCase, McConfig, benchmark_cases, mc_price

log = logging.getLogger(__name__)

CSV_HEADER = ("model", "style", "right", "kernel", "nx", "nz", "m", "metric", "value", "ratio",
              "seconds")
JOBS = ("price", "convergence", "stability", "sweep")


class ConfigError(ValueError):
    """Malformed run configuration."""


def _sig(x: float) -> float:
    """Round to the 9 significant digits written to CSV."""
    return float(f"{x:.9g}")


@dataclass(frozen=True)
class RunConfig:
    test: str = "test1-european"
    job: str = "price"
    grids: tuple = ((64, 32, 32),)
    kernel: str = "C6"
    support_factor: float = 2.0
    rq_factor: float = 0.52
    augmentation: str = "quadratic"
    anisotropic: bool = True
    xi_s: float = 1.0
    xi_y: float = 10.0
    y0: Optional[float] = None
    extrapolate: bool = True
    rq_factors: tuple = (0.45, 0.52)
    support_factors: tuple = (2.0, 2.5, 3.0)
    out: Optional[str] = None
    seed: int = 0
    mc_paths: int = 0

    def __post_init__(self):
        if self.job not in JOBS:
            raise ConfigError(f"job must be one of {', '.join(JOBS)}, got {self.job!r}")
        if not self.grids:
            raise ConfigError("grid list is empty")
        for g in self.grids:
            if len(g) != 3 or min(g) < 1:
                raise ConfigError(f"grid sizes must be three positive integers, got {g}")

    def discretization(self, grid) -> Discretization:
        nx, nz, m = grid
        return Discretization(nx=nx, nz=nz, steps=m, kernel=self.kernel,
                              support_factor=self.support_factor, rq_factor=self.rq_factor,
                              augmentation=self.augmentation, anisotropic=self.anisotropic,
                              xi_s=self.xi_s, xi_y=self.xi_y)

    def case(self) -> BenchmarkCase:
        cases = benchmark_cases()
        if self.test not in cases:
            raise KeyError(f"unknown test case {self.test!r}; known: {', '.join(sorted(cases))}")
        return cases[self.test]


def parse_grids(text: str) -> tuple:
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.lower().split("x")
        try:
            out.append(tuple(int(p) for p in parts))
        except ValueError:
            raise ConfigError(f"cannot parse grid {item!r}; expected NXxNZxM") from None
        if len(out[-1]) != 3:
            raise ConfigError(f"cannot parse grid {item!r}; expected NXxNZxM")
    return tuple(out)


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


_KEYS = {
    "run": {"test": str, "job": str, "grids": parse_grids, "kernel": str, "out": str, "seed": int,
            "mc_paths": int},
    "scheme": {"support_factor": float, "rq_factor": float, "augmentation": str,
               "anisotropic": "bool", "xi_s": float, "xi_y": float, "y0": float,
               "extrapolate": "bool"},
    "sweep": {"rq_factors": _floats, "support_factors": _floats},
}


def load_config(path) -> RunConfig:
    """Parse an ini-style run file into a :class:`RunConfig`."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            conv = _KEYS[section].get(key)
            if conv is None:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[key] = parser.getboolean(section, key) if conv == "bool" else conv(raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r}: {exc}") from None
    return RunConfig(**values)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ReportRow:
    model: str
    style: str
    right: str
    kernel: str
    nx: int
    nz: int
    m: int
    metric: str
    value: float
    ratio: Optional[float]
    seconds: float

    def key(self) -> tuple:
        """Row content without the wall-clock column."""
        return (self.model, self.style, self.right, self.kernel, self.nx, self.nz, self.m,
                self.metric, self.value, self.ratio)


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    argmin: Optional[tuple] = None

    @property
    def ok(self) -> bool:
        return not self.flags

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.model, r.style, r.right, r.kernel, r.nx, r.nz, r.m, r.metric,
                        f"{r.value:.9g}", "" if r.ratio is None else f"{r.ratio:.9g}",
                        f"{r.seconds:.9g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunReport":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            rows.append(ReportRow(rec[0], rec[1], rec[2], rec[3], int(rec[4]), int(rec[5]),
                                  int(rec[6]), rec[7], float(rec[8]),
                                  None if rec[9] == "" else float(rec[9]), float(rec[10])))
        return cls(rows)


def _row(case: BenchmarkCase, kernel, grid, metric, value, ratio, seconds) -> ReportRow:
    spec = case.spec
    return ReportRow(spec.kind.value, spec.style.value, spec.right.value, kernel, grid[0],
                     grid[1], grid[2], metric, _sig(value),
                     None if ratio is None else _sig(ratio), seconds)


def _solve(case: BenchmarkCase, cfg: RunConfig, grid, y0):
    disc = cfg.discretization(grid)
    system = build_system(case.spec, disc, y0)
    surface = price_surface(system, disc.n_steps, cfg.extrapolate)
    return system, surface


def _invariants(case: BenchmarkCase, system, surface) -> list:
    flags = []
    v = surface.values
    if not np.all(np.isfinite(v)):
        flags.append("non-finite values")
    if case.spec.style is Style.AMERICAN:
        payoff = case.spec.payoff(np.repeat(system.grid.s, system.grid.nz + 1))
        if np.any(v < payoff - 1e-12):
            flags.append("american value below payoff")
    return flags


def _y0s(case: BenchmarkCase, cfg: RunConfig):
    return (cfg.y0,) if cfg.y0 is not None else case.y0s


def _job_price(cfg: RunConfig, case: BenchmarkCase, report: RunReport):
    S = case.prices()
    for grid in cfg.grids:
        for y0 in _y0s(case, cfg):
            t0 = time.perf_counter()
            system, surf = _solve(case, cfg, grid, y0)
            vals = surf.price(S, np.full_like(S, y0))
            secs = time.perf_counter() - t0
            report.flags += _invariants(case, system, surf)
            for s, v in zip(S, vals):
                report.rows.append(_row(case, cfg.kernel, grid, f"price:S={s:g}:y={y0:g}", v, None, secs))
    if cfg.mc_paths > 0 and case.spec.style is Style.EUROPEAN:
        mc = McConfig(paths=cfg.mc_paths, seed=cfg.seed)
        for y0 in _y0s(case, cfg):
            for s in S:
                t0 = time.perf_counter()
                est, se = mc_price(case.spec, s, y0, mc)
                secs = time.perf_counter() - t0
                report.rows.append(_row(case, "mc", (0, 0, mc.steps), f"mc:S={s:g}:y={y0:g}", est, None, secs))
                report.rows.append(_row(case, "mc", (0, 0, mc.steps), f"mc_se:S={s:g}:y={y0:g}", se, None, 0.0))


def _job_convergence(cfg: RunConfig, case: BenchmarkCase, report: RunReport):
    S = case.prices()
    for y0 in _y0s(case, cfg):
        ref = case.reference(y0)
        prev = None
        for grid in cfg.grids:
            t0 = time.perf_counter()
            system, surf = _solve(case, cfg, grid, y0)
            max_err, rmsrd = error_metrics(surf.price(S, np.full_like(S, y0)), ref)
            secs = time.perf_counter() - t0
            report.flags += _invariants(case, system, surf)
            value = max_err if case.metric == "maxerror" else rmsrd
            ratio = None if prev is None else convergence_ratio(prev, value)
            report.rows.append(_row(case, cfg.kernel, grid, f"{case.metric}:y={y0:g}", value, ratio, secs))
            prev = value


def _job_stability(cfg: RunConfig, case: BenchmarkCase, report: RunReport):
    for grid in cfg.grids:
        y0 = _y0s(case, cfg)[0]
        t0 = time.perf_counter()
        disc = cfg.discretization(grid)
        system = build_system(case.spec, disc, y0)
        rep = stability_diagnostic(system, case.spec.maturity / disc.n_steps)
        secs = time.perf_counter() - t0
        if not rep.converged:
            report.flags.append(f"power iteration unconverged at {grid}")
        for name, val in (("rho_ratio", rep.rho_ratio), ("rho_upsilon", rep.rho_upsilon),
                          ("rho_psi", rep.rho_psi), ("gap", rep.gap)):
            report.rows.append(_row(case, cfg.kernel, grid, f"{name}:N={rep.n_nodes}", val, None, secs))
        if rep.rho_ratio >= 1.0:
            report.flags.append(f"spectral radius {rep.rho_ratio:.6g} >= 1 at {grid}")


def sweep_rq_rw(cfg: RunConfig) -> RunReport:
    """Error landscape over ``(rq_factor, support_factor)`` pairs at each grid."""
    case = cfg.case()
    report = RunReport()
    S = case.prices()
    best = None
    for grid in cfg.grids:
        for y0 in _y0s(case, cfg):
            ref = case.reference(y0)
            for rq in cfg.rq_factors:
                for l in cfg.support_factors:
                    sub = replace(cfg, rq_factor=rq, support_factor=l)
                    t0 = time.perf_counter()
                    try:
                        system, surf = _solve(case, sub, grid, y0)
                    except Exception as exc:  # noqa: BLE001 - record and continue the sweep
                        report.flags.append(f"rq={rq:g} l={l:g} {grid}: {exc}")
                        continue
                    max_err, rmsrd = error_metrics(surf.price(S, np.full_like(S, y0)), ref)
                    value = max_err if case.metric == "maxerror" else rmsrd
                    secs = time.perf_counter() - t0
                    report.rows.append(_row(case, cfg.kernel, grid,
                                            f"{case.metric}:y={y0:g}:rq={rq:g}:l={l:g}",
                                            value, None, secs))
                    if best is None or value < best[0]:
                        best = (value, rq, l)
    if best is not None:
        report.argmin = (best[1], best[2])
    return report


def run(cfg: RunConfig) -> RunReport:
    """Execute the configured job and write the CSV when ``cfg.out`` is set."""
    case = cfg.case()
    if cfg.job == "sweep":
        report = sweep_rq_rw(cfg)
    else:
        report = RunReport()
        {"price": _job_price, "convergence": _job_convergence,
         "stability": _job_stability}[cfg.job](cfg, case, report)
    if cfg.out:
        Path(cfg.out).write_text(report.to_csv())
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrpi-price", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="ini-style run file")
    p.add_argument("--test", help="test case id (see --list)")
    p.add_argument("--job", choices=JOBS)
    p.add_argument("--kernel", type=str.upper, choices=("C2", "C4", "C6"))
    p.add_argument("--grids", help="comma separated NXxNZxM triples")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--seed", type=int)
    p.add_argument("--list", action="store_true", help="list test cases and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        for name in sorted(benchmark_cases()):
            print(name)
        return 0
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        overrides = {k: v for k, v in (("test", args.test), ("job", args.job),
                                       ("kernel", args.kernel), ("out", args.out),
                                       ("seed", args.seed)) if v is not None}
        if args.grids is not None:
            overrides["grids"] = parse_grids(args.grids)
        cfg = replace(cfg, **overrides)
        report = run(cfg)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not cfg.out:
        sys.stdout.write(report.to_csv())
    if report.argmin is not None:
        print(f"argmin rq_factor={report.argmin[0]:g} support_factor={report.argmin[1]:g}",
              file=sys.stderr)
    for flag in report.flags:
        print(f"warning: {flag}", file=sys.stderr)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
