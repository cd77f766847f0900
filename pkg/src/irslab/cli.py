"""Command-line experiment runner.

Subcommands ``analytic``, ``simulate``, ``validate`` and ``sweep`` evaluate a
JSON config over its grid and write ``results.csv`` and ``report.json`` to
``--out``; ``recipe <name>`` emits a ready-made config. Exit codes: 0 on
success, 1 when a validation point fails, 2 on config or runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from typing import Optional

from . import __version__, analytic, energy
from .config import ConfigError, ExperimentConfig, GridPoint, MODES, load_config, parse_config
from .numerics import ConvergenceError
from .simulate import MetricEstimate, MetricKind, Scheme, SimRequest, SimResult, simulate

log = logging.getLogger("irslab")

SCHEMA_LINE = "#schema=1"
CSV_COLUMNS = ["scheme", "M", "P_dB", "rho", "metric", "analytic_value", "N", "m", "T", "tau",
               "Delta", "psi", "kappa", "sigma_sq_dB", "noise_dB", "P_o_dB", "sigma_e_sq",
               "sim_value", "sim_half_width_95", "trials", "rel_gap", "pass"]
REL_TOL = 0.02
APPROX_REL_TOL = 0.10
N_SIGMA = 3.0


@dataclass
class ResultRecord:
    point: GridPoint
    metric: MetricKind
    analytic: Optional[float] = None
    simulated: Optional[MetricEstimate] = None
    rel_gap: Optional[float] = None
    passed: Optional[bool] = None

    def row(self) -> list[str]:
        r = self.point.raw
        sim = self.simulated
        return [self.point.scheme.value, _fmt(r["M"]), _fmt(r["P_dB"]), _fmt(r["rho"]),
                self.metric.value, _fmt(self.analytic)] + [
            _fmt(r[k]) for k in ("N", "m", "T", "tau", "Delta", "psi", "kappa", "sigma_sq_dB",
                                 "noise_dB", "P_o_dB", "sigma_e_sq")] + [
            _fmt(sim.value if sim else None), _fmt(sim.half_width_95 if sim else None),
            _fmt(sim.trials if sim else None), _fmt(self.rel_gap),
            "" if self.passed is None else str(self.passed).lower()]

    def as_json(self) -> dict:
        return dict(zip(CSV_COLUMNS, self.row()))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


# ---------------------------------------------------------------------------
# per-point evaluation
# ---------------------------------------------------------------------------

def _ct_error(p: GridPoint) -> float:
    if p.sigma_e_sq is not None:
        return p.sigma_e_sq
    return analytic.sigma_e_sq(p.coding.tau_training, p.training_power, p.sp.m_elements)


def _is_approximate(p: GridPoint, metric: MetricKind) -> bool:
    """Metrics whose analytic value is itself an approximation of the simulated quantity."""
    if p.scheme is Scheme.RRC and metric is MetricKind.OUTAGE:
        return p.coding.t_channel_uses > 1
    return p.scheme is Scheme.OBF and metric in (MetricKind.RATE, MetricKind.ENERGY_EFFICIENCY)


def analytic_value(p: GridPoint, metric: MetricKind, pm: energy.PowerModel) -> Optional[float]:
    """Closed-form value of ``metric`` at ``p``; None where no expression exists."""
    s, sp, rho = p.scheme, p.sp, p.rho
    if metric is MetricKind.ENERGY_EFFICIENCY:
        rate = analytic_value(p, MetricKind.RATE, pm)
        if rate is None:
            return None
        return energy.energy_efficiency(rate, s, sp, pm, p.coding, p.selection)
    if metric is MetricKind.OUTAGE:
        if s is Scheme.RANDOM:
            return analytic.outage_random(rho, sp)
        if s is Scheme.RRC:
            return analytic.outage_rrc_ind(rho, sp, p.coding.t_channel_uses)
        if s is Scheme.TD:
            return analytic.outage_td(rho, p.selection, sp)
        if s is Scheme.ATD:
            return analytic.outage_atd(rho, p.selection, sp)
        if s is Scheme.CT:
            return analytic.outage_ct(rho, sp, _ct_error(p))
        return None
    if metric is MetricKind.RATE:
        if s in (Scheme.RANDOM, Scheme.RRC):
            return analytic.rate_random(sp)
        if s is Scheme.OBF:
            return analytic.rate_obf_approx(p.coding, sp) if sp.m_elements > 1 else None
        if s is Scheme.TD:
            return analytic.rate_td(p.selection, sp)
        if s is Scheme.ATD:
            return analytic.rate_atd(p.selection, sp)
        return analytic.rate_ct(sp, _ct_error(p))
    if metric is MetricKind.FEEDBACK_BITS:
        if s is Scheme.TD:
            return float(math.ceil(math.log2(p.selection.n_subsurfaces)))
        if s is Scheme.ATD:
            return analytic.atd_feedback_bits(p.selection.threshold_psi, p.selection, sp)
        if s in (Scheme.RANDOM, Scheme.RRC):
            return 0.0
        return None
    if metric is MetricKind.MEAN_SNR:
        if s is Scheme.RANDOM:
            return sp.snr * sp.sigma_sq * sp.m_elements
        if s is Scheme.CT:
            err = _ct_error(p)
            scale = sp.noise_var / (sp.noise_var + err) * (1.0 - err)
            return scale * analytic.expected_bf_snr(sp)
        return None
    raise ValueError(f"unsupported metric {metric}")


def _simulated(p: GridPoint, metric: MetricKind, res: SimResult,
               pm: energy.PowerModel) -> Optional[MetricEstimate]:
    if metric is MetricKind.OUTAGE:
        return res.outage
    if metric is MetricKind.RATE:
        return res.rate
    if metric is MetricKind.FEEDBACK_BITS:
        if p.scheme in (Scheme.RANDOM, Scheme.RRC):
            return MetricEstimate(0.0, 0.0, res.rate.trials, metric)
        return res.feedback_bits
    if metric is MetricKind.MEAN_SNR:
        return res.mean_snr
    scale = energy.energy_efficiency(1.0, p.scheme, p.sp, pm, p.coding, p.selection)
    return MetricEstimate(res.rate.value * scale, res.rate.half_width_95 * scale,
                          res.rate.trials, metric)


def _judge(rec: ResultRecord, approximate: bool) -> None:
    a, sim = rec.analytic, rec.simulated
    if a is None or sim is None:
        return
    diff = abs(sim.value - a)
    rec.rel_gap = diff / abs(a) if a != 0 else (0.0 if diff == 0 else math.inf)
    if approximate:
        rec.passed = diff <= APPROX_REL_TOL * abs(a)
    else:
        rec.passed = diff <= max(N_SIGMA * sim.std_error, REL_TOL * abs(a))


def evaluate(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRecord]:
    want_analytic = cfg.mode in ("analytic", "validate", "sweep")
    want_sim = cfg.mode in ("simulate", "validate", "sweep")
    records = []
    for p in cfg.points():
        log.info("point %s %s", p.scheme.value, {k: v for k, v in p.raw.items() if v is not None})
        res = None
        if want_sim:
            req = SimRequest(p.scheme, p.sp, cfg.trials, cfg.seed, p.rho, p.coding, p.selection,
                             p.training_power, p.sigma_e_sq)
            res = simulate(req, workers=threads)
        for metric in cfg.metrics:
            rec = ResultRecord(p, metric)
            if want_analytic:
                rec.analytic = analytic_value(p, metric, cfg.power)
            if res is not None:
                rec.simulated = _simulated(p, metric, res, cfg.power)
            if rec.analytic is None and rec.simulated is None:
                continue
            if cfg.mode == "validate":
                _judge(rec, _is_approximate(p, metric))
            records.append(rec)
    return records


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def render_csv(records: list[ResultRecord]) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(rec.row())
    return buf.getvalue()


def _atomic_write(files: dict[str, str], out_dir: str) -> None:
    """Write every file or none: stage in temporaries, then rename."""
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged.append((tmp, os.path.join(out_dir, name)))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for tmp, final in staged:
            os.replace(tmp, final)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise


def run(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> int:
    start = time.perf_counter()
    records = evaluate(cfg, threads)
    failures = sum(1 for r in records if r.passed is False)
    report = {
        "version": __version__,
        "mode": cfg.mode,
        "config": cfg.source,
        "threads": threads,
        "wall_clock_s": time.perf_counter() - start,
        "n_records": len(records),
        "n_failures": failures,
        "records": [r.as_json() for r in records],
    }
    _atomic_write({"results.csv": render_csv(records),
                   "report.json": json.dumps(report, indent=2) + "\n"}, out_dir)
    log.info("%d records, %d validation failures", len(records), failures)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# figure recipes
# ---------------------------------------------------------------------------

def _p_grid(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step))
    return [lo + k * step for k in range(n + 1)]


RECIPES = {
    # outage vs P for the RRC scheme; 1e6 trials resolve outages down to ~1e-5
    "fig3": {
        "name": "fig3", "mode": "sweep", "schemes": ["RRC"], "metrics": ["outage"],
        "grid": {"P_dB": _p_grid(-10.0, 20.0, 2.5), "M": [4, 10], "T": [1, 2, 3], "rho": [1.0]},
        "trials": 1_000_000, "seed": 1,
    },
    # TD outage vs P for (m, N) pairs, with CT at M in {4, 10} and perfect CSI
    "fig5": {
        "name": "fig5", "mode": "sweep", "schemes": ["TD", "CT"], "metrics": ["outage"],
        "grid": {"P_dB": _p_grid(-10.0, 15.0, 2.5), "M": [4, 10], "m": [4, 10],
                 "N": [1, 2, 5], "sigma_e_sq": [0.0], "rho": [1.0]},
        "trials": 1_000_000, "seed": 1,
    },
    # selection schemes vs N at P = -10 dB, m fixed
    "fig6": {
        "name": "fig6", "mode": "sweep", "schemes": ["TD", "ATD"],
        "metrics": ["outage", "feedback_bits"],
        "grid": {"P_dB": [-10.0], "m": [10], "N": list(range(1, 9)), "psi": [0.9, 1.1],
                 "rho": [1.0]},
        "trials": 1_000_000, "seed": 1,
    },
    # energy efficiency vs M; TD uses one training slot per sub-surface (N = tau)
    "fig7-like": {
        "name": "fig7-like", "mode": "sweep",
        "schemes": ["Random", "RRC", "OBF", "TD", "CT"], "metrics": ["rate", "energy_efficiency"],
        "grid": {"P_dB": [-10.0, 0.0], "M": list(range(20, 201, 20)), "N": [10, 20],
                 "T": [500], "tau": [10, 20], "Delta": [0.1], "kappa": [0.6], "P_o_dB": [0.0],
                 "rho": [1.0]},
        "power": {"xi": 1.2, "P_S_dBW": 9.0, "P_D_dBm": 10.0, "P_E_dBm": 10.0},
        "trials": 20_000, "seed": 1,
    },
}


def figure_recipe(name: str) -> ExperimentConfig:
    if name not in RECIPES:
        raise ConfigError(f"recipe: unknown figure {name!r}; expected one of {sorted(RECIPES)}")
    return parse_config(json.loads(json.dumps(RECIPES[name])))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--trials", type=int, help="override the config trial count")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results unchanged)")
    parser = argparse.ArgumentParser(prog="irslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        sub.add_parser(mode, parents=[common], help=f"run the config in {mode} mode")
    rec = sub.add_parser("recipe", parents=[common], help="emit a figure config")
    rec.add_argument("name", help=f"one of {sorted(RECIPES)}")
    return parser


def _configure_logging() -> None:
    level = os.environ.get("IRSLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[list[str]] = None) -> int:
    _configure_logging()
    args = _parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "recipe":
            cfg = figure_recipe(args.name).with_overrides(args.trials, args.seed)
            text = json.dumps(cfg.source, indent=2) + "\n"
            if args.out:
                _atomic_write({f"{args.name}.json": text}, args.out)
            else:
                sys.stdout.write(text)
            return 0
        if not args.config:
            raise ConfigError("--config is required")
        if not args.out:
            raise ConfigError("--out is required")
        cfg = load_config(args.config)
        if cfg.mode != args.command:
            log.info("config mode %r overridden by subcommand %r", cfg.mode, args.command)
        cfg = cfg.with_overrides(args.trials, args.seed, args.command)
        return run(cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"irslab: config error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, ValueError, OSError) as exc:
        print(f"irslab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
