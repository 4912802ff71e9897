"""Command-line front end: ``divtest <command> --config FILE [--seed N] [--out PATH]``.

Configs are JSON objects; command-line flags override their fields. Scalar
results are written as JSON that embeds the resolved config. Tables are
written as CSV, and the resolved config goes to a ``<out>.config.json``
sidecar so the CSV stays a plain table.

Exit codes: 0 success, 1 configuration error, 2 enumeration budget
exceeded, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import asymptotics, exact, montecarlo
from .divergence import DivergenceSpec, evaluate, invariance_constant, parse_divergence
from .simplex import Distribution, make_distribution, read_sample, rng_stream, type_of_sample

COMMANDS = ("decide", "calibrate", "exact", "mc", "sweep", "asympt", "invariance", "lemma1")

EXIT_CONFIG = 1
EXIT_BUDGET = 2
EXIT_IO = 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    divergence: str = "js"
    distributions: dict[str, list[float]] = field(default_factory=dict)
    n: int | None = None
    n_grid: list[int] | None = None
    eps: float | None = None
    r: float | None = None
    trials: int | None = None
    seed: int = 0
    out: str | None = None
    pair_budget: int = exact.DEFAULT_PAIR_BUDGET
    workers: int | None = None
    method: str = "exact"
    sample_x: str | None = None
    sample_y: str | None = None
    k: int | None = None
    divergences: list[str] | None = None
    random_p: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        if "command" not in raw:
            raise ConfigError("config needs a 'command'")
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def dist(self, name: str) -> Distribution:
        if name not in self.distributions:
            raise ConfigError(f"command {self.command!r} needs distribution {name!r}")
        try:
            return make_distribution(self.distributions[name])
        except ValueError as exc:
            raise ConfigError(f"distribution {name!r}: {exc}") from None

    def spec(self) -> DivergenceSpec:
        try:
            return parse_divergence(self.divergence)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def need(self, *names: str) -> None:
        missing = [nm for nm in names if getattr(self, nm) is None]
        if missing:
            raise ConfigError(f"command {self.command!r} needs {', '.join(missing)}")

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.eps is not None and not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.n_grid is not None and (not self.n_grid or min(self.n_grid) < 1):
            raise ConfigError("n_grid must be a nonempty list of positive integers")
        if self.r is not None and not self.r > 0:
            raise ConfigError("r must be positive")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.method not in ("exact", "mc"):
            raise ConfigError("method must be 'exact' or 'mc'")
        self.spec()
        need = {
            "decide": ("sample_x", "sample_y"),
            "calibrate": ("n", "eps"),
            "exact": ("n",),
            "mc": ("n", "trials"),
            "sweep": ("n_grid", "eps"),
            "asympt": ("eps",),
            "invariance": (),
            "lemma1": ("n_grid",),
        }[self.command]
        self.need(*need)
        if self.command in ("exact", "mc") and self.r is None and self.eps is None:
            raise ConfigError(f"command {self.command!r} needs r or eps")
        if self.command == "decide" and self.r is None and (self.eps is None or "P" not in self.distributions):
            raise ConfigError("decide needs r, or eps together with a null distribution P")
        if self.method == "mc" and self.command in ("calibrate", "lemma1"):
            self.need("trials")


def _clean(obj):
    """Make floats JSON-safe and deterministic."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _json_report(cfg: ExperimentConfig, result: dict) -> str:
    return json.dumps(_clean({"config": cfg.to_dict(), "result": result}), indent=2, sort_keys=True) + "\n"


def _csv_table(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(cfg: ExperimentConfig, text: str, table: bool) -> None:
    if cfg.out is None:
        sys.stdout.write(text)
        return
    Path(cfg.out).write_text(text)
    if table:
        Path(cfg.out + ".config.json").write_text(
            json.dumps(_clean(cfg.to_dict()), indent=2, sort_keys=True) + "\n"
        )


def _null(cfg: ExperimentConfig) -> Distribution:
    return cfg.dist("P") if "P" in cfg.distributions else cfg.dist("P1")


def _threshold(cfg: ExperimentConfig, d: DivergenceSpec, p: Distribution, n: int) -> float:
    if cfg.r is not None:
        return cfg.r
    if cfg.method == "mc":
        return montecarlo.mc_calibrate(d, p, n, cfg.eps, cfg.trials, cfg.seed, cfg.workers)
    return exact.calibrate_exact(d, p, n, cfg.eps, cfg.pair_budget, cfg.workers)


def _cmd_decide(cfg: ExperimentConfig) -> None:
    d = cfg.spec()
    x, y = read_sample(cfg.sample_x), read_sample(cfg.sample_y)
    if x.size == 0 or y.size == 0:
        raise ConfigError("empty sample file")
    if x.size != y.size:
        raise ConfigError(f"sample sizes differ: {x.size} vs {y.size}")
    if cfg.k is not None:
        k = cfg.k
    elif "P" in cfg.distributions:
        k = len(cfg.distributions["P"])
    else:
        k = int(max(x.max(), y.max())) + 1
    try:
        tx, ty = type_of_sample(x, k), type_of_sample(y, k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    r = _threshold(cfg, d, cfg.dist("P") if cfg.r is None else None, x.size)
    stat = evaluate(d, tx.probs, ty.probs)
    decision = "H0" if stat < r else "H1"
    sys.stdout.write(decision + "\n")
    if cfg.out is not None:
        _emit(cfg, _json_report(cfg, {"statistic": stat, "threshold": r, "decision": decision, "n": x.size}), False)


def _cmd_calibrate(cfg: ExperimentConfig) -> None:
    d = cfg.spec()
    r = _threshold(cfg, d, _null(cfg), cfg.n)
    _emit(cfg, _json_report(cfg, {"threshold": r, "method": cfg.method}), False)


def _cmd_exact(cfg: ExperimentConfig) -> None:
    d = cfg.spec()
    p = _null(cfg)
    r = _threshold(cfg, d, p, cfg.n)
    rep = exact.error_report(d, r, p, cfg.dist("P1"), cfg.dist("P2"), cfg.n, cfg.pair_budget, cfg.workers)
    _emit(cfg, _json_report(cfg, rep.to_dict()), False)


def _cmd_mc(cfg: ExperimentConfig) -> None:
    d = cfg.spec()
    p = _null(cfg)
    r = _threshold(cfg, d, p, cfg.n)
    a = montecarlo.mc_error(d, r, p, p, cfg.n, cfg.trials, cfg.seed, "type1", cfg.workers)
    b = montecarlo.mc_error(d, r, cfg.dist("P1"), cfg.dist("P2"), cfg.n, cfg.trials, cfg.seed, "type2", cfg.workers)
    result = {"threshold": r, "type1": a.to_dict(), "type2": b.to_dict()}
    _emit(cfg, _json_report(cfg, result), False)
    if cfg.out is not None:
        a.blocks_csv(cfg.out + ".type1_blocks.csv")
        b.blocks_csv(cfg.out + ".type2_blocks.csv")


def _cmd_sweep(cfg: ExperimentConfig) -> None:
    d = cfg.spec()
    p1, p2 = cfg.dist("P1"), cfg.dist("P2")
    p = _null(cfg)
    pred = asymptotics.prediction(p1, p2, cfg.eps)
    rows = []
    for n in cfg.n_grid:
        r = exact.calibrate_exact(d, p, n, cfg.eps, cfg.pair_budget, cfg.workers)
        nlb = -exact.exact_type2(d, r, p1, p2, n, cfg.pair_budget, cfg.workers)
        pr = pred.predicted_neg_log_beta(n)
        rows.append([n, nlb, pr, (nlb - pr) / math.sqrt(n)])
    _emit(cfg, _csv_table(["n", "exact_neg_log_beta", "predicted", "residual_over_sqrt_n"], rows), True)


def _cmd_asympt(cfg: ExperimentConfig) -> None:
    pred = asymptotics.prediction(cfg.dist("P1"), cfg.dist("P2"), cfg.eps)
    result = pred.to_dict()
    grid = cfg.n_grid or ([cfg.n] if cfg.n is not None else [])
    result["predicted_neg_log_beta"] = {str(n): pred.predicted_neg_log_beta(n) for n in grid}
    _emit(cfg, _json_report(cfg, result), False)


def _cmd_invariance(cfg: ExperimentConfig) -> None:
    names = cfg.divergences or [cfg.divergence]
    try:
        specs = [parse_divergence(s) for s in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ps = [cfg.dist(key) for key in sorted(cfg.distributions)]
    if cfg.random_p:
        if cfg.k is None:
            raise ConfigError("random_p needs k")
        rng = rng_stream(cfg.seed, 0)
        ps += [make_distribution(rng.dirichlet(np.ones(cfg.k))) for _ in range(cfg.random_p)]
    if not ps:
        raise ConfigError("invariance needs distributions or random_p")
    rows = []
    for d in specs:
        for p in ps:
            eta = invariance_constant(d, p)
            rows.append([d.name, json.dumps(p.probs.tolist()), "" if eta is None else eta, eta is not None])
    _emit(cfg, _csv_table(["divergence", "p", "eta", "invariant"], rows), True)


def _cmd_lemma1(cfg: ExperimentConfig) -> None:
    d = cfg.spec()
    p = _null(cfg)
    rows = []
    for n in cfg.n_grid:
        if cfg.method == "mc":
            gap = montecarlo.statistic_ecdf_gap(d, p, n, cfg.trials, cfg.seed, cfg.workers)
        else:
            gap = exact.lemma1_sup_gap_exact(d, p, n, cfg.pair_budget, cfg.workers)
        rows.append([n, gap])
    _emit(cfg, _csv_table(["n", "sup_gap"], rows), True)


_DISPATCH = {
    "decide": _cmd_decide,
    "calibrate": _cmd_calibrate,
    "exact": _cmd_exact,
    "mc": _cmd_mc,
    "sweep": _cmd_sweep,
    "asympt": _cmd_asympt,
    "invariance": _cmd_invariance,
    "lemma1": _cmd_lemma1,
}


def run(cfg: ExperimentConfig) -> int:
    """Validate and execute one experiment; returns the process exit code."""
    try:
        cfg.validate()
        _DISPATCH[cfg.command](cfg)
    except exact.BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divtest", description="Divergence-based two-sample tests on finite alphabets.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="report path (stdout if omitted)")
    ap.add_argument("--workers", type=int, help="worker threads (default: all cores)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: bad config JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(raw, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    raw["command"] = args.command
    for key in ("seed", "out", "workers"):
        val = getattr(args, key)
        if val is not None:
            raw[key] = val
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
