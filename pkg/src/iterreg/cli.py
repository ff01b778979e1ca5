"""Command-line driver.

    iterreg train   --config run.json [--set schedule.theta=0.75] [--out-dir out]
    iterreg indices --q 0 --tau 0 --beta 1 --zeta 1.999999999 --theta 0.5
    iterreg rates   --config rates.json [--out-dir out]
    iterreg sample  --config run.json --m 500 --out data.csv

Exit codes: 0 success, 1 bad configuration or parameters, 2 inadmissible
step schedule (pass ``schedule.force=true`` to override), 3 divergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import engine, stopping
from .evaluation import excess_risks_mc, risk_report
from .exceptions import DivergenceError, IterRegError, ScheduleError
from .kernel import (KernelExpansion, as_points, kappa as kernel_kappa, kernel_from_spec,
                     predict_many)
from .loss import get_loss, growth_params
from .synth import dist_from_spec, read_csv, write_csv

log = logging.getLogger("iterreg")

EXIT_CONFIG, EXIT_SCHEDULE, EXIT_DIVERGENCE = 1, 2, 3

PATH_COLUMNS = ["t", "eta_t", "empirical_risk", "rkhs_norm", "subgrad_norm"]


class ConfigError(IterRegError, ValueError):
    """The run configuration cannot be parsed or is incomplete."""


def fmt(x) -> str:
    """Float formatting used in every CSV: 17 significant digits."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``path.to.field=value`` overrides; values are parsed as JSON
    when possible and kept as strings otherwise."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, value = item.split("=", 1)
        keys = path.strip().split(".")
        node = cfg
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot descend into {key!r} in override {item!r}")
        node[keys[-1]] = _parse_value(value)
    return cfg


def load_config(path, overrides=()) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return apply_overrides(cfg, overrides)


def _one_of(section: dict, name: str, choices) -> str:
    keys = [k for k in choices if k in section]
    if len(keys) != 1:
        raise ConfigError(f"{name} needs exactly one of {list(choices)}, got {sorted(section)}")
    return keys[0]


def _seeds(seed) -> dict:
    data, split, mc = np.random.SeedSequence(seed).spawn(3)
    return {"data": data, "split": split, "mc": mc}


class RunSetup:
    """Everything a training run needs, resolved from a config dict."""

    def __init__(self, cfg: dict, seed_override=None):
        try:
            self.cfg = cfg
            self.seed = int(cfg.get("seed", 0) if seed_override is None else seed_override)
            kspec = dict(cfg["kernel"])
            self.user_kappa = kspec.pop("kappa", None)
            self.kernel = kernel_from_spec(kspec)
            lspec = dict(cfg["loss"])
            self.loss = get_loss(lspec.pop("name"), **lspec)
            sched = cfg.get("schedule", {})
            self.theta = float(sched["theta"])
            self.eta1 = sched.get("eta1")
            self.smooth = bool(sched.get("smooth", False))
            self.force = bool(sched.get("force", False))
            self.stopping = cfg.get("stopping", {"fixed": {"T": 100}})
            self.stop_kind = _one_of(self.stopping, "stopping",
                                     ("fixed", "theoretical", "holdout"))
            self.data = cfg["data"]
            self.data_kind = _one_of(self.data, "data", ("synthetic", "csv"))
            ev = cfg.get("evaluation", {})
            self.mc_samples = int(ev.get("mc_samples", 100_000))
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, IterRegError):
                raise
            raise ConfigError(str(exc)) from exc
        self.dist = None
        if self.data_kind == "synthetic":
            spec = dict(self.data["synthetic"])
            self.m = int(spec.pop("m", 100))
            self.dist = dist_from_spec(spec)

    def sample(self, m=None, seed=None):
        seeds = _seeds(self.seed if seed is None else seed)
        if self.dist is not None:
            return self.dist.sample(self.m if m is None else m, seeds["data"])
        return read_csv(self.data["csv"])

    def schedule(self, X, y) -> tuple[engine.StepSchedule, float]:
        kb = kernel_kappa(self.kernel, X, self.user_kappa)
        B = None if self.loss.classification else float(np.max(np.abs(y)))
        eta1 = self.eta1
        if eta1 is None:
            eta1 = engine.max_eta1(self.loss, kb.kappa, self.theta, self.smooth, B)
        return engine.StepSchedule(float(eta1), self.theta), kb.kappa

    def theoretical_T(self, m: int, y) -> tuple[int, stopping.RateIndices]:
        spec = self.stopping["theoretical"]
        rule = spec.get("rule", "general")
        beta = float(spec.get("beta", 1.0))
        if rule == "hinge":
            idx = stopping.hinge_indices(beta, self.theta)
        elif rule == "general":
            B = None if self.loss.classification else float(np.max(np.abs(y)))
            q = growth_params(self.loss, B).q
            p = stopping.RegimeParams(q, float(spec.get("tau", 0.0)), beta,
                                      float(spec.get("zeta", stopping.ZETA_LIMIT)),
                                      self.theta, self.smooth)
            idx = stopping.compute_indices(p)
        else:
            raise ConfigError(f"unknown theoretical rule {rule!r}")
        return stopping.theoretical_T(m, idx.gamma), idx


def fit(setup: RunSetup, X, y, seed=None) -> dict:
    """Train according to ``setup`` and return the pieces the commands write."""
    seeds = _seeds(setup.seed if seed is None else seed)
    sched, kap = setup.schedule(X, y)
    common = dict(smooth=setup.smooth, force=setup.force, kappa=kap)
    kind = setup.stop_kind
    info = {"rule": kind}
    if kind == "holdout":
        spec = setup.stopping["holdout"]
        T_max = int(spec.get("T_max", spec.get("T", 1000)))
        ho = stopping.holdout_stop(setup.kernel, X, y, setup.loss, sched, T_max,
                                   float(spec.get("split", 0.8)), seeds["split"], **common)
        tr = ho.train_idx
        Xtr, ytr = X[tr], y[tr]
        res = engine.run(setup.kernel, Xtr, ytr, setup.loss, sched, ho.t_star, **common)
        info.update(t_star=ho.t_star, T_max=T_max, split=float(spec.get("split", 0.8)),
                    train_size=int(tr.size))
        return dict(result=res, path=ho.result, T=ho.t_star, centers=Xtr, labels=ytr,
                    schedule=sched, kappa=kap, info=info, t_star=ho.t_star)
    if kind == "fixed":
        T = int(setup.stopping["fixed"]["T"])
    else:
        T, idx = setup.theoretical_T(X.shape[0], y)
        info.update(gamma=idx.gamma, alpha=idx.alpha, has_log_factor=idx.has_log_factor)
    info["T"] = T
    res = engine.run(setup.kernel, X, y, setup.loss, sched, T, **common)
    return dict(result=res, path=res, T=T, centers=X, labels=y, schedule=sched,
                kappa=kap, info=info, t_star=T)


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def write_path_csv(path, records, t_star=None) -> None:
    """One row per visited iterate.  Hold-out runs add a ``validation_risk``
    column and a final marker row whose ``t`` field is ``stop``; the rest of
    that row repeats row ``t_star``."""
    with_val = any(r.validation_risk is not None for r in records)
    forced = any(r.forced for r in records)
    cols = PATH_COLUMNS + (["validation_risk"] if with_val else []) + (
        ["forced"] if forced else [])

    def row(r, t_field):
        out = [t_field, fmt(r.eta), fmt(r.empirical_risk), fmt(r.rkhs_norm),
               fmt(r.subgrad_norm)]
        if with_val:
            out.append(fmt(r.validation_risk))
        if forced:
            out.append("1" if r.forced else "0")
        return out

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow(row(r, str(r.t)))
        if t_star is not None:
            w.writerow(row(records[t_star - 1], "stop"))


def model_dict(setup: RunSetup, fitted: dict) -> dict:
    res = fitted["result"]
    st = res.state
    last = engine.last_iterate(st)
    return {
        "kernel": setup.kernel.to_spec(),
        "loss": setup.loss.to_spec(),
        "schedule": {"eta1": fitted["schedule"].eta1, "theta": fitted["schedule"].theta,
                     "smooth": setup.smooth, "admissible": res.admissible},
        "kappa": fitted["kappa"],
        "stopping": fitted["info"],
        "T": fitted["T"],
        "best_t": st.best_t,
        "final_empirical_risk": res.records[-1].empirical_risk,
        "centers": np.asarray(fitted["centers"]).tolist(),
        "coefficients": {
            "last": last.tolist(),
            "averaged": engine.averaged_iterate(st).tolist(),
            "best": engine.best_iterate(st).tolist(),
        },
    }


def load_model(path) -> dict[str, KernelExpansion]:
    """Read a model JSON and return its ``last``/``averaged``/``best`` predictors."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    k = kernel_from_spec(d["kernel"])
    return {name: KernelExpansion(k, d["centers"], coef)
            for name, coef in d["coefficients"].items()}


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg, args) -> Path:
    d = Path(args.out_dir or cfg.get("output", {}).get("dir", "iterreg_out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    setup = RunSetup(cfg)
    X, y = setup.sample()
    X = as_points(X, setup.kernel.dim)
    fitted = fit(setup, X, y)
    out = _out_dir(cfg, args)
    holdout = setup.stop_kind == "holdout"
    write_path_csv(out / "path.csv", fitted["path"].records,
                   fitted["t_star"] if holdout else None)
    _write_json(out / "model.json", model_dict(setup, fitted))
    # the points the returned model was fit on (the training partition for hold-out)
    write_csv(out / "train.csv", fitted["centers"], fitted["labels"])
    if setup.dist is not None:
        res = fitted["result"]
        mc_seed = _seeds(setup.seed)["mc"]
        reports = {}
        for name, coef in (("last", res.last), ("averaged", res.averaged),
                           ("best", res.best)):
            f = KernelExpansion(setup.kernel, fitted["centers"], coef)
            rep = risk_report(setup.loss, f, fitted["centers"], fitted["labels"],
                              setup.dist, setup.mc_samples, mc_seed)
            reports[name] = rep.to_dict()
        _write_json(out / "report.json", reports)
    print(f"trained {fitted['T']} steps; outputs in {out}")
    return 0


def cmd_indices(args) -> int:
    if args.fixed_T_eps is not None:
        theta, gamma = stopping.hinge_fixed_T_schedule(args.beta, args.fixed_T_eps)
        out = {"theta": theta, "gamma": gamma}
    elif args.hinge:
        idx = stopping.hinge_indices(args.beta, args.theta)
        out = {"gamma": idx.gamma, "alpha": idx.alpha, "has_log_factor": idx.has_log_factor}
    else:
        p = stopping.RegimeParams(args.q, args.tau, args.beta, args.zeta, args.theta,
                                  args.smooth)
        idx = stopping.compute_indices(p, args.iterate)
        out = {"gamma": idx.gamma, "alpha": idx.alpha, "has_log_factor": idx.has_log_factor}
        if args.m is not None:
            out["T"] = stopping.theoretical_T(args.m, idx.gamma)
    print(json.dumps(out))
    return 0


def cmd_sample(args) -> int:
    cfg = load_config(args.config, args.set)
    setup = RunSetup(cfg)
    if setup.dist is None:
        raise ConfigError("sample needs a synthetic data spec")
    X, y = setup.dist.sample(args.m or setup.m, _seeds(setup.seed if args.seed is None
                                                       else args.seed)["data"])
    write_csv(args.out, X, y)
    return 0


VARIANTS = ("last", "averaged", "best")


def _rates_cell(payload):
    cfg, m, rep = payload
    setup = RunSetup(cfg)
    rates = cfg["rates"]
    seed = [setup.seed, int(m), int(rep)]
    t0 = time.perf_counter()
    X, y = setup.dist.sample(int(m), np.random.SeedSequence(seed))
    X = as_points(X, setup.kernel.dim)
    fitted = fit(setup, X, y, seed=seed)
    wall = time.perf_counter() - t0
    res = fitted["result"]
    n = int(rates.get("mc_samples", setup.mc_samples))
    # common random numbers across cells keep the m-trend free of MC jitter
    mc_seed = int(rates.get("mc_seed", 12345))
    coefs = np.column_stack([res.last, res.averaged, res.best])
    # one sample and one kernel evaluation serve all three variants
    ex, mis = excess_risks_mc(
        setup.loss, lambda Z: predict_many(setup.kernel, fitted["centers"], coefs, Z),
        setup.dist, n, mc_seed)
    return [(int(m), int(rep), name, ex[j].estimate,
             None if mis is None else mis[j].estimate, fitted["t_star"], wall)
            for j, name in enumerate(VARIANTS)]


def loglog_slope(ms, values) -> float | None:
    """Least-squares slope of ``log(values)`` against ``log(ms)``."""
    ms = np.asarray(ms, dtype=float)
    v = np.asarray(values, dtype=float)
    if ms.size < 2 or np.any(v <= 0) or np.any(~np.isfinite(v)):
        return None
    return float(np.polyfit(np.log(ms), np.log(v), 1)[0])


def _workers() -> int:
    cap = os.environ.get("IterREG_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"IterREG_THREADS must be an integer, got {cap!r}") from None
    return n


def run_rates(cfg: dict) -> tuple[list, dict]:
    """Run the rate sweep described by ``cfg["rates"]``; returns rows and summary."""
    rates = cfg.get("rates")
    if not isinstance(rates, dict):
        raise ConfigError("rates needs a 'rates' section")
    grid = [int(m) for m in rates.get("m_grid", [])]
    reps = int(rates.get("repetitions", 1))
    if len(grid) == 0 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("rates.m_grid must be a nonempty increasing list")
    if reps < 1:
        raise ConfigError("rates.repetitions must be >= 1")
    setup = RunSetup(cfg)
    if setup.dist is None:
        raise ConfigError("rates needs a synthetic data spec")
    cells = [(cfg, m, r) for m in grid for r in range(reps)]
    workers = min(_workers(), len(cells))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_rates_cell, cells))
    else:
        results = [_rates_cell(c) for c in cells]
    rows = [row for cell in results for row in cell]

    summary = {"m_grid": grid, "repetitions": reps, "median_excess_risk": {},
               "slope": {}, "median_excess_misclassification": {}}
    for v in VARIANTS:
        med = [float(np.median([r[3] for r in rows if r[0] == m and r[2] == v])) for m in grid]
        summary["median_excess_risk"][v] = med
        summary["slope"][v] = loglog_slope(grid, med)
        if setup.dist.classification:
            summary["median_excess_misclassification"][v] = [
                float(np.median([r[4] for r in rows if r[0] == m and r[2] == v]))
                for m in grid]
    return rows, summary


def cmd_rates(args) -> int:
    cfg = load_config(args.config, args.set)
    rows, summary = run_rates(cfg)
    out = _out_dir(cfg, args)
    with open(out / "rates.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "repetition", "variant", "excess_risk",
                    "excess_misclassification", "t_star", "wall_time"])
        for m, rep, v, ex, mis, t, wall in rows:
            w.writerow([m, rep, v, fmt(ex), "" if mis is None else fmt(mis), t, fmt(wall)])
    _write_json(out / "rates_summary.json", summary)
    for v in VARIANTS:
        s = summary["slope"][v]
        print(f"{v}: log-log slope {'n/a' if s is None else fmt(s)}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iterreg", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True)
        p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                       help="override a config field, e.g. schedule.theta=0.75")
        return p

    p = with_config(sub.add_parser("train", help="train one model"))
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("indices", help="print stopping/rate power indices")
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--zeta", type=float, default=stopping.ZETA_LIMIT)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--iterate", choices=["last", "averaged", "best"], default="last")
    p.add_argument("--hinge", action="store_true", help="hinge-loss closed forms")
    p.add_argument("--fixed-T-eps", type=float, default=None,
                   help="hinge fixed-horizon schedule for this epsilon")
    p.add_argument("--m", type=int, default=None, help="also print T for this sample size")
    p.set_defaults(func=cmd_indices)

    p = with_config(sub.add_parser("rates", help="excess-risk sweep over sample sizes"))
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_rates)

    p = with_config(sub.add_parser("sample", help="export a synthetic sample to CSV"))
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScheduleError as exc:
        print(f"error: inadmissible schedule: {exc}", file=sys.stderr)
        return EXIT_SCHEDULE
    except DivergenceError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (IterRegError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
