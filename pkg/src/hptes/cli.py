"""Command-line entry point: ``hptes <subcommand> --config FILE --out DIR``.

``simulate`` runs the controller named in the scenario file, ``mpc-run``
and ``baseline`` force economic MPC and the rule-based controller,
``flex`` runs one flexibility assessment, ``fit-cop`` fits the COP surface,
``forecast`` produces a combined seasonal demand forecast and ``compare``
tabulates several runs against the first one.  Errors print their class
and message and exit with status 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, synthetic
from .forecast import forecast_combined
from .mpc import assess_flexibility, model_for
from .thermal import PAPER_COP, cop_eval, fit_cop


def _load(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _relative(config, path) -> Path:
    """Resolve a path named inside a config file against the file's folder."""
    p = Path(path)
    return p if p.is_absolute() else Path(config).parent / p


def _scenario(path, out: Path, **changes) -> harness.ScenarioConfig:
    cfg = harness.ScenarioConfig.from_json(path)
    return replace(cfg, output_dir=str(out), **changes)


def _summary(result: harness.RunResult) -> str:
    m = result.metrics
    return (f"{m.controller}: {m.energy_kwh:.2f} kWh, cost {m.energy_cost:.3f}, "
            f"max violation {m.max_comfort_violation:.2f} °C, "
            f"DR {m.dr_requests_honored}/{m.dr_requests_total}")


def cmd_simulate(args) -> None:
    print(_summary(harness.run_scenario(_scenario(args.config, args.out))))


def cmd_mpc_run(args) -> None:
    print(_summary(harness.run_scenario(_scenario(args.config, args.out, controller="economic"))))


def cmd_baseline(args) -> None:
    print(_summary(harness.run_scenario(_scenario(args.config, args.out, controller="rule-based"))))


def cmd_flex(args) -> None:
    cfg = _scenario(args.config, args.out)
    inputs = harness.prepare_inputs(cfg)
    t = cfg.day_start + args.at * harness.HOUR if args.at is not None else cfg.opening
    state = cfg.plant.initial_state(t)
    n = cfg.mpc.assessment_horizon
    fc = harness.control_forecasts(inputs, cfg, t, n)
    cm = model_for(state, cfg.plant.tank(), cfg.plant.hp(), fc, cfg.mpc, [1] * n)
    lp = Path(args.out) / "flex.lp" if cfg.lp_dump else None
    window = assess_flexibility(cm, cfg.mpc, mode=cfg.assessment_mode, lp_dump=lp)
    k0 = int(t // cfg.mpc.step)
    report = {"timestamp": t, "offered": [k0 + i for i in window.offered],
              "length_steps": len(window.offered), "delta_star": window.delta_star,
              "s": window.s.tolist(), "z": window.z.tolist(), "plan": window.plan.to_dict()}
    (Path(args.out) / "flex.json").write_text(json.dumps(report, indent=2, default=float),
                                              encoding="utf-8")
    print(f"flexibility window: {len(window.offered)} steps from t={t:g}s")


def cmd_fit_cop(args) -> None:
    settings = _load(args.config)
    if "samples_csv" in settings:
        with open(_relative(args.config, settings["samples_csv"]), newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.DictReader(fh)]
        samples = [(float(r["t_in"]), float(r["t_amb"]), float(r["cop"])) for r in rows]
    else:
        syn = settings.get("synthetic", {})
        rng = np.random.default_rng(int(syn.get("seed", 0)))
        n = int(syn.get("n", 176))
        t_in = rng.uniform(*syn.get("t_in_range", (30.0, 70.0)), n)
        t_amb = rng.uniform(*syn.get("t_amb_range", (-5.0, 25.0)), n)
        y = cop_eval(PAPER_COP, t_in, t_amb) + rng.normal(0.0, float(syn.get("sigma", 0.2)), n)
        samples = list(zip(t_in, t_amb, y))
    fit = fit_cop(samples)
    p = fit.params
    out = {"a1": p.a1, "a2": p.a2, "a3": p.a3, "a4": p.a4, "rmse": fit.rmse, "vaf": fit.vaf,
           "n": fit.n_samples, "condition": fit.condition_number}
    (Path(args.out) / "cop_fit.json").write_text(json.dumps(out, indent=2), encoding="utf-8")
    print(f"COP fit: a=({p.a1:.4f}, {p.a2:.4f}, {p.a3:.4f}, {p.a4:.5f}), RMSE {fit.rmse:.3f}")


def cmd_forecast(args) -> None:
    settings = _load(args.config)
    step = float(settings.get("step", 300.0))
    per_day = int(round(synthetic.DAY / step))
    if "history_csv" in settings:
        _, values = harness.read_series_csv(_relative(args.config, settings["history_csv"]))
        history = values / 3600.0
    else:
        days = int(settings.get("days", 21))
        history = synthetic.demand_history(days, step, int(settings.get("seed", 0))) / 3600.0
    order = tuple(settings.get("order", (1, 0, 1)))
    seasonal = tuple(settings.get("seasonal", (1, 1, 1)))
    daily = harness.fit_or_best(history, order, (*seasonal, per_day))
    weekly = harness.fit_or_best(history, order, (*seasonal, 7 * per_day))
    start = float(settings.get("start", len(history) * step))
    fc = forecast_combined(daily, weekly, history, float(settings.get("alpha", 0.5)),
                           int(settings.get("horizon", per_day)), start=start, step=step)
    fc.to_csv(Path(args.out) / "forecast.csv")
    print(f"forecast: {len(fc)} steps of {step:g}s, total {fc.values.sum() * step:.0f} kg")


def cmd_compare(args) -> None:
    settings = _load(args.config)
    base = Path(args.config).parent
    runs = []
    for path in settings.get("metrics", []):
        runs.append(harness.RunMetrics.from_dict(_load(base / path)))
    for i, path in enumerate(settings.get("scenarios", [])):
        cfg = _scenario(base / path, Path(args.out) / f"run{i}")
        runs.append(harness.run_scenario(cfg).metrics)
    rows = harness.compare_runs(runs)
    (Path(args.out) / "comparison.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    text = harness.format_comparison(rows)
    (Path(args.out) / "comparison.txt").write_text(text + "\n", encoding="utf-8")
    print(text)


COMMANDS = {
    "simulate": (cmd_simulate, "closed-loop day with the controller named in the config"),
    "mpc-run": (cmd_mpc_run, "closed-loop day under economic MPC"),
    "flex": (cmd_flex, "one flexibility assessment from the initial state"),
    "fit-cop": (cmd_fit_cop, "fit the bilinear COP surface"),
    "forecast": (cmd_forecast, "combined daily/weekly seasonal demand forecast"),
    "baseline": (cmd_baseline, "closed-loop day under the rule-based controller"),
    "compare": (cmd_compare, "tabulate runs against the first one"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hptes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", required=True, help="output directory")
        if name == "flex":
            p.add_argument("--at", type=float, default=None,
                           help="hour of the day for the assessment (default: opening)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](args)
    except Exception as exc:  # report the error class, exit nonzero
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
