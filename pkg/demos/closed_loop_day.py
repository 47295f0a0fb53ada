"""
A working day under three controllers
=====================================

Runs the thermostat baseline, economic MPC and economic MPC with the
offer/request exchange over the same synthetic day and prints the
comparison table.  The MPC runs take a few minutes each; pass a shorter
day with ``--hours 7 10`` for a quick look.
"""

import argparse

from hptes.harness import (ScenarioConfig, compare_runs, format_comparison, prepare_inputs,
                           run_scenario, with_controller)

parser = argparse.ArgumentParser()
parser.add_argument("--hours", nargs=2, type=float, default=(7.0, 17.5))
args = parser.parse_args()

cfg = ScenarioConfig(operating_hours=tuple(args.hours))
inputs = prepare_inputs(cfg)

runs = {}
for controller in ("rule-based", "economic", "dsm"):
    result = run_scenario(with_controller(cfg, controller), inputs)
    runs[controller] = result
    m = result.metrics
    print(f"{controller:>10}: cost {m.energy_cost:.3f}, {m.energy_kwh:.1f} kWh, "
          f"worst shortfall {m.max_comfort_violation:.2f} C, {m.n_solves} solves")

print()
print(format_comparison(compare_runs([r.metrics for r in runs.values()])))

dsm = runs["dsm"]
for req in dsm.requests:
    print(f"request {req['window_id']}: steps {req['indices'][0]}..{req['indices'][-1]}, "
          f"honoured {req['honored']}")
