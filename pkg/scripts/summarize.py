"""Print the headline tables from a results directory written by run_experiments.sh."""

import argparse
import sys
from pathlib import Path

from dexmodel.io import load_result


def reach_table(root):
    print("hand        planner  S.R.(%)        R.E.(cm)       P.S.")
    for path in sorted(root.glob("reach_*/bench_reach.json")):
        for r in load_result(path)["result"]:
            print(f"{r['hand']:<11} {r['planner']:<8} {r['success_rate']:5.1f} +- {r['success_rate_ci']:4.1f}  "
                  f"{r['reach_error']:5.2f} +- {r['reach_error_ci']:4.2f}  {r['planning_samples']}")


def budget_table(root):
    path = root / "ablate_budget" / "ablate_budget.json"
    if path.exists():
        print("\nN_s  N_cem  ours(cm)  fm_cem(cm)  paired p")
        for s in load_result(path)["result"]["summary"]:
            print(f"{s['samples']:<4} {s['iterations']:<6} {s['ours_cm']:.3f}     {s['fm_cem_cm']:.3f}       "
                  f"{s['paired_p']:.2g}")


def data_table(root):
    path = root / "ablate_data" / "ablate_data.json"
    if path.exists():
        print("\nhand        K   mean held-out MSE by N                          slope")
        for row in load_result(path)["result"]["summary"]:
            mse = " ".join(f"{m:.2e}" for m in row["mean_mse"])
            print(f"{row['hand']:<11} {row['K']:<3} {mse}  {row.get('slope_log_mse_log_n', float('nan')):.3f}")


def inhand_table(root):
    path = root / "inhand" / "bench_inhand.json"
    if path.exists():
        print("\nlearner          seed  steps to level  final success  input width")
        for r in load_result(path)["result"]["summary"]:
            print(f"{r['learner']:<16} {r['seed']:<5} {str(r['steps_to_level']):<15} "
                  f"{r['final_success']:<14.2f} {r['model_input_width']}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("results", type=Path, nargs="?", default=Path("results"))
    args = parser.parse_args(argv)
    if not args.results.is_dir():
        print(f"no results directory at {args.results}", file=sys.stderr)
        return 2
    reach_table(args.results)
    budget_table(args.results)
    data_table(args.results)
    inhand_table(args.results)
    return 0


if __name__ == "__main__":
    sys.exit(main())
