#!/usr/bin/env python3
"""Solve every exported .lp file in this directory with HiGHS.

Writes <name>.sol (one `variable value` pair per line) and expected.json
mapping each fixture name to the MILP optimum reported by HiGHS.

    pip install highspy
    for g in pairing tracks3 dag; do vflow export-lp --graph $g.json --out $g.lp; done
    python3 solve_highs.py
"""

import json
import pathlib
import sys

import highspy

HERE = pathlib.Path(__file__).resolve().parent


def solve(path):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 0.0)
    if h.readModel(str(path)) != highspy.HighsStatus.kOk:
        sys.exit(f"{path.name}: HiGHS could not read the model")
    h.run()
    status = h.getModelStatus()
    if status != highspy.HighsModelStatus.kOptimal:
        sys.exit(f"{path.name}: {h.modelStatusToString(status)}")
    names = h.getLp().col_names_
    values = h.getSolution().col_value
    return h.getInfo().objective_function_value, list(zip(names, values))


def main():
    expected = {}
    for lp in sorted(HERE.glob("*.lp")):
        objective, values = solve(lp)
        lines = [f"{n} {v!r}" for n, v in values]
        lp.with_suffix(".sol").write_text("\n".join(lines) + "\n")
        expected[lp.stem] = {"objective": objective, "solver": f"HiGHS {highspy.Highs().version()}"}
        print(f"{lp.stem}: {objective!r}")
    (HERE / "expected.json").write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
