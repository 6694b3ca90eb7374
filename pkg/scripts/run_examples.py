"""Run every bundled example config through the CLI with verification.

Writes CSV + manifest pairs into --outdir and prints one line per run
with the exit code and the headline verification number.  Exit status
is nonzero if any example fails its check.
"""

import argparse
import json
import os
import sys

from dorder.cli import main as cli_main

RUNS = [
    ("example1.json", "solve", []),
    ("example2.json", "solve", []),
    ("example3.json", "stoch", []),
    ("example4.json", "stoch", []),
    ("example5.json", "stoch", []),
]


def headline(manifest):
    v = manifest.get("verify")
    if v is None:
        return "no verify block"
    kind = v["kind"]
    for key in ("max_abs_error", "max_rel_error", "rel_error", "variance_rel_change"):
        if key in v:
            return f"{kind}: {key}={v[key]:.3e} pass={v['pass']}"
    return f"{kind}: pass={v['pass']}"


def run(configs_dir, outdir, n_basis):
    os.makedirs(outdir, exist_ok=True)
    worst = 0
    for name, command, extra in RUNS:
        config = os.path.join(configs_dir, name)
        stem = os.path.splitext(name)[0]
        output = os.path.join(outdir, f"{stem}.{command}.csv")
        argv = [command, config, "--n-basis", str(n_basis), "--verify",
                "--output", output] + extra
        code = cli_main(argv)
        worst = max(worst, code)
        line = f"{name:15s} {command:5s} exit={code}"
        manifest_path = output[:-4] + ".manifest.json"
        if os.path.exists(manifest_path):
            with open(manifest_path) as fh:
                line += "  " + headline(json.load(fh))
        print(line)
    return worst


if __name__ == "__main__":
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default=os.path.join(here, "configs"))
    ap.add_argument("--outdir", default="example_runs")
    ap.add_argument("--n-basis", type=int, default=512)
    args = ap.parse_args()
    sys.exit(run(args.configs, args.outdir, args.n_basis))
