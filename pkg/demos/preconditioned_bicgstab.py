"""
p-multigrid as a preconditioner
===============================

On the L-shaped domain one V-cycle serves as the preconditioner of BiCGSTAB.
The same cycle also works through the command-line runner.
"""
from dataclasses import replace
from pathlib import Path
import tempfile

from iga_pmg.cli import parse_config, run
from iga_pmg.discretization import benchmark
from iga_pmg.pmg import build_hierarchy, solve, solve_bicgstab

spec = benchmark(3)
for p in (2, 3, 4):
    ilut = build_hierarchy(spec, p, 2.0**-5)
    gs = build_hierarchy(spec, p, 2.0**-5, smoother="gs", operators=ilut)
    counts = [solve(ilut)[1].cycles, solve_bicgstab(ilut)[1].cycles,
              solve(gs)[1].cycles, solve_bicgstab(gs)[1].cycles]
    print(f"p={p}: ILUT stand-alone {counts[0]}, BiCGSTAB {counts[1]} | "
          f"GS stand-alone {counts[2]}, BiCGSTAB {counts[3]}")

# the same sweep as a config file; results.csv and results.md land in the output folder
config = parse_config("""
benchmark = 3
p = 2, 3
h = 4, 5
smoother = ilut, gs
mode = bicgstab
""")
with tempfile.TemporaryDirectory() as tmp:
    table = run(replace(config, out=tmp))
    print(table.to_markdown())
    print(sorted(p.name for p in Path(tmp).iterdir())[:4], "...")
