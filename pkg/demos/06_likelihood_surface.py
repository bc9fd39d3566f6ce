# Two-class likelihood surfaces: BCE, the any-class likelihood and their
# product, written as CSV grids for plotting elsewhere. A coarse text
# rendering is printed so the shapes can be eyeballed without a plot.
import tempfile
from pathlib import Path

import numpy as np

from anyclass import likelihood_surface_grid

SHADES = " .:-=+*#%@"


def render(grid, res):
    v = grid[:, 2].reshape(res, res)  # rows: p1, columns: p2
    lines = []
    for i in range(res - 1, -1, -1):
        lines.append("".join(SHADES[min(int(x * len(SHADES)), len(SHADES) - 1)] for x in v[i]))
    return "\n".join(lines)


res = 21
out = Path(tempfile.mkdtemp())
for targets in ((1, 1), (0, 1)):
    for case in ("bce", "any", "redesigned"):
        grid = likelihood_surface_grid(case, targets, lam=0.05, resolution=res)
        np.savetxt(out / f"{case}_{targets[0]}{targets[1]}.csv", grid, delimiter=",",
                   header="p1,p2,value", comments="")
        print(f"\n{case}, targets {targets}  (p1 up, p2 right)")
        print(render(grid, res))

print("\nCSV grids in", out)
