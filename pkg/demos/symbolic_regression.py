# %% [markdown]
# When cost is not linear in the factors, symbolic regression can find the
# shape. Here the path count of a nested symbolic loop grows with the
# product of two widths.

# %%
import itertools

import numpy as np

from verimodel.frontend import parse_program
from verimodel.modeling import Dataset, GPConfig, fit_linear, symbolic_regression
from verimodel.symbols import ParamSpec, SymbolSpec
from verimodel.symexec import execute

program = parse_program("""
fn grid(n, m) {
  s = 0;
  if (n > 0) { if (m > 0) { s = n * m; } }
  i = 0;
  while (i < n) { i = i + 1; }
  j = 0;
  while (j < m) { j = j + 1; }
  return s;
}
""")

# %%
X, y = [], []
for wn, wm in itertools.product(range(1, 7), repeat=2):
    spec = SymbolSpec({"n": ParamSpec.symbolic_scalar(0, wn - 1), "m": ParamSpec.symbolic_scalar(0, wm - 1)})
    X.append([wn, wm])
    y.append(execute(program, spec).stats.paths_completed)
data = Dataset(("wn", "wm"), np.array(X, dtype=float), y, "paths_completed")

# %%
linear = fit_linear(data)
print("linear:", linear.formula("paths"), f" r2={linear.r_squared:.3f}")

# %%
gp = symbolic_regression(data, GPConfig(seed=3, population=300, generations=40))
print("gp:    ", gp.formula("paths"), f" mse={gp.mse:.3g}")
