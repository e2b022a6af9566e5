# %% [markdown]
# From a design to a macro-model: run a 2^3 factorial, fit cost linearly
# on the decoded factor settings, then score the model on rows it never saw.

# %%
import json

import numpy as np

from verimodel import CORPUS_DIR
from verimodel.doe import Factor, Template, full_factorial, instantiate
from verimodel.frontend import parse_program
from verimodel.modeling import Dataset, assess, fit_linear, prediction_interval, split
from verimodel.optimizer import optimize
from verimodel.pipeline import run_experiment
from verimodel.symbols import load_spec

program = optimize(parse_program((CORPUS_DIR / "loopsum.mc").read_text()))
spec = load_spec(CORPUS_DIR / "loopsum.spec.json", program.entry_function)
factors = [Factor.from_json(d) for d in json.loads((CORPUS_DIR / "loopsum.factors.json").read_text())["factors"]]

design = full_factorial(factors).replicate(2)
rows = [run_experiment(e) for e in instantiate(design, Template(program, spec))]

# %%
names = tuple(f.name for f in factors)
data = Dataset(names, [[r[n] for n in names] for r in rows], [r["deterministic_cost"] for r in rows],
               "deterministic_cost", tuple(r["run_index"] for r in rows))
train, test = split(data, 0.25, seed=1)
model = fit_linear(train)
print(model.formula("cost"))

# %%
report = assess(model, test)
print(f"MAPE {report.mape:.3g}  RMSE {report.rmse:.3g}")

# %% [markdown]
# The cost counter is deterministic, so the residuals vanish and every
# prediction interval has zero width. Wall time would not be so kind.

# %%
lo, hi = prediction_interval(model, [5, 4, 10], 0.05)
print(model.predict([5, 4, 10]), lo, hi)

# %%
timed = Dataset(names, data.X, [r["wall_time_ns"] for r in rows], "wall_time_ns", data.row_ids)
wt = fit_linear(split(timed, 0.25, seed=1)[0], log_response=True)
print(wt.formula("wall_time_ns"))
print(np.round(prediction_interval(wt, [5, 4, 10], 0.05)))
