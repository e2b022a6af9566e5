# %% [markdown]
# Screening: a 12-run Plackett-Burman design over the corpus program
# `loopsum`, with a deliberately useless factor thrown in.

# %%
import json

from verimodel import CORPUS_DIR
from verimodel.doe import Factor, Template, instantiate, main_effects, plackett_burman, screen
from verimodel.frontend import parse_program
from verimodel.optimizer import optimize
from verimodel.pipeline import run_experiment
from verimodel.symbols import load_spec

program = optimize(parse_program((CORPUS_DIR / "loopsum.mc").read_text()))
spec = load_spec(CORPUS_DIR / "loopsum.spec.json", program.entry_function)
factors = [Factor.from_json(d) for d in json.loads((CORPUS_DIR / "loopsum.factors.json").read_text())["factors"]]
# the loop cap never binds here, so it should screen out
factors.append(Factor("cap", "loop-cap", 64, 128))

# %%
design = plackett_burman(factors)
rows = [run_experiment(e) for e in instantiate(design, Template(program, spec))]
effects = main_effects(design, [r["deterministic_cost"] for r in rows])
for name, e in effects.items():
    print(f"{name:8s} {e:10.1f}")

# %%
print("selected:", screen(effects, threshold=1.0))
