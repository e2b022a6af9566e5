# %% [markdown]
# Why a loop with a symbolic bound dominates verification cost: every
# extra iteration the bound allows is one more path to explore.

# %%
from verimodel.frontend import parse_program
from verimodel.symbols import ParamSpec, SymbolSpec
from verimodel.symexec import execute

program = parse_program("""
fn count(n) {
  i = 0;
  while (i < n) { i = i + 1; }
  return i;
}
""")

# %%
for k in (0, 1, 2, 4, 8, 16):
    spec = SymbolSpec({"n": ParamSpec.symbolic_scalar(0, k)})
    r = execute(program, spec)
    print(f"n in [0,{k:2d}]  paths={r.stats.paths_completed:3d}  forks={r.stats.forks:3d}  "
          f"cost={r.deterministic_cost}")

# %% [markdown]
# The same bound made concrete collapses to a single path with no solver
# queries at all.

# %%
r = execute(program, SymbolSpec({"n": ParamSpec.concrete_scalar(16)}))
print(r.stats.paths_completed, r.stats.queries)
