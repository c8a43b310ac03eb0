# %% [markdown]
# Convergence on the smooth rotating hump. Global FCT bounds only clip where
# the data itself is extreme, so the scheme keeps its second order.

# %%
from cr_transport.benchmarks import convergence_study, get_case

case = get_case("smooth-rotation")

# %% coarse meshes keep this to a few seconds; add 80 for the full picture
for lim in ("low-order", "fct-global"):
    study = convergence_study(case, case.config(lim), [10, 20, 40])
    print(lim)
    for r, q in zip(study.cr, study.reconstruction):
        rate = "  -- " if r.rate is None else f"{r.rate:5.2f}"
        print(f"  h={r.h:.4f}  L2={r.l2:.3e}  rate {rate}  reconstruction L2={q.l2:.3e}")
