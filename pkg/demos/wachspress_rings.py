# %% [markdown]
# Vertex values of the P1 reconstruction come from Wachspress coordinates on
# the ring of edge midpoints around each interior vertex.

# %%
import numpy as np

from cr_transport.cr_space import CRFunction, cr_interpolate, error_norms
from cr_transport.mesh import build_uniform_mesh, refine_half, ring_polygon
from cr_transport.reconstruction import global_bound_check, reconstruct, wachspress

# %% ring around the centre of a 2 x 2 grid: a hexagon
mesh = build_uniform_mesh((0, 1, 0, 1), 2)
half = refine_half(mesh)
ring = ring_polygon(half, 4)
w = wachspress(ring, ring.center)
print("ring vertices\n", ring.vertices)
print("weights", np.round(w.w, 4), "sum", w.w.sum())

# %% a CR field can overshoot its DOF range at vertices; the reconstruction does not
rng = np.random.default_rng(0)
mesh = build_uniform_mesh((0, 1, 0, 1), 8)
u = CRFunction(mesh, rng.uniform(size=mesh.n_edges))
gb = global_bound_check(u)
rec = reconstruct(u, refine_half(mesh), lambda x, y, t: np.full_like(x, 0.5))
print(f"DOFs in [{u.values.min():.3f}, {u.values.max():.3f}]")
print(f"CR vertex values in [{gb.vmin:.3f}, {gb.vmax:.3f}]")
print(f"reconstruction in [{rec.values.min():.3f}, {rec.values.max():.3f}]")

# %% second order for smooth data
f = lambda x, y, t=0: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
prev = None
for n in (8, 16, 32, 64):
    mesh = build_uniform_mesh((0, 1, 0, 1), n)
    e = error_norms(reconstruct(cr_interpolate(f, mesh), refine_half(mesh), f), f).l2
    print(n, f"{e:.3e}", "" if prev is None else f"ratio {prev / e:.2f}")
    prev = e
