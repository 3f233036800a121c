"""
Heat kernel of the sub-Laplacian on the first Heisenberg group.

Computes G(eta, t) on the axial engine, compares the value at the origin
with 1/(64 t^2), checks the total mass, then estimates the same kernel
from simulated horizontal Brownian motion.  Writes heat_kernel.svg.
"""
import numpy as np

from heisenberg_fujita.axial import AxialGrid
from heisenberg_fujita.hgroup import GroupPoint
from heisenberg_fujita.semigroup import heat_kernel_axial, mc_heat_kernel
from heisenberg_fujita.svg import Plot

grid = AxialGrid(r_max=8.0, tau_max=40.0, hr=0.1, htau=0.1, r_core=2.0, tau_core=2.0, ratio=1.04)

print(" t      G(0,t)      1/(64t^2)   mass")
for t in (0.25, 0.5, 1.0):
    K = heat_kernel_axial(t, grid)
    print(f"{t:4.2f}  {K.values[0, 0]:.6f}  {1 / (64 * t * t):.6f}  {K.mass():.6f}")

# Monte Carlo at a few points off the axis
t = 1.0
K = heat_kernel_axial(t, grid)
for x, tau in [(0.0, 0.0), (0.5, 0.0), (0.0, 1.0)]:
    est = mc_heat_kernel(GroupPoint([x], [0.0], tau), t, 200_000, seed=1, rotational=True)
    print(f"MC at ({x}, 0, {tau}): {est.estimate:.5f} +/- {est.stderr:.5f}   grid {K.evaluate(x, tau):.5f}")

eng = K.engine
plot = Plot("heat kernel along the axes, t = 1", "distance from the origin", "G", ylog=True)
keep = eng.rc < 3.0
plot.add(eng.rc[keep], K.values[keep, 0], "horizontal axis")
keep_t = eng.tau < 9.0
plot.add(np.sqrt(eng.tau[keep_t]), K.values[0, keep_t], "vertical axis (vs sqrt tau)", dashed=True)
with open("heat_kernel.svg", "w") as fh:
    fh.write(plot.render())
