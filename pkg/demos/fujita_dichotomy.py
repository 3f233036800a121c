"""
Blow-up versus global existence for u_t = Delta_H u + u^p.

With Q = 4 the critical exponent is p_F = 1 + 2/Q = 1.5.  The same small
datum lam (1+|eta|)^-5 blows up for p = 1.25, whatever lam is, and the life
span grows like lam^(-1/2); for p = 2 it decays and exists globally.
"""
import numpy as np

from heisenberg_fujita.axial import AxialGrid
from heisenberg_fujita.conditions import PowerDecay
from heisenberg_fujita.lifespan import fit_scaling, predicted_exponent, sweep_lambda
from heisenberg_fujita.nonlinear import EvolutionConfig, estimate_lifespan

datum = PowerDecay(5.0)

# subcritical: every amplitude blows up
cfg = EvolutionConfig(p=1.25, T_max=200.0, grid=AxialGrid.for_horizon(200.0, h=0.2), dt_relative=0.01)
lams = np.geomspace(1.0, 0.1, 5)
records = sweep_lambda(datum, lams, cfg)
for r in records:
    print(f"p=1.25  lambda={r.lam:.3f}  T={r.T_est:8.2f}  blew up: {r.blew_up}")
fit = fit_scaling(records, predicted_exponent(1.25, 2.0, 4, 5.0))
print(f"fitted slope {fit.slope:.3f}, predicted {fit.predicted:.3f}")

# supercritical: small data live forever
cfg = EvolutionConfig(p=2.0, T_max=10.0, grid=AxialGrid.for_horizon(10.0, h=0.2), dt_relative=0.01)
for lam in (5.0, 100.0):
    r = estimate_lifespan(datum, lam, cfg)
    last = r.sup_trace[-1][1]
    print(f"p=2     lambda={lam:6.1f}  " + (f"blows up at {r.T_est:.3f}" if r.blew_up
                                           else f"survives to {r.T_est:g}, sup {last:.3e}"))
