"""
Ball-average conditions for local existence, calibrated on the simulator.

The necessary and sufficient conditions carry unspecified constants.  We
find the largest amplitude of (1+|eta|)^-3 whose solution survives to T,
read the constants off there, and then classify other data with them.
"""
from heisenberg_fujita.axial import AxialGrid
from heisenberg_fujita.conditions import (OptimalSingularity, PowerDecay, calibrate_constants,
                                          necessary_check, scaled, sufficient_check)
from heisenberg_fujita.nonlinear import EvolutionConfig, estimate_lifespan

p, T = 2.0, 2.0
cfg = EvolutionConfig(p=p, T_max=T, grid=AxialGrid.for_horizon(T, h=0.1), dt_relative=0.01)
cal = calibrate_constants(PowerDecay(3.0), T, cfg, 0.1, 1000.0, rel_tol=0.1)
print(f"threshold amplitude {cal.lambda_star:.3f}; necessary constant {cal.gamma_necessary:.3f}, "
      f"sufficient constant {cal.gamma_sufficient:.3f}")

for base, amp in [(PowerDecay(5.0), 2.0), (PowerDecay(5.0), 500.0),
                  (OptimalSingularity(1.0, p, cutoff_eps=0.1), 0.2),
                  (OptimalSingularity(1.0, p, cutoff_eps=0.1), 20.0)]:
    mu = scaled(base, amp)
    suf = sufficient_check(mu, T, p, 2.0, cal.gamma_sufficient)
    nec = necessary_check(mu, T, p, 2.0, cal.gamma_necessary)
    rec = estimate_lifespan(base, amp, cfg)
    fate = f"blows up at {rec.T_est:.3f}" if rec.blew_up else f"survives to {T:g}"
    print(f"{mu.descriptor():60s} sufficient {suf.worst_ratio:8.3f}  necessary {nec.worst_ratio:8.3f}  {fate}")
