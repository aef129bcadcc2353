"""The synthetic flow generator.

Undisturbed cases trace closed orbits in the latent plane (a fixed point for
the steady 20-degree preset); a passing gust kicks the state off the orbit
and the trajectory relaxes back once the vortex leaves. Lift responds to
gust polarity: a counterclockwise gust raises the peak, a clockwise one
drops the early lift below baseline.

Run: python3 demos/02_surrogate_flow.py
"""

import numpy as np

from gustuq.gust import FlowCase, latent_trajectory, lift_coefficient, orbit_distance

times = np.linspace(0.0, 15.0, 751)

print("orbit closure over one period (undisturbed):")
for alpha in (30.0, 40.0, 50.0, 60.0):
    case = FlowCase(0, alpha)
    period = case.orbit_period
    tt = np.linspace(0.0, period, 200)
    xi = latent_trajectory(case, tt)
    print(f"  alpha={alpha:.0f}: period {period:.3f}, "
          f"|xi(T) - xi(0)| = {np.linalg.norm(xi[-1] - xi[0]):.2e}")

print("\ngust kick and recovery (alpha = 50):")
base = FlowCase(0, 50.0)
xi_base = latent_trajectory(base, times)
for g in (0.8, -0.8):
    case = FlowCase(1, 50.0, gust_strength=g, gust_radius=0.4, gust_y0=0.0)
    xi = latent_trajectory(case, times)
    dist = orbit_distance(case, xi)
    t_peak = times[np.argmax(dist)]
    print(f"  G={g:+.1f}: max orbit deviation {dist.max():.3f} at t={t_peak:.2f} "
          f"(gust center x={-2 + t_peak:+.2f}); "
          f"distance at t=10: {dist[times >= 10.0][0]:.2e}")

print("\nlift polarity:")
cl_base = lift_coefficient(xi_base, base)
for g in (0.8, -0.8):
    case = FlowCase(1, 50.0, gust_strength=g, gust_radius=0.4, gust_y0=0.0)
    cl = lift_coefficient(latent_trajectory(case, times), case)
    early = times <= 3.0
    print(f"  G={g:+.1f}: peak {cl.max():.3f} (baseline {cl_base.max():.3f}), "
          f"largest early drop below baseline "
          f"{min((cl - cl_base)[early].min(), 0.0):+.3f}")
