"""Taylor-vortex gust kinematics.

The disturbance is an axisymmetric vortex whose tangential speed peaks at
exactly u_max on the ring r = R. This script samples the profile, verifies
the peak, and prints the induced velocity a gust produces at a few probe
points as it advects past the leading edge.

Run: python3 demos/01_gust_kinematics.py
"""

import numpy as np

from gustuq import gust_induced_velocity, taylor_vortex_velocity
from gustuq.gust import FlowCase

R, G, U_INF = 0.4, 0.8, 1.0

r = np.linspace(0.0, 4 * R, 2001)
u = taylor_vortex_velocity(r, R, G * U_INF)
print(f"tangential profile: peak {u.max():.6f} at r = {r[np.argmax(u)]:.4f} "
      f"(R = {R}, G*U_inf = {G * U_INF})")
print(f"u(0) = {taylor_vortex_velocity(0.0, R, G):.1f}, "
      f"u(2R)/u_max = {taylor_vortex_velocity(2 * R, R, 1.0):.6f} "
      f"(= 2 exp(-3/2))")

print("\ninduced velocity at probes as the gust advects (counterclockwise, G > 0):")
case = FlowCase(0, 50.0, gust_strength=G, gust_radius=R, gust_y0=0.0)
probes = np.array([[0.0, 0.0], [0.5, 0.2], [1.0, -0.3]])
for t in (0.0, 1.0, 2.0, 3.0):
    center = case.gust_center(t)
    vel = gust_induced_velocity(probes, np.tile(center, (3, 1)), R, G, U_INF)
    row = "  ".join(f"({u:+.3f},{v:+.3f})" for u, v in vel)
    print(f"  t={t:.0f}  gust at x={center[0]:+.1f}:  {row}")
