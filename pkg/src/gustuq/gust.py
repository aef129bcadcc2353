"""Synthetic gust-encounter flow model with known ground truth.

Stands in for the expensive flow solver: the low-order flow state follows a
Stuart-Landau oscillator in (xi1, xi2) with xi3 pinned to the angle of
attack, so undisturbed trajectories are closed orbits (or a fixed point for
the nearly steady lowest angle) and gust forcing perturbs the orbit and
relaxes back. The vorticity field, lift coefficient, and surface-pressure
readings are exact smooth functions of (latent state, gust state), which
gives every downstream model a recoverable target.

Conventions: chord c=1 with the leading edge at the origin, freestream
U_inf=1 along +x, angle of attack rotating the chord nose-up (trailing edge
at (cos a, -sin a)). The gust is a Taylor vortex advected with the
freestream from x_o/c = -2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError

ALPHA_SET = (20.0, 30.0, 40.0, 50.0, 60.0)

# Stuart-Landau presets per angle of attack: linear rate sigma and angular
# frequency omega. Amplitude sqrt(max(sigma, 0)) and frequency grow with
# alpha; the 20-degree case is steady (damped to the origin).
ALPHA_PRESETS = {
    20.0: (-1.5, 1.5),
    30.0: (0.80, 2.0),
    40.0: (0.95, 2.5),
    50.0: (1.10, 3.0),
    60.0: (1.30, 3.5),
}

# gust-to-latent coupling: additive forcing G * FORCING_GAIN * dir, gated by
# a Gaussian pulse in the gust center's chordwise position
FORCING_GAIN = 0.8
FORCING_DIR = np.array([1.0, 0.4])

# lift map C_L = c0(alpha) + c1 xi1 + c2 xi2 + c3 xi1 xi2
LIFT_BASE_PER_DEG = 0.02
LIFT_C1 = 0.45
LIFT_C2 = 0.25
LIFT_C3 = 0.12

# sensor pressure response to the passing gust: kappa * G * (2R/c) * exp(-d^2/R^2)
GUST_PRESSURE_GAIN = 1.2

DEFAULT_HORIZON = 15.0  # convective times per trajectory


# --- gust kinematics --------------------------------------------------------


def taylor_vortex_velocity(r, R, u_max):
    """Tangential speed u_max * (r/R) * exp(1/2 - r^2 / (2 R^2)).

    Peaks at exactly u_max when r = R.
    """
    if R <= 0:
        raise ContractError(f"vortex radius must be positive, got {R}")
    r = np.asarray(r, dtype=np.float64)
    return u_max * (r / R) * np.exp(0.5 - r * r / (2.0 * R * R))


def taylor_vortex_vorticity(r, R, u_max):
    """Vorticity of the Taylor vortex, (1/r) d(r u_theta)/dr."""
    if R <= 0:
        raise ContractError(f"vortex radius must be positive, got {R}")
    r = np.asarray(r, dtype=np.float64)
    r2 = r * r / (R * R)
    return (u_max / R) * np.exp(0.5 - 0.5 * r2) * (2.0 - r2)


def gust_induced_velocity(point, center, R, G, u_inf):
    """Velocity (u, v) induced at `point` by a Taylor vortex at `center`.

    Counterclockwise for G > 0, zero at the center by continuity.
    """
    point = np.asarray(point, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    dx = point[..., 0] - center[..., 0]
    dy = point[..., 1] - center[..., 1]
    r = np.hypot(dx, dy)
    u_theta = taylor_vortex_velocity(r, R, G * u_inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(r > 0.0, -u_theta * dy / r, 0.0)
        v = np.where(r > 0.0, u_theta * dx / r, 0.0)
    return np.stack([u, v], axis=-1)


def pressure_coefficient(p_s, p_inf, rho, u_inf):
    """C_p = 2 (p_s - p_inf) / (rho * u_inf^2)."""
    if rho <= 0 or u_inf <= 0:
        raise ContractError(f"need rho > 0 and u_inf > 0, got rho={rho}, u_inf={u_inf}")
    return 2.0 * (np.asarray(p_s, dtype=np.float64) - p_inf) / (rho * u_inf * u_inf)


# --- geometry ---------------------------------------------------------------


def naca0012_half_thickness(f):
    """Half-thickness of a NACA 0012 section at chord fraction f."""
    f = np.asarray(f, dtype=np.float64)
    return 5 * 0.12 * (
        0.2969 * np.sqrt(f) - 0.1260 * f - 0.3516 * f**2
        + 0.2843 * f**3 - 0.1015 * f**4
    )


@dataclass(frozen=True)
class SensorLayout:
    """11 pressure taps wrapped around the airfoil, numbered from the upper
    trailing edge counter-clockwise to the lower trailing edge, at the 11
    evenly spaced chord fractions 0.05 + 0.09 k alternating surfaces.

    The stacked input vector is [11 pressures, 11 x coords, 11 y coords].
    """

    fractions: tuple = (0.95, 0.77, 0.59, 0.41, 0.23, 0.05,
                        0.14, 0.32, 0.50, 0.68, 0.86)
    sides: tuple = (1, 1, 1, 1, 1, 1, -1, -1, -1, -1, -1)

    @property
    def n_sensors(self):
        return len(self.fractions)

    @property
    def stacked_dim(self):
        return 3 * self.n_sensors

    @property
    def pressure_slots(self):
        return np.arange(self.n_sensors)

    @property
    def coordinate_slots(self):
        return np.arange(self.n_sensors, self.stacked_dim)

    def positions(self, alpha_deg, chord=1.0):
        """Sensor (x, y) in the global frame for a given angle of attack."""
        a = np.deg2rad(alpha_deg)
        chord_dir = np.array([np.cos(a), -np.sin(a)])
        normal = np.array([np.sin(a), np.cos(a)])
        f = np.asarray(self.fractions)
        h = naca0012_half_thickness(f) * np.asarray(self.sides)
        return (f[:, None] * chord * chord_dir[None, :]
                + h[:, None] * chord * normal[None, :])

    def stack(self, pressures, positions):
        return np.concatenate([pressures, positions[:, 0], positions[:, 1]])


DEFAULT_LAYOUT = SensorLayout()


@dataclass(frozen=True)
class GridSpec:
    """Coarse vorticity sampling window behind and above the airfoil."""

    nx: int = 48
    ny: int = 24
    x_min: float = -0.9
    x_max: float = 3.9
    y_min: float = -1.2
    y_max: float = 1.2

    @property
    def n_pixels(self):
        return self.nx * self.ny

    def centers(self):
        x = self.x_min + (np.arange(self.nx) + 0.5) * (self.x_max - self.x_min) / self.nx
        y = self.y_min + (np.arange(self.ny) + 0.5) * (self.y_max - self.y_min) / self.ny
        return np.meshgrid(x, y)  # (ny, nx) each


DEFAULT_GRID = GridSpec()


# --- flow case ---------------------------------------------------------------


@dataclass
class FlowCase:
    """One simulated condition: an angle of attack plus optional gust."""

    case_id: int
    alpha_deg: float
    gust_strength: float = 0.0  # G = u_theta_max / U_inf, in [-1, 1]
    gust_radius: float = 0.375  # R; 2R/c in [0.5, 1]
    gust_y0: float = 0.0  # y_o/c in [-0.5, 0.5]
    gust_x0: float = -2.0  # x_o/c, fixed upstream start
    chord: float = 1.0
    u_inf: float = 1.0
    reynolds: float = 100.0  # metadata; nu = u_inf * chord / reynolds

    def __post_init__(self):
        if float(self.alpha_deg) not in ALPHA_SET:
            raise ContractError(f"alpha must be one of {ALPHA_SET}, got {self.alpha_deg}")
        if not -1.0 <= self.gust_strength <= 1.0:
            raise ContractError(f"gust strength G must be in [-1, 1], got {self.gust_strength}")
        two_r = 2.0 * self.gust_radius / self.chord
        if self.gust_strength != 0.0 and not 0.5 <= two_r <= 1.0:
            raise ContractError(f"2R/c must be in [0.5, 1], got {two_r}")
        if not -0.5 <= self.gust_y0 / self.chord <= 0.5:
            raise ContractError(f"y_o/c must be in [-0.5, 0.5], got {self.gust_y0}")

    @property
    def disturbed(self):
        return self.gust_strength != 0.0

    @property
    def sigma(self):
        return ALPHA_PRESETS[float(self.alpha_deg)][0]

    @property
    def omega(self):
        return ALPHA_PRESETS[float(self.alpha_deg)][1]

    @property
    def orbit_amplitude(self):
        return float(np.sqrt(max(self.sigma, 0.0)))

    @property
    def orbit_period(self):
        return 2.0 * np.pi / self.omega

    @property
    def xi3(self):
        return self.alpha_deg / 60.0

    def gust_center(self, t):
        """Gust core advected with the freestream."""
        t = np.asarray(t, dtype=np.float64)
        x = self.gust_x0 + self.u_inf * t
        return np.stack([x, np.full_like(x, self.gust_y0)], axis=-1)

    def forcing(self, t):
        """Additive (xi1, xi2) forcing: proportional to G, gated by
        exp(-2 (x_g/c)^2), and modulated by gust size and offset."""
        if not self.disturbed:
            return np.zeros(2) if np.isscalar(t) else np.zeros((np.size(t), 2))
        x_g = (self.gust_x0 + self.u_inf * np.asarray(t, dtype=np.float64)) / self.chord
        gate = np.exp(-2.0 * x_g * x_g)
        size = (2.0 * self.gust_radius / self.chord) * np.exp(-((self.gust_y0 / self.chord) ** 2))
        amp = FORCING_GAIN * self.gust_strength * size * gate
        return np.multiply.outer(amp, FORCING_DIR) if np.ndim(amp) else amp * FORCING_DIR

    def initial_latent(self):
        """Start on the attractor: the limit cycle at phase zero, or the
        fixed point for the steady preset."""
        return np.array([self.orbit_amplitude, 0.0])


# --- latent dynamics ----------------------------------------------------------


def latent_rhs(case: FlowCase, t, z):
    """d(xi1, xi2)/dt of the forced Stuart-Landau oscillator."""
    x, y = z
    r2 = x * x + y * y
    f = case.forcing(t)
    return np.array([
        case.sigma * x - case.omega * y - r2 * x + f[0],
        case.omega * x + case.sigma * y - r2 * y + f[1],
    ])


def integrate_latent(case: FlowCase, times, substeps=10):
    """Fixed-step RK4 on the latent oscillator, `substeps` internal steps per
    output interval. Aborts if the state blows past |xi| = 1e3."""
    times = np.asarray(times, dtype=np.float64)
    out = np.zeros((times.size, 2))
    z = case.initial_latent()
    out[0] = z
    for k in range(times.size - 1):
        t0, t1 = times[k], times[k + 1]
        h = (t1 - t0) / substeps
        t = t0
        for _ in range(substeps):
            k1 = latent_rhs(case, t, z)
            k2 = latent_rhs(case, t + 0.5 * h, z + 0.5 * h * k1)
            k3 = latent_rhs(case, t + 0.5 * h, z + 0.5 * h * k2)
            k4 = latent_rhs(case, t + h, z + h * k3)
            z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        if not np.all(np.abs(z) < 1e3):
            raise NumericError(f"latent integration blew up in case {case.case_id} at t={t1:.3f}")
        out[k + 1] = z
    return out


def latent_trajectory(case: FlowCase, times, substeps=10):
    """Full 3-component latent history; xi3 is constant per case."""
    z = integrate_latent(case, times, substeps=substeps)
    xi = np.zeros((z.shape[0], 3))
    xi[:, :2] = z
    xi[:, 2] = case.xi3
    return xi


def orbit_distance(case: FlowCase, xi):
    """Distance of latent states to the undisturbed attractor (a circle of
    the preset amplitude, or the origin for the steady preset)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    radii = np.hypot(xi[:, 0], xi[:, 1])
    return np.abs(radii - case.orbit_amplitude)


# --- observations: vorticity field, lift, pressures ---------------------------

# Three translating Gaussian vortex blobs; centers and strengths are smooth
# (and through the translation, strongly nonlinear) functions of the latent
# state. Columns: coefficients on (1, xi1, xi2, xi3); widths per blob. The
# xi3 (angle-of-attack) terms shift the blobs away from the chord and deepen
# them, so distinct angles imprint distinctly on the sampled window.
_BLOB_CX = np.array([[0.35, 0.25, 0.0, 0.0],
                     [1.10, 0.0, 0.30, 0.0],
                     [2.10, 0.45, 0.0, 0.0]])
_BLOB_CY = np.array([[0.10, 0.0, 0.25, 0.60],
                     [-0.10, -0.25, 0.0, 0.35],
                     [0.15, 0.0, -0.30, 0.30]])
_BLOB_AMP = np.array([[-1.20, -0.70, 0.0, -0.90],
                      [0.90, 0.0, 0.55, 0.70],
                      [-0.60, -0.50, 0.50, -0.50]])
_BLOB_WIDTH = np.array([0.30, 0.35, 0.50])


def _xi_features(xi):
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    return np.column_stack([np.ones(xi.shape[0]), xi])  # (n, 4)


def vorticity_field(xi, case: FlowCase, t, grid: GridSpec = DEFAULT_GRID):
    """Ground-truth vorticity on the sampling window: latent-driven blobs
    plus the gust's own Taylor-vortex footprint at its advected center."""
    feats = _xi_features(xi)  # (n, 4)
    n = feats.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    gx, gy = grid.centers()
    field = np.zeros((n, grid.ny, grid.nx))
    cx = feats @ _BLOB_CX.T  # (n, 3)
    cy = feats @ _BLOB_CY.T
    amp = feats @ _BLOB_AMP.T
    for b in range(3):
        dx = gx[None, :, :] - cx[:, b, None, None]
        dy = gy[None, :, :] - cy[:, b, None, None]
        w2 = 2.0 * _BLOB_WIDTH[b] ** 2
        field += amp[:, b, None, None] * np.exp(-(dx * dx + dy * dy) / w2)
    if case.disturbed:
        center = case.gust_center(t)  # (n, 2)
        dx = gx[None, :, :] - center[:, 0, None, None]
        dy = gy[None, :, :] - center[:, 1, None, None]
        r = np.sqrt(dx * dx + dy * dy)
        field += taylor_vortex_vorticity(r, case.gust_radius,
                                         case.gust_strength * case.u_inf)
    return field if np.ndim(xi) > 1 else field[0]


def lift_coefficient(xi, case: FlowCase):
    """C_L as a fixed polynomial in the latent state."""
    xi = np.asarray(xi, dtype=np.float64)
    x1, x2 = xi[..., 0], xi[..., 1]
    return (LIFT_BASE_PER_DEG * case.alpha_deg + LIFT_C1 * x1 + LIFT_C2 * x2
            + LIFT_C3 * x1 * x2)


# Per-sensor pressure response coefficients: a bias, a linear term, and a
# symmetric quadratic form in the latent state. Drawn once from a fixed seed
# so every build of the package observes the same synthetic flow.
def _sensor_coefficients(n_sensors=11, seed=20240811):
    rng = np.random.default_rng(seed)
    bias = 0.8 * rng.uniform(-1.0, 1.0, n_sensors)
    linear = 0.6 * rng.uniform(-1.0, 1.0, (n_sensors, 3))
    quad = 0.2 * rng.uniform(-1.0, 1.0, (n_sensors, 3, 3))
    quad = 0.5 * (quad + np.transpose(quad, (0, 2, 1)))
    return bias, linear, quad


_P_BIAS, _P_LIN, _P_QUAD = _sensor_coefficients()


def sensor_pressures(xi, case: FlowCase, t, layout: SensorLayout = DEFAULT_LAYOUT):
    """Pressure coefficients at the taps, shape (n_states, n_sensors): a
    sensor-specific quadratic in the latent state plus a proximity kernel to
    the advected gust core."""
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    n = xi.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    cp = (_P_BIAS[None, :]
          + xi @ _P_LIN.T
          + np.einsum("ni,sij,nj->ns", xi, _P_QUAD, xi))
    if case.disturbed:
        pos = layout.positions(case.alpha_deg, case.chord)  # (s, 2)
        center = case.gust_center(t)  # (n, 2)
        d2 = ((pos[None, :, 0] - center[:, 0, None]) ** 2
              + (pos[None, :, 1] - center[:, 1, None]) ** 2)
        kernel = np.exp(-d2 / (case.gust_radius ** 2))
        cp = cp + (GUST_PRESSURE_GAIN * case.gust_strength
                   * (2.0 * case.gust_radius / case.chord)) * kernel
    return cp


def observe(xi, case: FlowCase, t, layout: SensorLayout = DEFAULT_LAYOUT):
    """Stacked sensor vector [pressures, x coords, y coords] for one state."""
    cp = sensor_pressures(np.atleast_2d(xi), case, t, layout)[0]
    pos = layout.positions(case.alpha_deg, case.chord)
    return layout.stack(cp, pos)


# --- trajectories --------------------------------------------------------------


@dataclass
class Snapshot:
    """One time sample: stacked sensor vector, vorticity window, lift, and
    the generator's true latent state."""

    t: float
    p_stacked: np.ndarray
    omega: np.ndarray
    lift: float
    xi_true: np.ndarray


@dataclass
class CaseTrajectory:
    case: FlowCase
    times: np.ndarray
    xi: np.ndarray  # (n, 3)
    omega: np.ndarray  # (n, ny, nx)
    lift: np.ndarray  # (n,)
    p_stacked: np.ndarray  # (n, 3 * n_sensors)

    def __len__(self):
        return self.times.size

    def snapshot(self, i) -> Snapshot:
        return Snapshot(float(self.times[i]), self.p_stacked[i], self.omega[i],
                        float(self.lift[i]), self.xi[i])


def surrogate_trajectory(case: FlowCase, n_snapshots, dt=None,
                         grid: GridSpec = DEFAULT_GRID,
                         layout: SensorLayout = DEFAULT_LAYOUT,
                         substeps=10) -> CaseTrajectory:
    """Integrate one case and materialize snapshots.

    Default snapshot spacing covers the 15-convective-time horizon uniformly:
    dt = 15 / (n_snapshots - 1). RK4 subdivides each interval `substeps`
    times internally.
    """
    if n_snapshots < 2:
        raise ContractError("need at least 2 snapshots")
    if dt is None:
        dt = DEFAULT_HORIZON / (n_snapshots - 1)
    times = np.arange(n_snapshots) * dt
    xi = latent_trajectory(case, times, substeps=substeps)
    omega = vorticity_field(xi, case, times, grid)
    lift = lift_coefficient(xi, case)
    pos = layout.positions(case.alpha_deg, case.chord)
    cp = sensor_pressures(xi, case, times, layout)
    p_stacked = np.concatenate(
        [cp, np.tile(pos[:, 0], (n_snapshots, 1)), np.tile(pos[:, 1], (n_snapshots, 1))],
        axis=1,
    )
    return CaseTrajectory(case, times, xi, omega, lift, p_stacked)
