"""Reduced tethered buoyant-body simulator used as the co-design benchmark.

The model keeps only the coordinates that enter the performance index:

* zenith ``Phi`` and azimuth ``Theta`` of the tether, each a damped planar
  pendulum driven by buoyancy, lift, drag and side force;
* twist ``Psi`` about the tether (heading ``psi = Theta + Psi``), pulled
  towards the flow heading by a weathervane moment that grows with the
  stabiliser area;
* pitch and roll deflections of the body relative to the bridle;
* three tether lengths whose rates are the controller outputs.

Body pitch is ``theta = theta' + Phi + e_theta`` and body roll is
``phi = phi' + e_phi`` where ``theta'``/``phi'`` are the induced angles of the
bridle. Lift, drag, heading and pitch coefficients are affine in the
stabiliser-area ratio; the roll moment coefficient is affine in pitch and in
the centre-of-mass offset, which is what couples the best trim pitch to the
plant design.

The state vector layout used by the compiled core is::

    0 Phi   1 dPhi   2 Theta   3 dTheta   4 Psi   5 dPsi
    6 e_theta   7 de_theta   8 e_phi   9 de_phi
    10 l_center   11 l_stbd   12 l_port
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.integrate import trapezoid

try:
    from numba import njit
except ModuleNotFoundError:  # pragma: no cover - optional acceleration

    def njit(*args, **kwargs):
        """No-op stand-in when numba is unavailable."""

        def _decorator(fn):
            return fn

        return _decorator


N_STATE = 13
N_FILTER = 3

MIXING = np.array([[1.0, -1.0, 0.0], [1.0, 1.0, 1.0], [1.0, 1.0, -1.0]])
MIXING.setflags(write=False)

HISTORY_FIELDS = (
    "time",
    "zenith",
    "azimuth",
    "twist",
    "pitch",
    "roll",
    "heading",
    "flow_heading",
    "altitude",
    "tether_length",
    "induced_pitch",
    "induced_roll",
    "pitch_setpoint",
    "u_center",
    "u_stbd",
    "u_port",
)
_H = {name: i for i, name in enumerate(HISTORY_FIELDS)}


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantParams:
    """Design variables changed only between experiments."""

    cm_offset: float = 0.0  # m, centre of mass minus centre of buoyancy
    stab_area: float = 1.25  # m^2, horizontal stabiliser area

    def as_array(self) -> np.ndarray:
        return np.array([self.cm_offset, self.stab_area])

    @classmethod
    def from_array(cls, x) -> "PlantParams":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != 2:
            raise ValueError(f"plant vector needs 2 entries, got {x.size}")
        return cls(float(x[0]), float(x[1]))


@dataclass(frozen=True)
class ControlParams:
    """Controller setting adapted during an experiment."""

    pitch_setpoint: float = 0.0  # rad

    def as_array(self) -> np.ndarray:
        return np.array([self.pitch_setpoint])


@dataclass(frozen=True)
class WindModel:
    """Mean flow plus a single-frequency sinusoidal perturbation (m/s, rad/s)."""

    v_base: float = 0.606
    v_x0: float = 0.0866
    v_y0: float = 0.065
    v_z0: float = 0.0087
    omega_dist: float = 2.0 * math.pi
    phase: float = 0.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.v_base > 0:
            raise ValueError("v_base must be > 0")
        if not self.omega_dist >= 0:
            raise ValueError("omega_dist must be >= 0")

    def as_array(self) -> np.ndarray:
        if not self.enabled:
            return np.zeros(6)
        return np.array(
            [self.v_base, self.v_x0, self.v_y0, self.v_z0, self.omega_dist, self.phase]
        )


def wind_velocity(t: float, model: WindModel = WindModel()) -> tuple[float, float, float]:
    """Flow velocity ``(vx, vy, vz)`` at time ``t``; all zero when the model is disabled."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if not model.enabled:
        return 0.0, 0.0, 0.0
    s = math.sin(model.omega_dist * t + model.phase)
    return model.v_base + model.v_x0 * s, model.v_y0 * s, model.v_z0 * s


def flow_heading(vx: float, vy: float) -> float:
    """Direction of the horizontal flow, ``atan2(vy, vx)`` (0 in still water)."""
    return math.atan2(vy, vx)


def induced_angles(l1, l2, l3, long_sep: float, lat_sep: float) -> tuple[float, float]:
    """Bridle roll and pitch from the centre/starboard/port tether lengths.

    Returns ``(induced_roll, induced_pitch)``.
    """
    if not (long_sep > 0 and lat_sep > 0):
        raise ValueError("tether separations must be > 0")
    roll = math.atan((l3 - l2) / lat_sep)
    pitch = math.atan((l1 - 0.5 * (l2 + l3)) / long_sep)
    return roll, pitch


@dataclass(frozen=True)
class VehicleParams:
    """Surrogate constants for a lab-scale body in a water channel (SI units).

    Aerodynamic coefficients are per unit dynamic pressure times
    ``ref_area``; moment coefficients are additionally times ``ref_length``.
    The stabiliser enters through ``a = stab_area / stab_ref_area``.
    """

    rho: float = 1000.0
    ref_area: float = 0.01
    ref_length: float = 0.1
    stab_ref_area: float = 1.0
    mass: float = 0.3
    buoyancy: float = 2.0
    weight_moment: float = 0.2  # N, multiplies cm_offset
    tether_length: float = 1.5
    long_sep: float = 0.1
    lat_sep: float = 0.1
    # lift and drag
    cl_body: float = 1.2
    cl_stab: float = 0.8
    stab_incidence: float = 0.0
    cd_body: float = 0.08
    cd_stab: float = 0.04
    cd_induced: float = 0.6
    cs_beta: float = 0.5
    # pitch moment and bridle pitch stiffness/damping
    cm_body: float = 0.0
    cm_alpha: float = -0.3
    cm_stab: float = -0.2
    pitch_inertia: float = 1e-3
    pitch_stiffness: tuple[float, float, float] = (0.3, 0.2, 0.1)  # const, per a, per cm
    pitch_damping: tuple[float, float, float] = (0.01, 0.005, 0.002)
    # roll moment coefficient r0 + r1*theta + r2*cm, bridle roll stiffness
    cr_const: float = -1.0
    cr_pitch: float = 10.0
    cr_cm: float = 4.0
    roll_inertia: float = 2e-4
    roll_stiffness: float = 0.1
    roll_damping: float = 4.5e-3
    # weathervane
    cn_body: float = 0.0
    cn_stab: float = 1.0
    twist_inertia: float = 2e-3
    twist_stiffness: float = 5e-3
    twist_damping: float = 1.3e-2
    # tether pendulum damping
    zenith_damping: float = 1.4
    azimuth_damping: float = 1.4


@dataclass(frozen=True)
class PlantPhysical:
    """Design variables together with the restoring coefficients they imply."""

    cm_offset: float
    stab_area: float
    area_ratio: float
    pitch_stiffness: float
    pitch_damping: float

    def __post_init__(self) -> None:
        if not self.stab_area > 0:
            raise ValueError("stab_area must be > 0")
        if not self.pitch_stiffness > 0:
            raise ValueError(
                f"pitch stiffness {self.pitch_stiffness:g} is not positive for this plant"
            )
        if self.pitch_damping < 0:
            raise ValueError("pitch damping must be >= 0")

    @classmethod
    def from_design(cls, plant: PlantParams, vehicle: VehicleParams = VehicleParams()) -> "PlantPhysical":
        a = plant.stab_area / vehicle.stab_ref_area
        k0, ka, kc = vehicle.pitch_stiffness
        c0, ca, cc = vehicle.pitch_damping
        return cls(
            cm_offset=plant.cm_offset,
            stab_area=plant.stab_area,
            area_ratio=a,
            pitch_stiffness=k0 + ka * a + kc * plant.cm_offset,
            pitch_damping=c0 + ca * a + cc * plant.cm_offset,
        )


@dataclass(frozen=True)
class ControllerGains:
    """Lead-filtered PD gains ``(k_d s + k_p) / (tau s + 1)`` for each loop."""

    kp_z: float = 0.2
    kd_z: float = 0.1
    tau_z: float = 0.2
    kp_theta: float = 0.01
    kd_theta: float = 0.005
    tau_theta: float = 0.2
    kp_phi: float = 0.01
    kd_phi: float = 0.005
    tau_phi: float = 0.2

    def __post_init__(self) -> None:
        for name in ("tau_z", "tau_theta", "tau_phi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def for_vehicle(cls, vehicle: VehicleParams, time_constant: float = 5.0) -> "ControllerGains":
        """Gains giving roughly ``time_constant`` seconds of closed-loop response.

        Pitch and roll act through an integrating tether: ``d(theta')/dt`` is
        ``-2 v / sep``, so ``k_p = sep / (2 * time_constant)``.
        """
        kp_t = vehicle.long_sep / (2.0 * time_constant)
        kp_p = vehicle.lat_sep / (2.0 * time_constant)
        return cls(
            kp_z=1.0 / time_constant,
            kd_z=0.5 / time_constant,
            tau_z=0.2,
            kp_theta=kp_t,
            kd_theta=0.5 * kp_t,
            tau_theta=0.2,
            kp_phi=kp_p,
            kd_phi=0.5 * kp_p,
            tau_phi=0.2,
        )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass(frozen=True)
class SyntheticQuadratic:
    """Planted quadratic cost rate used in place of the dynamics.

    In unit-box coordinates ``u_p`` (plant) and ``u_c`` (control)::

        rate = sum((u_p - plant_opt)^2) + control_weight * (u_c - line(u_p))^2
        line(u_p) = control_opt + slope . (u_p - plant_opt)

    so the best control for a plant lies on ``line`` and the joint optimum is
    ``(plant_opt, control_opt)``. ``slope = 0`` gives a separable cost.
    """

    plant_opt: tuple[float, float] = (0.4, 0.6)
    control_opt: float = 0.5
    slope: tuple[float, float] = (0.4, -0.3)
    control_weight: float = 1.0

    def best_control_unit(self, u_p) -> float:
        u_p = np.asarray(u_p, dtype=float)
        return float(self.control_opt + np.dot(self.slope, u_p - np.asarray(self.plant_opt)))

    def rate(self, u_p, u_c: float) -> float:
        u_p = np.asarray(u_p, dtype=float)
        dp = u_p - np.asarray(self.plant_opt)
        dc = u_c - self.best_control_unit(u_p)
        return float(np.dot(dp, dp) + self.control_weight * dc * dc)


@dataclass(frozen=True)
class SimConfig:
    """Simulator settings. ``gains=None`` derives gains from the vehicle geometry."""

    vehicle: VehicleParams = VehicleParams()
    wind: WindModel = WindModel()
    gains: ControllerGains | None = None
    dt: float = 0.01
    control_rate: float = 10.0  # Hz
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    altitude_setpoint: float | None = None
    randomize_phase: bool = False
    synthetic: SyntheticQuadratic | None = None
    plant_bounds: tuple[tuple[float, float], tuple[float, float]] = ((-0.5, 0.5), (0.5, 2.0))
    control_bounds: tuple[float, float] = (-0.2, 0.35)

    def __post_init__(self) -> None:
        if not 0 < self.dt <= 0.05:
            raise ValueError("dt must lie in (0, 0.05] s")
        steps = 1.0 / (self.control_rate * self.dt)
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ValueError("control period must be a whole number of integration steps")
        if any(w < 0 for w in self.weights):
            raise ValueError("performance weights must be >= 0")

    @property
    def substeps(self) -> int:
        return int(round(1.0 / (self.control_rate * self.dt)))

    @property
    def control_period(self) -> float:
        return self.substeps * self.dt

    def resolved_gains(self) -> ControllerGains:
        return self.gains if self.gains is not None else ControllerGains.for_vehicle(self.vehicle)


# ---------------------------------------------------------------------------
# Compiled core
# ---------------------------------------------------------------------------

# parameter vector indices
(
    _RHO, _SREF, _LREF, _MASS, _BUOY, _WMOM, _LONG, _LAT,
    _CLB, _CLS, _IH, _CDB, _CDS, _CDI, _CSB,
    _CMB, _CMA, _CMS, _IPITCH, _KPITCH, _CPITCH,
    _CR0, _CR1, _CR2, _IROLL, _KROLL, _CROLL,
    _CNB, _CNS, _ITW, _KTW, _CTW, _CZEN, _CAZI,
    _AR, _CM,
    _VB, _VX0, _VY0, _VZ0, _OMEGA, _PHASE,
) = range(42)
_NPARAM = 42


def _pack(plant: PlantPhysical, vehicle: VehicleParams, wind: WindModel) -> np.ndarray:
    v = vehicle
    p = np.array(
        [
            v.rho, v.ref_area, v.ref_length, v.mass, v.buoyancy, v.weight_moment,
            v.long_sep, v.lat_sep,
            v.cl_body, v.cl_stab, v.stab_incidence, v.cd_body, v.cd_stab, v.cd_induced, v.cs_beta,
            v.cm_body, v.cm_alpha, v.cm_stab, v.pitch_inertia, plant.pitch_stiffness,
            plant.pitch_damping,
            v.cr_const, v.cr_pitch, v.cr_cm, v.roll_inertia, v.roll_stiffness, v.roll_damping,
            v.cn_body, v.cn_stab, v.twist_inertia, v.twist_stiffness, v.twist_damping,
            v.zenith_damping, v.azimuth_damping,
            plant.area_ratio, plant.cm_offset,
            *wind.as_array(),
        ],
        dtype=float,
    )
    assert p.size == _NPARAM
    return p


@njit(cache=True, nogil=True)
def _wrap(a):
    return math.atan2(math.sin(a), math.cos(a))


@njit(cache=True, nogil=True)
def _observe(t, y, p, out):
    """Fill ``out`` with derived quantities; returns nothing."""
    s = math.sin(p[_OMEGA] * t + p[_PHASE])
    vx = p[_VB] + p[_VX0] * s
    vy = p[_VY0] * s
    vz = p[_VZ0] * s
    l1, l2, l3 = y[10], y[11], y[12]
    th_i = math.atan((l1 - 0.5 * (l2 + l3)) / p[_LONG])
    ph_i = math.atan((l3 - l2) / p[_LAT])
    out[0] = vx
    out[1] = vy
    out[2] = vz
    out[3] = th_i
    out[4] = ph_i
    out[5] = th_i + y[0] + y[6]  # body pitch
    out[6] = ph_i + y[8]  # body roll
    out[7] = y[2] + y[4]  # heading
    out[8] = math.atan2(vy, vx)  # flow heading
    out[9] = (l1 + l2 + l3) / 3.0  # mean tether length


@njit(cache=True, nogil=True)
def _deriv(t, y, u, p, obs, dy):
    _observe(t, y, p, obs)
    vx, vy, vz = obs[0], obs[1], obs[2]
    theta, psi, psi_f, lt = obs[5], obs[7], obs[8], obs[9]
    a = p[_AR]
    cm = p[_CM]

    vh = math.sqrt(vx * vx + vy * vy)
    qs = 0.5 * p[_RHO] * (vh * vh + vz * vz) * p[_SREF]
    qsl = qs * p[_LREF]
    beta = _wrap(psi_f - psi)
    alpha = theta + math.atan2(vz, vh)

    cl = p[_CLB] * alpha + p[_CLS] * a * (alpha + p[_IH])
    cd = p[_CDB] + p[_CDS] * a + p[_CDI] * cl * cl
    drag = qs * cd
    fv = p[_BUOY] + qs * cl
    fx = drag * math.cos(psi_f)
    fy = drag * math.sin(psi_f) + qs * p[_CSB] * beta

    phi_z, theta_a = y[0], y[2]
    inertia = p[_MASS] * lt * lt
    dy[0] = y[1]
    dy[1] = (lt * (fx * math.cos(phi_z) - fv * math.sin(phi_z)) - p[_CZEN] * y[1]) / inertia
    dy[2] = y[3]
    dy[3] = (lt * (fy * math.cos(theta_a) - fv * math.sin(theta_a)) - p[_CAZI] * y[3]) / inertia

    yaw = qsl * (p[_CNB] + p[_CNS] * a) * beta
    dy[4] = y[5]
    dy[5] = (yaw - p[_KTW] * y[4] - p[_CTW] * y[5]) / p[_ITW]

    pitch_m = qsl * (p[_CMB] + p[_CMA] * alpha + p[_CMS] * a * (alpha + p[_IH])) - p[_WMOM] * cm
    dy[6] = y[7]
    dy[7] = (pitch_m - p[_KPITCH] * y[6] - p[_CPITCH] * y[7]) / p[_IPITCH]

    roll_m = qsl * (p[_CR0] + p[_CR1] * theta + p[_CR2] * cm) * beta
    dy[8] = y[9]
    dy[9] = (roll_m - p[_KROLL] * y[8] - p[_CROLL] * y[9]) / p[_IROLL]

    dy[10] = u[0]
    dy[11] = u[1]
    dy[12] = u[2]


@njit(cache=True, nogil=True)
def _rk4(t, y, u, p, dt, obs, k1, k2, k3, k4, tmp):
    n = y.shape[0]
    _deriv(t, y, u, p, obs, k1)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k1[i]
    _deriv(t + 0.5 * dt, tmp, u, p, obs, k2)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k2[i]
    _deriv(t + 0.5 * dt, tmp, u, p, obs, k3)
    for i in range(n):
        tmp[i] = y[i] + dt * k3[i]
    _deriv(t + dt, tmp, u, p, obs, k4)
    for i in range(n):
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, nogil=True)
def _diverged(y):
    if not abs(y[0]) < 0.5 * math.pi:
        return True
    for i in range(y.shape[0]):
        v = y[i]
        if not (abs(v) <= 1e6):  # also catches NaN
            return True
    return False


@njit(cache=True, nogil=True)
def _control(y, xf, obs, gains, sp, ctrl_dt, u):
    """Lead-filtered PD loops and tether mixing; updates filter states in place."""
    if sp[3] != 0.0:
        u[0] = sp[4]
        u[1] = sp[5]
        u[2] = sp[6]
        return
    z = obs[9] * math.cos(y[0]) * math.cos(y[2])
    e0 = sp[0] - z
    e1 = obs[5] - sp[1]
    e2 = obs[6] - sp[2]
    v0 = 0.0
    v1 = 0.0
    v2 = 0.0
    for k in range(3):
        kp = gains[3 * k]
        kd = gains[3 * k + 1]
        tau = gains[3 * k + 2]
        e = e0 if k == 0 else (e1 if k == 1 else e2)
        out = (kd / tau) * e + (kp - kd / tau) * xf[k]
        a = math.exp(-ctrl_dt / tau)
        xf[k] = a * xf[k] + (1.0 - a) * e
        if k == 0:
            v0 = out
        elif k == 1:
            v1 = out
        else:
            v2 = out
    u[0] = v0 - v1
    u[1] = v0 + v1 + v2
    u[2] = v0 + v1 - v2


@njit(cache=True, nogil=True)
def _record(hist, row, t, y, obs, sp, u):
    hist[row, 0] = t
    hist[row, 1] = y[0]
    hist[row, 2] = y[2]
    hist[row, 3] = y[4]
    hist[row, 4] = obs[5]
    hist[row, 5] = obs[6]
    hist[row, 6] = obs[7]
    hist[row, 7] = obs[8]
    hist[row, 8] = obs[9] * math.cos(y[0]) * math.cos(y[2])
    hist[row, 9] = obs[9]
    hist[row, 10] = obs[3]
    hist[row, 11] = obs[4]
    hist[row, 12] = sp[1]
    hist[row, 13] = u[0]
    hist[row, 14] = u[1]
    hist[row, 15] = u[2]


@njit(cache=True, nogil=True)
def _integrate(y, xf, u, t0, n_ctrl, substeps, dt, p, gains, sp, hist):
    """Advance ``n_ctrl`` control periods; returns (rows recorded, diverged flag).

    ``y``, ``xf`` and ``u`` are updated in place. A row is recorded at the
    start of each control period and one after the last.
    """
    n = y.shape[0]
    obs = np.empty(10)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    ctrl_dt = substeps * dt
    for k in range(n_ctrl):
        t = t0 + k * substeps * dt
        _observe(t, y, p, obs)
        _control(y, xf, obs, gains, sp, ctrl_dt, u)
        _record(hist, k, t, y, obs, sp, u)
        for j in range(substeps):
            _rk4(t + j * dt, y, u, p, dt, obs, k1, k2, k3, k4, tmp)
            if _diverged(y):
                return k + 1, True
    t = t0 + n_ctrl * substeps * dt
    _observe(t, y, p, obs)
    _record(hist, n_ctrl, t, y, obs, sp, u)
    return n_ctrl + 1, False


# ---------------------------------------------------------------------------
# State and history containers
# ---------------------------------------------------------------------------


@dataclass
class SimState:
    """Full simulator state: mechanical states, filter states, held speeds, time."""

    y: np.ndarray
    filters: np.ndarray = field(default_factory=lambda: np.zeros(N_FILTER))
    speeds: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(self.y.copy(), self.filters.copy(), self.speeds.copy(), self.time)

    @property
    def zenith(self) -> float:
        return float(self.y[0])

    @property
    def azimuth(self) -> float:
        return float(self.y[2])

    @property
    def twist(self) -> float:
        return float(self.y[4])

    @property
    def tether_lengths(self) -> np.ndarray:
        return self.y[10:13].copy()

    @property
    def tether_length(self) -> float:
        return float(np.mean(self.y[10:13]))

    def induced(self, vehicle: VehicleParams = VehicleParams()) -> tuple[float, float]:
        """``(induced_roll, induced_pitch)`` of the current tether lengths."""
        l1, l2, l3 = self.y[10:13]
        return induced_angles(l1, l2, l3, vehicle.long_sep, vehicle.lat_sep)

    def mechanical_energy(self, plant: PlantPhysical, vehicle: VehicleParams = VehicleParams()) -> float:
        """Kinetic plus potential energy of the calm, undamped surrogate."""
        y = self.y
        lt = self.tether_length
        v = vehicle
        kin = 0.5 * v.mass * lt * lt * (y[1] ** 2 + y[3] ** 2)
        kin += 0.5 * (v.twist_inertia * y[5] ** 2 + v.pitch_inertia * y[7] ** 2 + v.roll_inertia * y[9] ** 2)
        pot = v.buoyancy * lt * (2.0 - math.cos(y[0]) - math.cos(y[2]))
        pot += 0.5 * v.twist_stiffness * y[4] ** 2
        pot += 0.5 * plant.pitch_stiffness * y[6] ** 2 + v.weight_moment * plant.cm_offset * y[6]
        pot += 0.5 * v.roll_stiffness * y[8] ** 2
        return float(kin + pot)


@dataclass(frozen=True)
class SimHistory:
    """Samples at the control rate. Columns follow :data:`HISTORY_FIELDS`."""

    data: np.ndarray
    diverged: bool = False

    def __getattr__(self, name: str) -> np.ndarray:
        idx = _H.get(name)
        if idx is None:
            raise AttributeError(name)
        return self.data[:, idx]

    def __len__(self) -> int:
        return self.data.shape[0]

    @classmethod
    def concatenate(cls, parts: list["SimHistory"]) -> "SimHistory":
        if not parts:
            return cls(np.empty((0, len(HISTORY_FIELDS))))
        return cls(np.vstack([h.data for h in parts]), any(h.diverged for h in parts))

    def write_csv(self, path) -> None:
        np.savetxt(
            path, self.data, delimiter=",", header=",".join(HISTORY_FIELDS), comments="", fmt="%.10g"
        )


def evaluate_performance_index(
    history: SimHistory,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    window: tuple[float, float] | None = None,
    roll_setpoint: float = 0.0,
) -> float:
    """Trapezoidal integral of ``k1 Phi^2 + k2 (psi - psi_flow)^2 + k3 (phi - phi_sp)^2``.

    Only samples with ``t_i <= time <= t_f`` are used. The heading error is
    wrapped to ``(-pi, pi]``.
    """
    t = history.time
    if window is None:
        window = (float(t[0]), float(t[-1]))
    t_i, t_f = window
    if t_f < t_i:
        raise ValueError("window end precedes its start")
    tol = 1e-9 * max(1.0, abs(t_f))
    if len(t) == 0 or t[0] > t_i + tol or t[-1] < t_f - tol:
        raise ValueError(f"history does not cover the window [{t_i}, {t_f}]")
    mask = (t >= t_i - tol) & (t <= t_f + tol)
    k1, k2, k3 = weights
    dpsi = np.arctan2(np.sin(history.heading - history.flow_heading), np.cos(history.heading - history.flow_heading))
    integrand = k1 * history.zenith**2 + k2 * dpsi**2 + k3 * (history.roll - roll_setpoint) ** 2
    if mask.sum() < 2:
        return 0.0
    return max(0.0, float(trapezoid(integrand[mask], t[mask])))


# ---------------------------------------------------------------------------
# Single-step and controller helpers
# ---------------------------------------------------------------------------


def mix_tether_speeds(v_z: float, v_theta: float, v_phi: float) -> np.ndarray:
    """Centre/starboard/port tether speeds from altitude, pitch and roll commands."""
    return MIXING @ np.array([v_z, v_theta, v_phi], dtype=float)


def unmix_tether_speeds(u) -> np.ndarray:
    """Inverse of :func:`mix_tether_speeds`."""
    return np.linalg.solve(MIXING, np.asarray(u, dtype=float))


def controller_step(
    state: SimState,
    setpoints: tuple[float, float, float],
    gains: ControllerGains,
    dt: float,
    vehicle: VehicleParams = VehicleParams(),
    wind: WindModel = WindModel(),
) -> tuple[float, float, float]:
    """One update of the three lead-filtered PD loops.

    ``setpoints = (z_sp, theta_sp, phi_sp)``; ``phi_sp`` is ignored and held
    at 0. Updates ``state.filters`` and ``state.speeds`` and returns the
    tether speeds ``(u_center, u_stbd, u_port)``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    plant = PlantPhysical.from_design(PlantParams(), vehicle)
    p = _pack(plant, vehicle, wind)
    obs = np.empty(10)
    _observe(state.time, state.y, p, obs)
    sp = np.array([setpoints[0], setpoints[1], 0.0, 0.0, 0.0, 0.0, 0.0])
    u = np.zeros(3)
    _control(state.y, state.filters, obs, _gain_vector(gains), sp, dt, u)
    state.speeds = u
    return float(u[0]), float(u[1]), float(u[2])


def _gain_vector(g: ControllerGains) -> np.ndarray:
    return np.array(
        [g.kp_z, g.kd_z, g.tau_z, g.kp_theta, g.kd_theta, g.tau_theta, g.kp_phi, g.kd_phi, g.tau_phi]
    )


def step_dynamics(
    state: SimState,
    plant: PlantPhysical,
    controls,
    wind: WindModel,
    dt: float,
    vehicle: VehicleParams = VehicleParams(),
) -> SimState:
    """One RK4 step with tether speeds ``controls`` held; returns a new state.

    The new state has ``diverged`` semantics signalled by raising
    ``FloatingPointError``.
    """
    if not 0 < dt <= 0.05:
        raise ValueError("dt must lie in (0, 0.05] s")
    p = _pack(plant, vehicle, wind)
    y = state.y.copy()
    u = np.asarray(controls, dtype=float).copy()
    n = N_STATE
    _rk4(state.time, y, u, p, dt, np.empty(10), np.empty(n), np.empty(n), np.empty(n), np.empty(n), np.empty(n))
    if _diverged(y):
        raise FloatingPointError("simulator state diverged")
    return SimState(y, state.filters.copy(), u, state.time + dt)


def equilibrium_state(
    plant: PlantPhysical,
    pitch_setpoint: float,
    vehicle: VehicleParams = VehicleParams(),
    tether_length: float | None = None,
) -> SimState:
    """Still-water equilibrium with the body trimmed at ``pitch_setpoint``.

    The tether is vertical, twist and roll are zero and the pitch deflection
    balances the weight moment; the bridle supplies the rest of the pitch.
    """
    L0 = vehicle.tether_length if tether_length is None else tether_length
    e_theta = -vehicle.weight_moment * plant.cm_offset / plant.pitch_stiffness
    th_i = pitch_setpoint - e_theta
    if abs(th_i) >= 0.5 * math.pi:
        raise ValueError("pitch set-point is not reachable by the bridle")
    delta = vehicle.long_sep * math.tan(th_i)
    y = np.zeros(N_STATE)
    y[6] = e_theta
    y[10] = L0 + 2.0 * delta / 3.0
    y[11] = y[12] = L0 - delta / 3.0
    return SimState(y)


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowResult:
    cost: float
    diverged: bool
    history: SimHistory | None = None


class PlantSimulator:
    """Continuously running simulator; control set-points change between windows."""

    def __init__(
        self,
        plant: PlantParams,
        config: SimConfig = SimConfig(),
        initial_pitch: float | None = None,
        seed: int = 0,
        keep_history: bool = False,
    ):
        self.plant = plant
        self.config = config
        self.physical = PlantPhysical.from_design(plant, config.vehicle)
        wind = config.wind
        if config.randomize_phase and wind.enabled:
            phase = float(np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi))
            wind = replace(wind, phase=phase)
        self.wind = wind
        self._p = _pack(self.physical, config.vehicle, wind)
        self._gains = _gain_vector(config.resolved_gains())
        self._initial_pitch = (
            0.5 * sum(config.control_bounds) if initial_pitch is None else float(initial_pitch)
        )
        self.keep_history = keep_history
        self.reset()

    def reset(self, pitch_setpoint: float | None = None) -> None:
        pitch = self._initial_pitch if pitch_setpoint is None else pitch_setpoint
        self.state = equilibrium_state(self.physical, pitch, self.config.vehicle)
        self.pitch_setpoint = pitch
        self.altitude_setpoint = (
            self.config.altitude_setpoint
            if self.config.altitude_setpoint is not None
            else self.state.tether_length
        )
        self.history: list[SimHistory] = []
        self.diverged = False

    def advance(self, duration: float, pitch_setpoint: float | None = None, speeds=None) -> SimHistory:
        """Simulate ``duration`` seconds (rounded to whole control periods).

        ``speeds`` bypasses the controller and holds fixed tether speeds.
        """
        if self.diverged:
            raise RuntimeError("simulator diverged; call reset() first")
        if pitch_setpoint is not None:
            self.pitch_setpoint = float(pitch_setpoint)
        cfg = self.config
        n_ctrl = int(round(duration / cfg.control_period))
        if n_ctrl < 0:
            raise ValueError("duration must be >= 0")
        sp = np.zeros(7)
        sp[0] = self.altitude_setpoint
        sp[1] = self.pitch_setpoint
        if speeds is not None:
            sp[3] = 1.0
            sp[4:7] = np.asarray(speeds, dtype=float)
        hist = np.empty((n_ctrl + 1, len(HISTORY_FIELDS)))
        s = self.state
        rows, div = _integrate(
            s.y, s.filters, s.speeds, s.time, n_ctrl, cfg.substeps, cfg.dt, self._p, self._gains, sp, hist
        )
        s.time = s.time + (rows - 1 if not div else rows) * cfg.control_period
        out = SimHistory(hist[:rows].copy(), bool(div))
        self.diverged = bool(div)
        if self.keep_history:
            self.history.append(out)
        return out

    def run_window(self, pitch_setpoint: float, settle: float, performance: float) -> WindowResult:
        """Apply ``pitch_setpoint``, let it settle, then integrate the cost."""
        self.advance(settle, pitch_setpoint)
        if self.diverged:
            return WindowResult(float("inf"), True, None)
        t0 = self.state.time
        h = self.advance(performance)
        if self.diverged:
            return WindowResult(float("inf"), True, h)
        cost = evaluate_performance_index(h, self.config.weights, (t0, self.state.time))
        return WindowResult(cost, False, h)


class QuadraticSimulator:
    """Drop-in replacement whose cost rate is a planted quadratic.

    The emitted history holds the zenith at ``sqrt(rate / k1)`` with perfect
    heading and roll tracking, so the windowed index equals
    ``rate * duration`` exactly.
    """

    def __init__(self, plant: PlantParams, config: SimConfig, seed: int = 0, keep_history: bool = False):
        if config.synthetic is None:
            raise ValueError("config.synthetic must be set for the quadratic simulator")
        self.plant = plant
        self.config = config
        self.keep_history = keep_history
        (c0, c1), (a0, a1) = config.plant_bounds
        self._u_p = np.array([(plant.cm_offset - c0) / (c1 - c0), (plant.stab_area - a0) / (a1 - a0)])
        self.reset()

    def reset(self, pitch_setpoint: float | None = None) -> None:
        self.time = 0.0
        lo, hi = self.config.control_bounds
        self.pitch_setpoint = 0.5 * (lo + hi) if pitch_setpoint is None else pitch_setpoint
        self.history: list[SimHistory] = []
        self.diverged = False

    def rate(self, pitch_setpoint: float) -> float:
        lo, hi = self.config.control_bounds
        return self.config.synthetic.rate(self._u_p, (pitch_setpoint - lo) / (hi - lo))

    def advance(self, duration: float, pitch_setpoint: float | None = None, speeds=None) -> SimHistory:
        if pitch_setpoint is not None:
            self.pitch_setpoint = float(pitch_setpoint)
        k1 = self.config.weights[0]
        if not k1 > 0:
            raise ValueError("the quadratic mode needs k1 > 0")
        n = int(round(duration / self.config.control_period))
        t = self.time + self.config.control_period * np.arange(n + 1)
        data = np.zeros((n + 1, len(HISTORY_FIELDS)))
        data[:, _H["time"]] = t
        data[:, _H["zenith"]] = math.sqrt(self.rate(self.pitch_setpoint) / k1)
        data[:, _H["pitch"]] = self.pitch_setpoint
        data[:, _H["pitch_setpoint"]] = self.pitch_setpoint
        self.time = float(t[-1])
        h = SimHistory(data)
        if self.keep_history:
            self.history.append(h)
        return h

    def run_window(self, pitch_setpoint: float, settle: float, performance: float) -> WindowResult:
        self.advance(settle, pitch_setpoint)
        t0 = self.time
        h = self.advance(performance)
        cost = evaluate_performance_index(h, self.config.weights, (t0, self.time))
        return WindowResult(cost, False, h)


def make_simulator(plant: PlantParams, config: SimConfig = SimConfig(), seed: int = 0, keep_history: bool = False):
    """Simulator instance for ``plant``; the quadratic stand-in when ``config.synthetic`` is set."""
    if config.synthetic is not None:
        return QuadraticSimulator(plant, config, seed, keep_history)
    return PlantSimulator(plant, config, seed=seed, keep_history=keep_history)


def run_episode(
    plant: PlantParams,
    control: ControlParams,
    duration: float,
    seed: int = 0,
    config: SimConfig = SimConfig(),
) -> SimHistory:
    """Closed-loop run from still-water equilibrium at a fixed pitch set-point."""
    if config.synthetic is not None:
        sim = QuadraticSimulator(plant, config, seed)
        return sim.advance(duration, control.pitch_setpoint)
    sim = PlantSimulator(plant, config, initial_pitch=control.pitch_setpoint, seed=seed)
    return sim.advance(duration, control.pitch_setpoint)


def episode_cost(
    plant: PlantParams,
    control: ControlParams,
    settle: float = 60.0,
    performance: float = 120.0,
    seed: int = 0,
    config: SimConfig = SimConfig(),
) -> float:
    """Performance index of one settled window for a fixed (plant, control) pair."""
    sim = make_simulator(plant, config, seed)
    res = sim.run_window(control.pitch_setpoint, settle, performance)
    return res.cost
