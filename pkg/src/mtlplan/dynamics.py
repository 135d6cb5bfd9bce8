"""Quadrotor dynamics: nonlinear model, per-mode linearization, ZOH
discretization, the five-mode hybrid automaton and an RK4 simulator.

Full state (12): ``x y z vx vy vz phi theta psi w_phi w_theta w_psi``.
Full input (4): ``F tau_x tau_y tau_z``.  Planning modes drop the yaw pair and
``tau_z`` (10 states, 3 inputs).  Angle rates are identified with body rates,
the usual small-angle assumption.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

STATE_NAMES = ("x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi", "w_phi", "w_theta", "w_psi")
INPUT_NAMES = ("F", "tau_x", "tau_y", "tau_z")
REDUCED_STATE = (0, 1, 2, 3, 4, 5, 6, 7, 9, 10)
REDUCED_INPUT = (0, 1, 2)
POS = slice(0, 3)

TAKEOFF, LAND, HOVER, STEER, GRASP = "TakeOff", "Land", "Hover", "Steer", "Grasp"
MODE_NAMES = (TAKEOFF, LAND, HOVER, STEER, GRASP)

SERIES_TOL = 1e-12
SERIES_CAP = 50


class DynamicsError(ValueError):
    pass


class SimulationDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadrotorParams:
    m: float = 1.0
    g: float = 9.81
    J: tuple = ((0.01, 0.0, 0.0), (0.0, 0.01, 0.0), (0.0, 0.0, 0.02))

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        if self.m <= 0 or self.g <= 0:
            raise DynamicsError("mass and gravity must be positive")
        if J.shape != (3, 3) or not np.allclose(J, J.T):
            raise DynamicsError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(J) <= 0):
            raise DynamicsError("inertia must be positive definite")
        object.__setattr__(self, "J", tuple(tuple(float(v) for v in row) for row in J))

    @property
    def Jm(self) -> np.ndarray:
        return np.array(self.J)

    @property
    def Jinv(self) -> np.ndarray:
        return np.linalg.inv(self.Jm)

    @property
    def hover_thrust(self) -> float:
        return self.m * self.g


def full_state(pos=(0, 0, 0), vel=(0, 0, 0), angles=(0, 0, 0), rates=(0, 0, 0)) -> np.ndarray:
    return np.concatenate([pos, vel, angles, rates]).astype(float)


def _rot_e3(phi, theta, psi):
    """Third column of R = Rz(psi) Ry(theta) Rx(phi), with its angle partials."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    r = np.array([cp * st * cf + sp * sf, sp * st * cf - cp * sf, ct * cf])
    d_phi = np.array([-cp * st * sf + sp * cf, -sp * st * sf - cp * cf, -ct * sf])
    d_theta = np.array([cp * ct * cf, sp * ct * cf, -st * cf])
    d_psi = np.array([-sp * st * cf + cp * sf, cp * st * cf + sp * sf, 0.0])
    return r, np.column_stack([d_phi, d_theta, d_psi])


def _skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def nonlinear_derivative(s, u, p: QuadrotorParams) -> np.ndarray:
    """Time derivative of the 12-state under thrust/torque input ``u``."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    if s.shape != (12,) or u.shape != (4,):
        raise DynamicsError(f"expected 12 states and 4 inputs, got {s.shape} and {u.shape}")
    vel, ang, om = s[3:6], s[6:9], s[9:12]
    F, tau = u[0], u[1:4]
    r, _ = _rot_e3(*ang)
    J = p.Jm
    acc = -p.g * np.array([0.0, 0.0, 1.0]) + (F / p.m) * r
    om_dot = np.linalg.solve(J, -np.cross(om, J @ om) + tau)
    return np.concatenate([vel, acc, om, om_dot])


def jacobians(p: QuadrotorParams, x_star, u_star) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic 12x12 and 12x4 Jacobians of :func:`nonlinear_derivative`."""
    x_star = np.asarray(x_star, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    ang, om = x_star[6:9], x_star[9:12]
    F = u_star[0]
    r, dr = _rot_e3(*ang)
    J = p.Jm
    Jinv = p.Jinv
    A = np.zeros((12, 12))
    B = np.zeros((12, 4))
    A[0:3, 3:6] = np.eye(3)
    A[3:6, 6:9] = (F / p.m) * dr
    A[6:9, 9:12] = np.eye(3)
    A[9:12, 9:12] = Jinv @ (_skew(J @ om) - _skew(om) @ J)
    B[3:6, 0] = r / p.m
    B[9:12, 1:4] = Jinv
    return A, B


@dataclass(frozen=True)
class Guard:
    """Conjunction of linear conditions on the reduced state.

    ``halfspaces`` holds ``(normal, offset)`` pairs meaning ``normal @ x <= offset``
    over the 10-state; ``regions`` names workspace regions the position must lie in
    (first convex part of each).
    """

    halfspaces: tuple = ()
    regions: tuple = ()
    name: str = ""

    def rows(self) -> List[Tuple[np.ndarray, float]]:
        return [(np.asarray(n, dtype=float), float(a)) for n, a in self.halfspaces]

    def __and__(self, other: "Guard") -> "Guard":
        name = " & ".join(n for n in (self.name, other.name) if n)
        return Guard(self.halfspaces + other.halfspaces, self.regions + other.regions, name)


def state_bound_guard(name: str = "", **bounds) -> Guard:
    """Guard from keyword bounds on named reduced states, e.g. ``z=(1.5, None)``."""
    names = [STATE_NAMES[i] for i in REDUCED_STATE]
    hs = []
    for key, (lo, hi) in bounds.items():
        i = names.index(key)
        e = np.zeros(len(names))
        e[i] = 1.0
        if hi is not None:
            hs.append((tuple(e), float(hi)))
        if lo is not None:
            hs.append((tuple(-e), -float(lo)))
    return Guard(tuple(hs), (), name)


def guard_satisfied(g: Guard, x, workspace=None, tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float)
    if x.size == 12:
        x = x[list(REDUCED_STATE)]
    for n, a in g.rows():
        if n @ x > a + tol:
            return False
    if g.regions:
        if workspace is None:
            raise DynamicsError("guard refers to regions but no workspace was given")
        from .workspace import contains
        for lbl in g.regions:
            if not contains(workspace.region(lbl).parts[0], x[POS], tol):
                return False
    return True


@dataclass(frozen=True, eq=False)
class LinearMode:
    """Continuous linearization of one mode plus its discrete ZOH form.

    Matrices act on the reduced state/input.  Planning uses absolute states
    and input deviations ``u - u_star``; ``drift`` is the affine ZOH term
    ``Gamma @ (f(x*, u*) - A x*)``, zero whenever the operating point is an
    equilibrium up to a constant velocity.
    """

    name: str
    A: np.ndarray
    B: np.ndarray
    x_star: np.ndarray
    u_star: np.ndarray
    f_star: np.ndarray
    dt: float
    input_lo: np.ndarray
    input_hi: np.ndarray
    state_lo: np.ndarray
    state_hi: np.ndarray
    max_speed: Optional[float] = None
    terminal: Optional[Guard] = None
    state_idx: tuple = REDUCED_STATE
    input_idx: tuple = REDUCED_INPUT

    def __post_init__(self):
        n, p = len(self.state_idx), len(self.input_idx)
        if self.A.shape != (n, n) or self.B.shape != (n, p):
            raise DynamicsError(f"mode {self.name}: matrix shapes {self.A.shape}, {self.B.shape}")
        if self.dt <= 0:
            raise DynamicsError("dt must be positive")
        Ad, Gamma = _zoh_series(self.A, self.dt)
        x_s = self.x_star[list(self.state_idx)]
        object.__setattr__(self, "Ad", Ad)
        object.__setattr__(self, "Bd", Gamma @ self.B)
        object.__setattr__(self, "drift", Gamma @ (self.f_star - self.A @ x_s))

    @property
    def n(self) -> int:
        return len(self.state_idx)

    @property
    def p(self) -> int:
        return len(self.input_idx)

    def reduce_state(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float)[list(self.state_idx)]

    def expand_state(self, x) -> np.ndarray:
        """12-state with the dropped coordinates zero-padded."""
        out = np.zeros(12)
        out[list(self.state_idx)] = x
        return out

    def full_input(self, du) -> np.ndarray:
        """Absolute 4-input from a reduced deviation ``u - u_star``."""
        u = np.array(self.u_star, dtype=float)
        u[list(self.input_idx)] += du
        return u

    def with_dt(self, dt: float) -> "LinearMode":
        return replace(self, dt=dt)


def _zoh_series(A: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """``exp(A dt)`` and ``int_0^dt exp(A s) ds`` by truncated power series."""
    n = A.shape[0]
    Ad = np.eye(n)
    Gamma = dt * np.eye(n)
    term = np.eye(n)  # (A dt)^k / k!
    for k in range(1, SERIES_CAP + 1):
        term = term @ A * (dt / k)
        gterm = term * (dt / (k + 1))
        Ad = Ad + term
        Gamma = Gamma + gterm
        if np.linalg.norm(term) < SERIES_TOL and np.linalg.norm(gterm) < SERIES_TOL:
            return Ad, Gamma
    raise DynamicsError(f"ZOH series did not converge within {SERIES_CAP} terms")


def discretize(mode: LinearMode) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold ``(A_d, B_d)`` of ``mode``."""
    Ad, Gamma = _zoh_series(mode.A, mode.dt)
    return Ad, Gamma @ mode.B


def step(Ad, Bd, x, u, drift=None) -> np.ndarray:
    Ad, Bd = np.asarray(Ad), np.asarray(Bd)
    x, u = np.asarray(x, dtype=float), np.asarray(u, dtype=float)
    if Ad.shape[1] != x.size or Bd.shape[1] != u.size or Bd.shape[0] != Ad.shape[0]:
        raise DynamicsError(f"dimension mismatch: A {Ad.shape}, B {Bd.shape}, x {x.shape}, u {u.shape}")
    out = Ad @ x + Bd @ u
    if drift is not None:
        out = out + drift
    return out


def rollout(mode: LinearMode, x0, inputs) -> np.ndarray:
    xs = [np.asarray(x0, dtype=float)]
    for u in inputs:
        xs.append(step(mode.Ad, mode.Bd, xs[-1], u, mode.drift))
    return np.array(xs)


def _mode_kwargs(n, m, input_lo, input_hi, state_lo, state_hi):
    return dict(
        input_lo=np.full(m, -np.inf) if input_lo is None else np.asarray(input_lo, dtype=float),
        input_hi=np.full(m, np.inf) if input_hi is None else np.asarray(input_hi, dtype=float),
        state_lo=np.full(n, -np.inf) if state_lo is None else np.asarray(state_lo, dtype=float),
        state_hi=np.full(n, np.inf) if state_hi is None else np.asarray(state_hi, dtype=float),
    )


def linearize(p: QuadrotorParams, x_star, u_star, reduced: bool = True, *, name: str = HOVER,
              dt: float = 0.2, input_lo=None, input_hi=None, state_lo=None, state_hi=None,
              max_speed: Optional[float] = None, terminal: Optional[Guard] = None) -> LinearMode:
    """Linear mode about ``(x_star, u_star)``; ``reduced`` drops yaw and ``tau_z``."""
    x_star = np.asarray(x_star, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    A12, B4 = jacobians(p, x_star, u_star)
    sidx = REDUCED_STATE if reduced else tuple(range(12))
    uidx = REDUCED_INPUT if reduced else tuple(range(4))
    f_star = nonlinear_derivative(x_star, u_star, p)[list(sidx)]
    return LinearMode(name, A12[np.ix_(sidx, sidx)], B4[np.ix_(sidx, uidx)], x_star, u_star, f_star,
                      dt, max_speed=max_speed, terminal=terminal, state_idx=sidx, input_idx=uidx,
                      **_mode_kwargs(len(sidx), len(uidx), input_lo, input_hi, state_lo, state_hi))


def hover_mode(p: QuadrotorParams, dt: float = 0.2, *, name: str = HOVER, input_lo=None,
               input_hi=None, state_lo=None, state_hi=None, max_speed: Optional[float] = None,
               terminal: Optional[Guard] = None) -> LinearMode:
    """Closed-form hover linearization (yaw = 0, thrust = mg), 10 states, 3 inputs.

    State order ``x y z vx vy vz phi theta w_phi w_theta``, inputs ``F tau_x tau_y``.
    The torque block is the top-left 2x2 of the inverse inertia.
    """
    g, m = p.g, p.m
    A = np.zeros((10, 10))
    A[0:3, 3:6] = np.eye(3)
    A[3:6, 6:8] = [[0.0, g], [-g, 0.0], [0.0, 0.0]]
    A[6:8, 8:10] = np.eye(2)
    B = np.zeros((10, 3))
    B[3:6, 0] = [0.0, 0.0, 1.0 / m]
    B[8:10, 1:3] = p.Jinv[:2, :2]
    x_star = np.zeros(12)
    u_star = np.array([p.hover_thrust, 0.0, 0.0, 0.0])
    return LinearMode(name, A, B, x_star, u_star, np.zeros(10), dt, max_speed=max_speed,
                      terminal=terminal, **_mode_kwargs(10, 3, input_lo, input_hi, state_lo, state_hi))


# ---------------------------------------------------------------------------
# the hybrid automaton

@dataclass(frozen=True)
class ModeLimits:
    """Planning limits attached to a mode (all on the reduced state/input)."""

    max_speed: float = 0.5          # horizontal speed, octagon-approximated
    max_vz: float = 0.5
    max_angle: float = 0.1          # roll/pitch, keeps the linear model honest
    max_rate: float = 1.0
    thrust_dev: float = 0.5         # |F - mg| <= thrust_dev * m g
    max_torque: float = 0.02


DEFAULT_LIMITS = {
    TAKEOFF: ModeLimits(max_speed=0.2, max_vz=2.0, thrust_dev=0.8),
    LAND: ModeLimits(max_speed=0.2, max_vz=2.0, thrust_dev=0.8),
    HOVER: ModeLimits(),
    STEER: ModeLimits(),
    GRASP: ModeLimits(max_vz=1.0, thrust_dev=0.8),
}

# operating-point velocity references per mode
_VELOCITY_REF = {
    TAKEOFF: (0.0, 0.0, 0.5),
    LAND: (0.0, 0.0, -0.5),
    HOVER: (0.0, 0.0, 0.0),
    STEER: (0.5, 0.0, 0.0),
    GRASP: (0.0, 0.0, 0.0),
}

CRUISE_ALTITUDE = 1.5
HOVER_SPEED = 0.05
HOVER_TILT = 0.02         # rad; a hovering vehicle is close to level
HOVER_RATE = 0.05         # rad/s
TOUCHDOWN_HEIGHT = 0.05


def make_mode(name: str, p: QuadrotorParams, dt: float = 0.2,
              limits: Optional[ModeLimits] = None, terminal: Optional[Guard] = None) -> LinearMode:
    if name not in MODE_NAMES:
        raise DynamicsError(f"unknown mode {name!r}")
    lim = limits or DEFAULT_LIMITS[name]
    x_star = full_state(vel=_VELOCITY_REF[name])
    u_star = np.array([p.hover_thrust, 0.0, 0.0, 0.0])
    inf = np.inf
    state_hi = np.array([inf, inf, inf, lim.max_speed, lim.max_speed, lim.max_vz,
                         lim.max_angle, lim.max_angle, lim.max_rate, lim.max_rate])
    state_lo = -state_hi
    input_hi = np.array([lim.thrust_dev * p.hover_thrust, lim.max_torque, lim.max_torque])
    if terminal is None and name == LAND:
        terminal = state_bound_guard("touchdown", z=(None, TOUCHDOWN_HEIGHT), vz=(-0.1, 0.1))
    return linearize(p, x_star, u_star, True, name=name, dt=dt,
                     input_lo=-input_hi, input_hi=input_hi, state_lo=state_lo, state_hi=state_hi,
                     max_speed=lim.max_speed, terminal=terminal)


@dataclass(frozen=True)
class HybridAutomaton:
    modes: Dict[str, LinearMode]
    edges: Dict[Tuple[str, str], Guard]

    def __post_init__(self):
        if (LAND, HOVER) in self.edges:
            raise DynamicsError("Land -> Hover is not a legal transition")
        for a, b in self.edges:
            if a not in self.modes or b not in self.modes:
                raise DynamicsError(f"edge {a}->{b} references an unknown mode")

    def guard(self, src: str, dst: str) -> Guard:
        if src == dst:
            return Guard()
        try:
            return self.edges[(src, dst)]
        except KeyError:
            raise DynamicsError(f"no transition {src} -> {dst}") from None

    def has_edge(self, src: str, dst: str) -> bool:
        return src == dst or (src, dst) in self.edges

    def bridge(self, src: str, dst: str) -> List[str]:
        """Mode path from ``src`` to ``dst``: direct, or through Hover."""
        if self.has_edge(src, dst):
            return [src, dst] if src != dst else [src]
        if self.has_edge(src, HOVER) and self.has_edge(HOVER, dst):
            return [src, HOVER, dst]
        raise DynamicsError(f"no transition {src} -> {dst}, not even through {HOVER}")

    def path_guard(self, src: str, dst: str) -> Guard:
        """Guards along the bridge from ``src`` to ``dst``, plus the state envelope
        of every mode entered on the way."""
        path = self.bridge(src, dst)
        g = Guard()
        for a, b in zip(path, path[1:]):
            g = g & self.guard(a, b) & self.envelope(b)
        return g

    def envelope(self, mode: str) -> Guard:
        m = self.modes[mode]
        hs = []
        for i in range(len(m.state_lo)):
            e = np.zeros(len(m.state_lo))
            e[i] = 1.0
            if np.isfinite(m.state_hi[i]):
                hs.append((tuple(e), float(m.state_hi[i])))
            if np.isfinite(m.state_lo[i]):
                hs.append((tuple(-e), -float(m.state_lo[i])))
        return Guard(tuple(hs), (), "")

    def reachable(self, start: str = TAKEOFF) -> set:
        seen, todo = {start}, [start]
        while todo:
            a = todo.pop()
            for (s, d) in self.edges:
                if s == a and d not in seen:
                    seen.add(d)
                    todo.append(d)
        return seen


def default_guards() -> Dict[Tuple[str, str], Guard]:
    slow = state_bound_guard("slow", vx=(-HOVER_SPEED, HOVER_SPEED), vy=(-HOVER_SPEED, HOVER_SPEED),
                             vz=(-HOVER_SPEED, HOVER_SPEED), phi=(-HOVER_TILT, HOVER_TILT),
                             theta=(-HOVER_TILT, HOVER_TILT), w_phi=(-HOVER_RATE, HOVER_RATE),
                             w_theta=(-HOVER_RATE, HOVER_RATE))
    # margin below the mode limits so the next mode can absorb the residual tilt
    airborne = state_bound_guard("cruise altitude", z=(CRUISE_ALTITUDE, None), vz=(-0.5, 0.5),
                                 vx=(-0.2, 0.2), vy=(-0.2, 0.2), phi=(-0.03, 0.03),
                                 theta=(-0.03, 0.03), w_phi=(-0.2, 0.2), w_theta=(-0.2, 0.2))
    touchdown = state_bound_guard("touchdown", z=(None, TOUCHDOWN_HEIGHT))
    return {
        (TAKEOFF, HOVER): airborne,
        (TAKEOFF, STEER): airborne,
        (HOVER, STEER): Guard(name="always"),
        (STEER, HOVER): slow,
        (HOVER, LAND): slow,
        (HOVER, GRASP): slow,
        (GRASP, HOVER): airborne,
        (GRASP, STEER): airborne,
        (LAND, TAKEOFF): touchdown,
    }


def default_automaton(p: Optional[QuadrotorParams] = None, dt: float = 0.2,
                      limits: Optional[Dict[str, ModeLimits]] = None,
                      guards: Optional[Dict[Tuple[str, str], Guard]] = None) -> HybridAutomaton:
    p = p or QuadrotorParams()
    limits = {**DEFAULT_LIMITS, **(limits or {})}
    modes = {name: make_mode(name, p, dt, limits[name]) for name in MODE_NAMES}
    edges = default_guards()
    if guards:
        edges.update(guards)
    return HybridAutomaton(modes, edges)


@dataclass(frozen=True)
class GraspPhase:
    name: str
    mode: str
    exit_guard: Guard
    payload_after: bool


def grasp_sequence() -> List[GraspPhase]:
    """Grasp as Hover (H1) -> Land (L1) -> TakeOff (TO1).

    Touchdown on the object (the sub-task's grasp region) attaches the payload,
    after which TakeOff is immediately eligible.
    """
    slow = default_guards()[(HOVER, LAND)]
    return [
        GraspPhase("H1", HOVER, slow, False),
        GraspPhase("L1", LAND, Guard(name="touchdown on object"), True),
        GraspPhase("TO1", TAKEOFF, default_guards()[(TAKEOFF, STEER)], True),
    ]


def grasp_phases(z: np.ndarray, touched: Sequence[bool]) -> Tuple[List[str], List[bool]]:
    """Per-step phase labels and payload flags of a planned grasp segment.

    ``touched[k]`` says whether step ``k`` lies in the touchdown region.  Steps
    before the descent starts are H1, descending steps up to the first touchdown
    are L1, everything after is TO1.
    """
    z = np.asarray(z, dtype=float)
    K = len(z)
    first = next((k for k in range(K) if touched[k]), None)
    labels, payload = [], []
    if first is None:
        return ["H1"] * K, [False] * K
    start_descent = first
    while start_descent > 0 and z[start_descent - 1] > z[start_descent] + 1e-9:
        start_descent -= 1
    for k in range(K):
        if k < start_descent:
            labels.append("H1")
        elif k < first:
            labels.append("L1")
        else:
            labels.append("TO1" if k > first else "L1")
        payload.append(k >= first)
    return labels, payload


# ---------------------------------------------------------------------------
# nonlinear simulation

def simulate_nonlinear(p: QuadrotorParams, x0, inputs, dt: float, substeps: int = 10,
                       max_norm: float = 1e6) -> np.ndarray:
    """RK4 integration of the nonlinear model under zero-order-held inputs.

    Returns ``len(inputs) + 1`` states.  Raises :class:`SimulationDivergence`
    when the state stops being finite or exceeds ``max_norm``.
    """
    s = np.asarray(x0, dtype=float).copy()
    out = [s.copy()]
    h = dt / substeps
    f = lambda s_, u_: nonlinear_derivative(s_, u_, p)
    for k, u in enumerate(np.asarray(inputs, dtype=float).reshape(-1, 4)):
        if not np.all(np.isfinite(u)):
            raise SimulationDivergence(f"non-finite input at step {k}")
        for _ in range(substeps):
            k1 = f(s, u)
            k2 = f(s + 0.5 * h * k1, u)
            k3 = f(s + 0.5 * h * k2, u)
            k4 = f(s + h * k3, u)
            s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(s)) or np.linalg.norm(s) > max_norm:
            raise SimulationDivergence(f"state diverged at step {k + 1}")
        out.append(s.copy())
    return np.array(out)
