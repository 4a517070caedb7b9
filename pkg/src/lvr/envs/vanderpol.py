"""Controlled Van der Pol oscillator with a time-varying LQR tracking expert.

    x1' = x2
    x2' = mu (1 - x1^2) x2 - x1 + u

The nominal limit cycle is found by a long forward run, its period refined
from two consecutive section crossings (x2 = 0 going down, x1 > 0), and the
expert tracks the cycle with gains from a backward Riccati sweep along the
linearized cycle.
"""

from dataclasses import dataclass, replace

import numpy as np

from .riccati import finite_horizon_lqr


class ConfigurationError(RuntimeError):
    pass


@dataclass(frozen=True)
class VdpParams:
    mu: float = 1.0
    dt: float = 0.02
    substeps: int = 10
    u_max: float = 5.0
    noise_std: float = 0.01
    bound: float = 10.0


@dataclass(frozen=True)
class VdpState:
    x: np.ndarray
    t: float = 0.0
    mode: int = 0


def observe(state):
    return np.array(state.x, dtype=float)


def rhs(p, x, u):
    return np.array([x[1], p.mu * (1.0 - x[0] ** 2) * x[1] - x[0] + u])


def rk4(p, x, u, h):
    k1 = rhs(p, x, u)
    k2 = rhs(p, x + 0.5 * h * k1, u)
    k3 = rhs(p, x + 0.5 * h * k2, u)
    k4 = rhs(p, x + h * k3, u)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def flow(p, x, u, duration):
    n = max(1, int(np.ceil(duration / (p.dt / p.substeps) - 1e-9)))
    h = duration / n
    for _ in range(n):
        x = rk4(p, x, u, h)
    return x


class Fallen(Exception):
    pass


def step(p, state, u, rng=None, log=None):
    """One control period with zero-order hold; logs section crossings."""
    u = float(np.clip(u, -p.u_max, p.u_max))
    x = np.asarray(state.x, dtype=float)
    h = p.dt / p.substeps
    t = state.t
    for _ in range(p.substeps):
        x1 = rk4(p, x, u, h)
        if log is not None and x[1] > 0.0 and x1[1] <= 0.0 and x1[0] > 0.0:
            tau, xc = locate_section(p, x, u, h)
            log.append(("section", t + tau, xc[0], xc[1]))
        x = x1
        t += h
    if p.noise_std > 0.0 and rng is not None:
        x = x + np.array([0.0, rng.normal(0.0, p.noise_std)])
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > p.bound:
        raise Fallen(f"state left the box: {x}")
    return VdpState(x=x, t=t)


def locate_section(p, x, u, h, tol=1e-10):
    lo, hi = 0.0, h
    xc = x
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        xc = rk4(p, x, u, mid)
        if abs(xc[1]) < tol or hi - lo < 1e-15:
            return mid, xc
        if xc[1] > 0.0:
            lo = mid
        else:
            hi = mid
    return hi, xc


def section_crossings(p, x0, duration, u=0.0):
    """Times and states of downward x2 = 0 crossings (x1 > 0) of the free flow."""
    h = p.dt / p.substeps
    x = np.asarray(x0, dtype=float)
    out = []
    t = 0.0
    for _ in range(int(round(duration / h))):
        x1 = rk4(p, x, u, h)
        if x[1] > 0.0 and x1[1] <= 0.0 and x1[0] > 0.0:
            tau, xc = locate_section(p, x, u, h)
            out.append((t + tau, xc))
        x = x1
        t += h
    return out


@dataclass
class NominalCycle:
    period: float
    times: np.ndarray
    states: np.ndarray   # (N, 2), states[0] on the section
    endpoint_gap: float


def nominal_cycle(p, n_points=None, settle=60.0):
    """Limit cycle table sampled at (approximately) the control rate."""
    crossings = section_crossings(p, [2.0, 0.0], settle)
    if len(crossings) < 3:
        raise ConfigurationError("no limit cycle found")
    (t_a, _), (t_b, x_b) = crossings[-2], crossings[-1]
    period = t_b - t_a
    n = n_points or int(round(period / p.dt))
    h = period / n
    states = [np.array(x_b)]
    x = np.array(x_b)
    for _ in range(n):
        x = flow(p, x, 0.0, h)
        states.append(x)
    gap = float(np.linalg.norm(states[-1] - states[0]))
    return NominalCycle(period=period, times=np.arange(n) * h, states=np.array(states[:-1]), endpoint_gap=gap)


def linearize(p, x, h, eps=1e-6):
    """Discrete (A, B) of the ZOH flow over ``h`` by central differences."""
    a = np.zeros((2, 2))
    for i in range(2):
        d = np.zeros(2)
        d[i] = eps
        a[:, i] = (flow(p, x + d, 0.0, h) - flow(p, x - d, 0.0, h)) / (2 * eps)
    b = ((flow(p, x, eps, h) - flow(p, x, -eps, h)) / (2 * eps))[:, None]
    return a, b


@dataclass
class VdpExpert:
    """Tracks the nominal cycle: u = -K_i (x - x_i) at the nearest cycle point i."""

    params: VdpParams
    cycle: NominalCycle
    gains: np.ndarray   # (N, 1, 2)

    def __call__(self, state):
        x = np.asarray(state.x, dtype=float)
        i = int(np.argmin(np.sum((self.cycle.states - x) ** 2, axis=1)))
        u = -(self.gains[i] @ (x - self.cycle.states[i]))[0]
        return float(np.clip(u, -self.params.u_max, self.params.u_max))


def compute_expert(p, n_periods=3, q=None, r=None):
    """TV-LQR along the nominal cycle (Q = I, R = I by default).

    The backward sweep runs over ``n_periods`` copies of the cycle and the
    gains of the first copy are kept, so they are close to periodic.
    """
    cyc = nominal_cycle(p)
    n = len(cyc.states)
    h = cyc.period / n
    lin = [linearize(p, x, h) for x in cyc.states]
    a_seq = [a for a, _ in lin] * n_periods
    b_seq = [b for _, b in lin] * n_periods
    q = np.eye(2) if q is None else q
    r = np.eye(1) if r is None else r
    gains, _ = finite_horizon_lqr(a_seq, b_seq, q, r, q)
    if not np.all(np.isfinite(gains)):
        raise ConfigurationError("Riccati sweep diverged")
    return VdpExpert(params=p, cycle=cyc, gains=np.array(gains[:n]))


def initial_state(p, expert, rng=None, perturb=0.0):
    x = expert.cycle.states[0].copy()
    if rng is not None and perturb > 0.0:
        x = x + rng.normal(0.0, perturb, size=2)
    return VdpState(x=x)


def with_mu(p, mu):
    return replace(p, mu=mu)
