"""Return maps on a Poincare section and their finite-difference linearization.

The section coordinate is one-dimensional for both built-in systems:

* hopper: the flight apex (z' = 0, falling through zero); coordinate = height,
* vanderpol: x2 = 0 crossed downward with x1 > 0; coordinate = x1.

One application of the map starts the closed loop on the section (with the
controller's zero-order-hold clock restarted there) and runs it to the next
crossing. Process noise and ground roughness are switched off, so the map is
a deterministic function of the coordinate.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .. import numerics
from ..envs import hopper, vanderpol

STABLE_RADIUS = 0.98
RESIDUAL_TOL = 1e-3
FD_STEP = 1e-4


@dataclass(frozen=True)
class Section:
    name: str
    guard: str
    direction: str
    event: str          # event name logged by the env when the section is crossed
    coordinate: str

    def lift(self, env, c):
        if env.kind == "hopper":
            return hopper.apex_state(env.params, float(c))
        return vanderpol.VdpState(x=np.array([float(c), 0.0]))

    def as_dict(self):
        return {"name": self.name, "guard": self.guard, "direction": self.direction,
                "coordinate": self.coordinate}


APEX = Section("apex", "zd = 0", "decreasing", "apex", "z")
CYCLE = Section("cycle", "x2 = 0 and x1 > 0", "decreasing", "section", "x1")


def default_section(env):
    return APEX if env.kind == "hopper" else CYCLE


def deterministic(env):
    """Copy of ``env`` with process noise and ground roughness removed."""
    env = env.with_noise(0.0)
    if env.kind == "hopper":
        env = type(env)(env.kind, replace(env.params, ground_std=0.0), env.expert)
    return env


class ReturnFailed(Exception):
    pass


def return_once(env, controller, section, c, max_time=20.0):
    """Next section coordinate after starting on the section at ``c``."""
    state = section.lift(env, c)
    log = []
    for _ in range(int(np.ceil(max_time / env.dt))):
        try:
            state = env.step(state, controller(state), log=log)
        except env.fallen_exc as exc:
            raise ReturnFailed(str(exc)) from exc
        for ev in log:
            if ev[0] == section.event:
                return float(ev[2])
    raise ReturnFailed(f"no section crossing within {max_time} s")


def finite_difference_jacobian(fn, x, h=FD_STEP):
    """Central differences of a vector map; one pair of evaluations per coordinate."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = []
    for i in range(len(x)):
        d = np.zeros_like(x)
        d[i] = h
        cols.append((np.atleast_1d(fn(x + d)) - np.atleast_1d(fn(x - d))) / (2.0 * h))
    return np.column_stack(cols)


@dataclass
class PoincareAnalysis:
    section: dict
    fixed_point: np.ndarray
    jacobian: np.ndarray
    eigenvalue_moduli: np.ndarray
    spectral_radius: float
    crossings: list
    residual: float
    verdict: str
    message: str = ""
    requested_crossings: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def stable(self):
        return self.verdict == "stable"

    def to_dict(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {
            "section": self.section,
            "fixed_point": arr(self.fixed_point),
            "jacobian": arr(self.jacobian),
            "eigenvalue_moduli": arr(self.eigenvalue_moduli),
            "spectral_radius": self.spectral_radius,
            "crossings_observed": len(self.crossings),
            "crossings_requested": self.requested_crossings,
            "crossings": list(self.crossings),
            "residual": self.residual,
            "verdict": self.verdict,
            "message": self.message,
            **self.extra,
        }


def estimate_return_map(env, controller, section=None, x0=None, n_crossings=40, seed=0,
                        h=FD_STEP, max_time=20.0):
    """Fixed point and linearization of the closed-loop return map.

    The map is iterated ``n_crossings`` times from ``x0`` (default: the
    env's nominal start); the fixed point is the mean of the last quarter of
    the iterates and ``A_P`` is a central difference with step ``h`` around
    it. The verdict is "stable" when every return succeeded, the spectral
    radius is below 0.98 and ``|P(x*) - x*| < 1e-3``. ``seed`` only jitters
    the default start (by up to 5% of the start coordinate).
    """
    section = section or default_section(env)
    env = deterministic(env)
    if x0 is None:
        s0 = env.initial_state()
        x0 = s0.z if env.kind == "hopper" else s0.x[0]
        if seed:
            x0 *= 1.0 + 0.05 * np.random.default_rng(seed).uniform(-1.0, 1.0)
    nan1 = np.full(1, np.nan)

    def failed(crossings, msg):
        return PoincareAnalysis(section.as_dict(), nan1, np.full((1, 1), np.nan), nan1, float("nan"),
                                crossings, float("nan"), "unstable", msg, n_crossings)

    c = float(x0)
    crossings = []
    for _ in range(n_crossings):
        try:
            c = return_once(env, controller, section, c, max_time)
        except ReturnFailed as exc:
            return failed(crossings, f"closed loop failed after {len(crossings)} crossings: {exc}")
        crossings.append(c)
    tail = crossings[-max(1, len(crossings) // 4):]
    x_star = np.array([np.mean(tail)])

    def pmap(x):
        return return_once(env, controller, section, float(x[0]), max_time)

    try:
        jac = finite_difference_jacobian(pmap, x_star, h)
        residual = abs(pmap(x_star) - x_star[0])
    except ReturnFailed as exc:
        return failed(crossings, f"return from a perturbed section point failed: {exc}")
    moduli = numerics.eigenvalue_moduli(jac)
    rho = float(np.max(moduli))
    stable = rho < STABLE_RADIUS and residual < RESIDUAL_TOL
    msg = "" if stable else (f"spectral radius {rho:.4f}" if rho >= STABLE_RADIUS
                             else f"fixed-point residual {residual:.2e}")
    return PoincareAnalysis(section.as_dict(), x_star, jac, moduli, rho, crossings, float(residual),
                            "stable" if stable else "unstable", msg, n_crossings)
