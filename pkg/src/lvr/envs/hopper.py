"""Vertical spring-mass hopper with flight/stance modes.

Flight:  z'' = -g
Stance:  z'' = -g + (k_s (L - z) + u_eff) / m,   L = l0 + ground
with ``u_eff = u`` while the leg extends (z' > 0) and 0 while it compresses.

Guards and resets:
    touchdown  flight -> stance   z = L, z' < 0,  z'+ = gamma z'-
    liftoff    stance -> flight   z = L, z' > 0
The flight apex (z' = 0 falling through zero) is the Poincare section. Events
are located by bisection on the RK4 step length.
"""

from dataclasses import dataclass, replace

import numpy as np

FLIGHT, STANCE = 0, 1
EVENT_TOL = 1e-8


class Fallen(Exception):
    pass


@dataclass(frozen=True)
class HopperParams:
    m: float = 1.0
    k_s: float = 400.0
    l0: float = 1.0
    g: float = 9.81
    gamma: float = 0.95
    dt: float = 0.02
    substeps: int = 10
    u_max: float = 20.0
    noise_std: float = 0.01        # velocity kick per control step (m/s)
    ground_std: float = 0.0        # per-touchdown ground height offset (m)
    apex_des: float = 1.5
    fall_height: float = 0.5
    max_speed: float = 50.0
    max_stance_time: float = 1.0
    min_hop_fraction: float = 0.5  # fail if an apex is below l0 + frac * (apex_des - l0)

    @property
    def apex_min(self):
        return self.l0 + self.min_hop_fraction * (self.apex_des - self.l0)


@dataclass(frozen=True)
class HopperState:
    z: float
    zd: float
    mode: int = FLIGHT
    last_apex: float = float("nan")
    ground: float = 0.0
    stance_time: float = 0.0
    t: float = 0.0
    bottom_energy: float = float("nan")   # mechanical energy at the last bottom event


def observe(state):
    """Policy input: height, vertical velocity, mode flag."""
    return np.array([state.z, state.zd, float(state.mode)])


def energy(p, z, zd, ground=0.0):
    """Mechanical energy with the spring term active only below touchdown height."""
    comp = max(0.0, p.l0 + ground - z)
    return 0.5 * p.m * zd * zd + p.m * p.g * z + 0.5 * p.k_s * comp * comp


def apex_state(p, height):
    return HopperState(z=float(height), zd=0.0, mode=FLIGHT, last_apex=float(height))


# -- continuous dynamics ------------------------------------------------------

def _rk4(p, z, zd, mode, u, leg, h, thrust_on):
    # thrust gating is frozen over one RK4 step; switches are split out as events
    uu = u if thrust_on else 0.0

    def f(zz, vv):
        if mode == FLIGHT:
            return vv, -p.g
        return vv, -p.g + (p.k_s * (leg - zz) + uu) / p.m

    k1z, k1v = f(z, zd)
    k2z, k2v = f(z + 0.5 * h * k1z, zd + 0.5 * h * k1v)
    k3z, k3v = f(z + 0.5 * h * k2z, zd + 0.5 * h * k2v)
    k4z, k4v = f(z + h * k3z, zd + h * k3v)
    return (z + h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z),
            zd + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


def _events(p, mode, z, zd, leg, thrust_on):
    """Guard functions active in a mode, as (name, value) with a crossing when value <= 0."""
    if mode == FLIGHT:
        return [("apex", zd), ("touchdown", z - leg)]
    ev = [("liftoff", leg - z)]
    if not thrust_on:
        ev.append(("bottom", -zd))
    return ev


def _locate(p, z, zd, mode, u, leg, h, thrust_on, name):
    """Bisect the step length until the named guard is within EVENT_TOL of zero."""
    lo, hi = 0.0, h
    idx = [n for n, _ in _events(p, mode, z, zd, leg, thrust_on)].index(name)
    zz, vv = z, zd
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        zz, vv = _rk4(p, z, zd, mode, u, leg, mid, thrust_on)
        val = _events(p, mode, zz, vv, leg, thrust_on)[idx][1]
        if abs(val) < EVENT_TOL and val <= 0.0 or hi - lo < 1e-15:
            if val > 0.0:
                zz, vv = _rk4(p, z, zd, mode, u, leg, hi, thrust_on)
                mid = hi
            return mid, zz, vv
        if val > 0.0:
            lo = mid
        else:
            hi = mid
    return hi, zz, vv


def advance(p, state, u, duration, rng=None, log=None):
    """Integrate the hybrid flow for ``duration`` with the thrust ``u`` held.

    ``log`` (a list) receives ``(event, t, z, zd)`` tuples for every guard or
    section crossing. Raises :class:`Fallen` when the state leaves the safe set.
    """
    z, zd, mode = state.z, state.zd, state.mode
    last_apex, ground, stance_time, t = state.last_apex, state.ground, state.stance_time, state.t
    bottom_energy = state.bottom_energy
    h_nom = p.dt / p.substeps
    remaining = duration
    while remaining > 1e-14:
        h = min(h_nom, remaining)
        leg = p.l0 + ground
        thrust_on = mode == STANCE and zd >= 0.0
        z1, zd1 = _rk4(p, z, zd, mode, u, leg, h, thrust_on)
        fired = [name for name, val in _events(p, mode, z1, zd1, leg, thrust_on)
                 if val <= 0.0 and dict(_events(p, mode, z, zd, leg, thrust_on))[name] > 0.0]
        if fired:
            hits = [(_locate(p, z, zd, mode, u, leg, h, thrust_on, n), n) for n in fired]
            (tau, z1, zd1), name = min(hits, key=lambda it: it[0][0])
            h = tau
        else:
            name = None
        z, zd = z1, zd1
        t += h
        remaining -= h
        if mode == STANCE:
            stance_time += h
        if name == "apex":
            last_apex = z
            if log is not None:
                log.append(("apex", t, z, zd))
            if z < p.apex_min:
                raise Fallen(f"apex {z:.4f} below {p.apex_min:.4f}")
        elif name == "touchdown":
            if log is not None:
                log.append(("touchdown", t, z, zd))
            zd = p.gamma * zd
            mode = STANCE
            stance_time = 0.0
            bottom_energy = float("nan")
        elif name == "liftoff":
            if log is not None:
                log.append(("liftoff", t, z, zd))
            mode = FLIGHT
            if p.ground_std > 0.0 and rng is not None:
                ground = float(rng.normal(0.0, p.ground_std))
        elif name == "bottom":
            bottom_energy = energy(p, z, zd, ground)
            if log is not None:
                log.append(("bottom", t, z, zd))
        if z < p.fall_height or abs(zd) > p.max_speed:
            raise Fallen(f"left safe set at z={z:.4f}, zd={zd:.4f}")
        if mode == STANCE and stance_time > p.max_stance_time:
            raise Fallen("stance stalled")
    return HopperState(z=z, zd=zd, mode=mode, last_apex=last_apex, ground=ground,
                       stance_time=stance_time, t=t, bottom_energy=bottom_energy)


def step(p, state, u, rng=None, log=None):
    """One control period with zero-order-hold thrust, then a process-noise kick."""
    u = float(np.clip(u, 0.0, p.u_max))
    nxt = advance(p, state, u, p.dt, rng=rng, log=log)
    if p.noise_std > 0.0 and rng is not None:
        nxt = replace(nxt, zd=nxt.zd + float(rng.normal(0.0, p.noise_std)))
    return nxt


# -- expert -------------------------------------------------------------------

def compression(p, apex):
    """Maximum spring compression after falling from ``apex`` (no thrust)."""
    mg = p.m * p.g
    e = p.gamma ** 2 * mg * (apex - p.l0)
    return (mg + np.sqrt(mg * mg + 2.0 * p.k_s * e)) / p.k_s


def compression_slope(p, apex):
    mg = p.m * p.g
    e = p.gamma ** 2 * mg * (apex - p.l0)
    return p.gamma ** 2 * mg / np.sqrt(mg * mg + 2.0 * p.k_s * e)


def apex_estimate(p, state):
    """Height of the previous apex as implied by the current energy.

    Exact without noise: flight is ballistic and compression is lossless
    after the touchdown loss ``gamma^2``. During extension the estimate is
    frozen at its value at the bottom of the stance.
    """
    mg = p.m * p.g
    if state.mode == FLIGHT:
        return state.z + state.zd * state.zd / (2.0 * p.g)
    e = state.bottom_energy if state.zd >= 0.0 and np.isfinite(state.bottom_energy) \
        else energy(p, state.z, state.zd, state.ground)
    leg = p.l0 + state.ground
    return leg + (e / mg - leg) / p.gamma ** 2


@dataclass(frozen=True)
class HopperExpert:
    """Raibert-style apex regulator: thrust = u_ff + k_p (apex_des - apex estimate).

    The plant only applies thrust while the leg extends, and the estimate is
    frozen over that phase, so each stance adds ``thrust * compression`` of
    energy with the thrust set by the apex that started the hop.
    """

    params: HopperParams
    k_p: float = 25.0
    u_ff: float = None

    def __post_init__(self):
        if self.u_ff is None:
            p = self.params
            ff = (1 - p.gamma ** 2) * (p.apex_des - p.l0) * p.m * p.g / compression(p, p.apex_des)
            object.__setattr__(self, "u_ff", float(ff))

    def __call__(self, state):
        apex = apex_estimate(self.params, state)
        u = self.u_ff + self.k_p * (self.params.apex_des - apex)
        return float(np.clip(u, 0.0, self.params.u_max))

    def apex_map(self, apex):
        """Closed-form next apex height from the current one."""
        p = self.params
        u = float(np.clip(self.u_ff + self.k_p * (p.apex_des - apex), 0.0, p.u_max))
        return p.l0 + p.gamma ** 2 * (apex - p.l0) + u * compression(p, apex) / (p.m * p.g)

    def contraction_factor(self):
        """d(next apex)/d(apex) at the fixed point ``apex_des``."""
        p = self.params
        a = p.apex_des
        return p.gamma ** 2 + (self.u_ff * compression_slope(p, a) - self.k_p * compression(p, a)) / (p.m * p.g)


def open_loop_contraction(p, thrust):
    """Return-map slope for a constant thrust (zero feedback), at apex_des."""
    return p.gamma ** 2 + thrust * compression_slope(p, p.apex_des) / (p.m * p.g)
