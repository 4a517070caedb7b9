"""Built-in systems: rollouts, demonstrations and closed-loop evaluation.

Two closed-loop testbeds share one interface (:class:`Env`):

* ``hopper``: the 1-D hybrid hopper with a Raibert-style apex expert,
* ``vanderpol``: a smooth limit cycle tracked by a time-varying LQR expert.

The synthetic regression system lives in :mod:`lvr.envs.lqr`.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ..data import Dataset
from ..policy import forward_action
from . import hopper, vanderpol


class ExpertFailedError(RuntimeError):
    pass


@dataclass
class Env:
    kind: str
    params: object
    expert: object = field(repr=False)

    @property
    def dt(self):
        return self.params.dt

    @property
    def obs_dim(self):
        return 3 if self.kind == "hopper" else 2

    @property
    def action_dim(self):
        return 1

    def observe(self, state):
        return hopper.observe(state) if self.kind == "hopper" else vanderpol.observe(state)

    def mode(self, state):
        if self.kind == "hopper":
            return int(state.mode)
        return int(state.x[1] < 0.0)

    def step(self, state, u, rng=None, log=None):
        if self.kind == "hopper":
            return hopper.step(self.params, state, u, rng=rng, log=log)
        return vanderpol.step(self.params, state, u, rng=rng, log=log)

    def initial_state(self, rng=None, perturb=0.0):
        if self.kind == "hopper":
            p = self.params
            a = p.apex_des
            if rng is not None and perturb > 0.0:
                a += rng.uniform(-perturb, perturb) * (p.apex_des - p.l0)
            return hopper.apex_state(p, a)
        return vanderpol.initial_state(self.params, self.expert, rng, perturb)

    def reward(self, state):
        """Per-step tracking reward in [0, 1]."""
        if self.kind == "hopper":
            p = self.params
            err = abs(state.last_apex - p.apex_des) / (p.apex_des - p.l0)
            return max(0.0, 1.0 - err)
        d = np.min(np.linalg.norm(self.expert.cycle.states - state.x, axis=1))
        return max(0.0, 1.0 - d)

    @property
    def fallen_exc(self):
        return hopper.Fallen if self.kind == "hopper" else vanderpol.Fallen

    def perturbed(self, level):
        """Same env under deployment shift ``level`` (hopper: ground roughness std,
        vanderpol: additive shift of mu). The expert is kept as designed for level 0."""
        if self.kind == "hopper":
            return Env(self.kind, replace(self.params, ground_std=float(level)), self.expert)
        return Env(self.kind, replace(self.params, mu=self.params.mu + float(level)), self.expert)

    def with_noise(self, noise_std):
        return Env(self.kind, replace(self.params, noise_std=float(noise_std)), self.expert)


def make_env(kind="hopper", expert=None, **overrides):
    if kind == "hopper":
        expert_kw = {k: overrides.pop(k) for k in ("k_p", "u_ff") if k in overrides}
        p = hopper.HopperParams(**overrides)
        return Env(kind, p, hopper.HopperExpert(p, **expert_kw))
    if kind == "vanderpol":
        expert_kw = {k: overrides.pop(k) for k in ("n_periods",) if k in overrides}
        p = vanderpol.VdpParams(**overrides)
        return Env(kind, p, vanderpol.compute_expert(p, **expert_kw))
    raise ValueError(f"unknown env type {kind!r}")


class PolicyController:
    """Adapts a trained network to the env's state-based controller interface."""

    def __init__(self, env, net):
        self.env = env
        self.net = net

    def __call__(self, state):
        return float(forward_action(self.net, self.env.observe(state))[0])


def zero_controller(state):
    return 0.0


@dataclass
class Rollout:
    obs: np.ndarray
    actions: np.ndarray
    modes: np.ndarray
    steps: int
    fallen: bool
    events: list
    tracking_return: float

    @property
    def section_crossings(self):
        return sum(1 for e in self.events if e[0] in ("apex", "section"))


def rollout(env, controller, state0, n_steps, rng=None):
    """Closed loop for up to ``n_steps`` control periods; stops when the system falls."""
    state = state0
    obs, acts, modes, events = [], [], [], []
    ret = 0.0
    fallen = False
    for _ in range(n_steps):
        u = controller(state)
        obs.append(env.observe(state))
        acts.append(u)
        modes.append(env.mode(state))
        try:
            state = env.step(state, u, rng=rng, log=events)
        except env.fallen_exc:
            fallen = True
            break
        ret += env.reward(state)
    return Rollout(
        obs=np.array(obs).reshape(len(obs), env.obs_dim),
        actions=np.array(acts).reshape(-1, 1),
        modes=np.array(modes, dtype=int),
        steps=len(obs) if not fallen else len(obs) - 1,
        fallen=fallen,
        events=events,
        tracking_return=ret,
    )


def generate_demos(env, n_steps=250, noise_std=None, seed=0):
    """Expert closed-loop trajectory recorded at the control rate.

    Starts on the nominal cycle (hopper: at the target apex). Raises
    :class:`ExpertFailedError` if the expert does not survive.
    """
    if noise_std is not None:
        env = env.with_noise(noise_std)
    rng = np.random.default_rng(seed)
    ro = rollout(env, env.expert, env.initial_state(), n_steps, rng)
    if ro.fallen:
        raise ExpertFailedError(f"expert fell after {ro.steps} steps")
    meta = {
        "env": env.kind,
        "seed": int(seed),
        "noise_std": float(env.params.noise_std),
        "section_crossings": ro.section_crossings,
    }
    return Dataset(ro.obs, ro.actions, env.dt, meta, ro.modes)


def evaluate_controller(env, controller, episodes=100, horizon=500, seed=0, perturb=0.1):
    """Survival steps, tracking return and section-crossing counts over seeded episodes."""
    ss = np.random.SeedSequence(seed)
    survival, returns, crossings = [], [], []
    for child in ss.spawn(episodes):
        rng = np.random.default_rng(child)
        s0 = env.initial_state(rng, perturb)
        ro = rollout(env, controller, s0, horizon, rng)
        survival.append(ro.steps)
        returns.append(ro.tracking_return)
        crossings.append(ro.section_crossings)
    survival = np.array(survival, dtype=float)
    returns = np.array(returns)
    crossings = np.array(crossings, dtype=float)
    return {
        "episodes": episodes,
        "horizon": horizon,
        "survival_mean": float(survival.mean()),
        "survival_std": float(survival.std()),
        "survival_fraction": float(np.mean(survival >= horizon)),
        "return_mean": float(returns.mean()),
        "return_std": float(returns.std()),
        "crossings_mean": float(crossings.mean()),
        "survival": survival.tolist(),
    }


def evaluate_checkpoint(net, env, episodes=100, seed=0, horizon=500, perturb=0.1):
    if net.input_dim != env.obs_dim or net.action_dim != env.action_dim:
        raise ValueError(
            f"policy maps {net.input_dim} -> {net.action_dim}, env needs {env.obs_dim} -> {env.action_dim}"
        )
    return evaluate_controller(env, PolicyController(env, net), episodes, horizon, seed, perturb)
