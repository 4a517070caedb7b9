"""The hopper and its apex regulator.

Drops the hopper from 10% above the target apex, prints the apex sequence,
then linearizes the apex return map numerically and compares the slope
with the closed-form contraction factor of the regulator.

    python demos/hopper_expert.py
"""

from lvr.analysis import estimate_return_map
from lvr.envs import hopper, make_env, zero_controller

env = make_env("hopper", noise_std=0.0)
p, expert = env.params, env.expert
print(f"k_s={p.k_s}, gamma={p.gamma}, apex target {p.apex_des} m, thrust u = {expert.u_ff:.3f}"
      f" + {expert.k_p} (apex_des - apex)")

state, log = hopper.apex_state(p, 1.1 * p.apex_des), []
while sum(e[0] == "apex" for e in log) < 6:
    state = env.step(state, expert(state), log=log)
apexes = [e[2] for e in log if e[0] == "apex"]
print("apex heights:", " ".join(f"{a:.5f}" for a in apexes))

res = estimate_return_map(env, expert)
print(f"numerical A_P {res.jacobian[0, 0]:.5f}, closed form {expert.contraction_factor():.5f}, "
      f"verdict {res.verdict}")

# without dissipation or thrust every apex height is a fixed point
neutral = make_env("hopper", gamma=1.0, k_p=0.0, u_ff=0.0)
print(f"conservative hopper A_P {estimate_return_map(neutral, zero_controller, n_crossings=8).jacobian[0, 0]:.5f}")

# without thrust the dissipative hopper dies out
res = estimate_return_map(env, zero_controller)
print(f"zero thrust: {res.verdict} ({res.message})")
