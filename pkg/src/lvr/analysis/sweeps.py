"""BC vs LVR sweeps over dataset size and deployment perturbation.

Every (point, method, seed) cell is an independent job: the seed fixes the
network initialization and the evaluation episodes, so BC and LVR cells with
the same seed see the same data and the same rollouts. Results are kept in
long format, one row per metric.

Survival steps and tracking return stand in for a task reward, which the
built-in systems do not have.
"""

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..envs import ExpertFailedError, evaluate_checkpoint, evaluate_controller, generate_demos
from ..trainer import TrainConfig, TrainingDivergedError, train

log = logging.getLogger(__name__)

METHODS = ("bc", "lvr")
WALKABLE_FRACTION = 0.5
EVAL_METRICS = ("survival_mean", "survival_fraction", "return_mean", "crossings_mean")


@dataclass
class SweepResult:
    axis: str
    points: list
    methods: list
    seeds: list
    rows: list = field(default_factory=list)       # (point, method, seed, metric, value)
    failures: list = field(default_factory=list)

    def values(self, point, method, metric):
        return np.array([r[4] for r in self.rows
                         if r[0] == point and r[1] == method and r[3] == metric], dtype=float)

    def summary(self):
        out = {"axis": self.axis, "points": list(self.points), "methods": list(self.methods),
               "seeds": list(self.seeds), "failures": list(self.failures), "table": []}
        methods = list(self.methods) + (["expert"] if any(r[1] == "expert" for r in self.rows) else [])
        for point in self.points:
            for method in methods:
                entry = {"point": point, "method": method}
                for metric in sorted({r[3] for r in self.rows if r[1] == method}):
                    v = self.values(point, method, metric)
                    if len(v):
                        entry[metric] = {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": int(len(v))}
                if "survival_fraction" in entry:
                    entry["walkable"] = entry["survival_fraction"]["mean"] >= WALKABLE_FRACTION
                out["table"].append(entry)
        return out

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis", "point", "method", "seed", "metric", "value"])
        for point, method, seed, metric, value in self.rows:
            w.writerow([self.axis, point, method, seed, metric, repr(float(value))])
        return buf.getvalue()

    def summary_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def method_config(base, method, seed):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    lam = 0.0 if method == "bc" else (base.lam if base.lam > 0 else TrainConfig.lam)
    return replace(base, seed=int(seed), lam=lam)


def _train_cell(task):
    data, cfg = task
    try:
        res = train(data, cfg)
    except TrainingDivergedError as exc:
        return None, str(exc)
    last = res.history[-1]
    return (res.net, {"final_l_bc": last.l_bc, "final_l_kl": last.l_kl}), None


def _eval_cell(task):
    net, env, episodes, horizon, seed, perturb = task
    m = evaluate_checkpoint(net, env, episodes=episodes, seed=seed, horizon=horizon, perturb=perturb)
    return {k: m[k] for k in EVAL_METRICS}


def _expert_cell(task):
    env, episodes, horizon, seed, perturb = task
    m = evaluate_controller(env, env.expert, episodes=episodes, horizon=horizon, seed=seed, perturb=perturb)
    return {k: m[k] for k in EVAL_METRICS}


def _map(fn, tasks, jobs):
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _demo(env, data, n_steps, data_seed):
    if data is not None:
        return data
    return generate_demos(env, n_steps=n_steps, seed=data_seed)


def data_efficiency_sweep(env, sizes, methods=METHODS, seeds=(0,), train_cfg=None, data=None,
                          data_seed=0, episodes=100, horizon=500, perturb=0.1, jobs=1,
                          include_expert=True):
    """Train each method on the first ``size`` demo samples and evaluate it.

    ``data`` (or one demo generated with ``data_seed``) must hold at least
    ``max(sizes)`` samples. Failed trainings are listed in ``failures``.
    """
    base = train_cfg or TrainConfig()
    sizes = [int(s) for s in sizes]
    demo = _demo(env, data, max(sizes), data_seed)
    if len(demo) < max(sizes):
        raise ValueError(f"demo has {len(demo)} samples, sweep needs {max(sizes)}")
    result = SweepResult("dataset_size", sizes, list(methods), [int(s) for s in seeds])
    cells = [(size, method, int(seed)) for size in sizes for method in methods for seed in seeds]
    trained = _map(_train_cell, [(demo.head(size), method_config(base, method, seed))
                                 for size, method, seed in cells], jobs)
    ok = [(cell, out[0]) for cell, out in zip(cells, trained) if out[0] is not None]
    for cell, out in zip(cells, trained):
        if out[0] is None:
            result.failures.append({"point": cell[0], "method": cell[1], "seed": cell[2], "error": out[1]})
    evals = _map(_eval_cell, [(net, env, episodes, horizon, seed, perturb)
                              for (_, _, seed), (net, _) in ok], jobs)
    for ((size, method, seed), (_, losses)), metrics in zip(ok, evals):
        for k, v in {**metrics, **losses}.items():
            result.rows.append((size, method, seed, k, v))
    if include_expert:
        expert = _map(_expert_cell, [(env, episodes, horizon, int(s), perturb) for s in seeds], jobs)
        for size in sizes:
            for seed, metrics in zip(seeds, expert):
                for k, v in metrics.items():
                    result.rows.append((size, "expert", int(seed), k, v))
    return result


def robustness_sweep(env, levels, methods=METHODS, seeds=(0,), train_cfg=None, data=None, data_seed=0,
                     n_steps=250, episodes=100, horizon=500, perturb=0.1, jobs=1, include_expert=True):
    """Train once per (method, seed) on the nominal demo, evaluate under each shift level.

    The shift is :meth:`lvr.envs.Env.perturbed` (hopper: per-hop ground
    height std, vanderpol: mu offset). A method "walks" at a level when its
    mean survival fraction is at least 0.5.
    """
    base = train_cfg or TrainConfig()
    levels = [float(x) for x in levels]
    demo = _demo(env, data, n_steps, data_seed)
    result = SweepResult("perturbation_level", levels, list(methods), [int(s) for s in seeds])
    cells = [(method, int(seed)) for method in methods for seed in seeds]
    trained = _map(_train_cell, [(demo, method_config(base, m, s)) for m, s in cells], jobs)
    for (method, seed), out in zip(cells, trained):
        if out[0] is None:
            for level in levels:
                result.failures.append({"point": level, "method": method, "seed": seed, "error": out[1]})
    tasks, keys = [], []
    for level in levels:
        shifted = env.perturbed(level)
        for (method, seed), out in zip(cells, trained):
            if out[0] is not None:
                tasks.append((out[0][0], shifted, episodes, horizon, seed, perturb))
                keys.append((level, method, seed, out[0][1]))
    for (level, method, seed, losses), metrics in zip(keys, _map(_eval_cell, tasks, jobs)):
        for k, v in {**metrics, **losses}.items():
            result.rows.append((level, method, seed, k, v))
    if include_expert:
        tasks = [(env.perturbed(level), episodes, horizon, int(s), perturb) for level in levels for s in seeds]
        keys = [(level, int(s)) for level in levels for s in seeds]
        for (level, seed), metrics in zip(keys, _map(_expert_cell, tasks, jobs)):
            for k, v in metrics.items():
                result.rows.append((level, "expert", seed, k, v))
    return result
