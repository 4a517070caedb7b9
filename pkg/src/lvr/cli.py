"""Command-line pipelines: generate demos, train, evaluate, analyze.

Each experiment is one YAML file::

    seed: 0                      # root seed, split into data / init / eval seeds
    output: runs/hopper
    env:   {type: hopper, gamma: 0.95, ...}
    data:  {steps: 250, noise: 0.01}
    train: {epochs: 2000, learning_rate: 0.001, ...}
    loss:  {tau: 0.1, lam: 0.1, projection_mode: identity}
    eval:  {episodes: 100, horizon: 500, perturb: 0.1}
    analysis: {sizes: [50, 125, 250], levels: [0.0, 0.02], seeds: [0, 1, 2], n_crossings: 40}

Only ``env`` is required. Files written under the output directory::

    data.csv, data.csv.json              generate
    <method>/checkpoint.json             train   (method = bc | lvr)
    <method>/loss.csv, <method>/graph.json
    <method>/metrics.json                eval    (method may also be expert | zero)
    <method>/poincare.json, <method>/latent.json
    sweep_<axis>.csv, sweep_<axis>.json  analyze sweep
    cli.log                              timestamps and timings (the only non-reproducible file)

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import envs
from .analysis import data_efficiency_sweep, estimate_return_map, latent_geometry, robustness_sweep
from .data import load_dataset, save_dataset
from .envs import hopper, vanderpol
from .graph import graph_summary
from .policy import config_hash, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, TrainingDivergedError, history_csv_text, train

log = logging.getLogger("lvr")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

_ENV_KEYS = {
    "hopper": {f.name for f in fields(hopper.HopperParams)} | {"k_p", "u_ff"},
    "vanderpol": {f.name for f in fields(vanderpol.VdpParams)} | {"n_periods"},
}
_DATA_KEYS = {"steps", "noise", "seed", "path"}
_TRAIN_KEYS = {"epochs", "learning_rate", "optimizer", "beta1", "beta2", "eps", "k", "q", "cap",
               "hidden", "init_scheme", "log_every"}
_LOSS_KEYS = {"tau", "lam", "lambda", "projection_mode", "stop_grad_projection"}
_EVAL_KEYS = {"episodes", "horizon", "perturb", "seed"}
_ANALYSIS_KEYS = {"sizes", "levels", "seeds", "episodes", "horizon", "n_crossings"}
_TOP_KEYS = {"seed", "output", "env", "data", "train", "loss", "eval", "analysis"}


class ConfigError(Exception):
    pass


class MissingInput(Exception):
    pass


@dataclass
class ExperimentConfig:
    seed: int
    output: str
    env: dict
    data: dict
    train: dict
    loss: dict
    eval: dict
    analysis: dict

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def content(self):
        """Everything that determines results (the output directory does not)."""
        d = self.as_dict()
        d.pop("output")
        return d

    @property
    def hash(self):
        return config_hash(self.content())

    def component_seed(self, name):
        """Seed for ``name`` in (data, init, eval): explicit block value or split from the root seed."""
        explicit = {"data": self.data.get("seed"), "eval": self.eval.get("seed")}.get(name)
        if explicit is not None:
            return int(explicit)
        idx = ("data", "init", "eval").index(name)
        return int(np.random.SeedSequence(self.seed).generate_state(3)[idx])

    def make_env(self):
        params = dict(self.env)
        kind = params.pop("type")
        return envs.make_env(kind, **params)

    def train_config(self, method, seed=None):
        if method not in ("bc", "lvr"):
            raise ConfigError(f"train method must be bc or lvr, got {method!r}")
        loss = dict(self.loss)
        if "lambda" in loss:
            loss["lam"] = loss.pop("lambda")
        cfg = TrainConfig(**self.train, **loss, seed=self.component_seed("init") if seed is None else seed)
        if method == "bc":
            cfg = replace(cfg, lam=0.0)
        return cfg


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"'{where}' must be a mapping")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{where}': {', '.join(unknown)}")


def parse_config(raw, base_dir=Path(".")):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(raw, _TOP_KEYS, "top level")
    if "env" not in raw:
        raise ConfigError("missing required block 'env'")
    env = dict(raw["env"] or {})
    _check_keys(env, set().union(*_ENV_KEYS.values()) | {"type"}, "env")
    if "type" not in env:
        raise ConfigError("missing required field 'env.type'")
    if env["type"] not in _ENV_KEYS:
        raise ConfigError(f"unknown env.type {env['type']!r} (expected one of {sorted(_ENV_KEYS)})")
    _check_keys(env, _ENV_KEYS[env["type"]] | {"type"}, "env")
    blocks = {}
    for name, keys in (("data", _DATA_KEYS), ("train", _TRAIN_KEYS), ("loss", _LOSS_KEYS),
                       ("eval", _EVAL_KEYS), ("analysis", _ANALYSIS_KEYS)):
        blocks[name] = dict(raw.get(name) or {})
        _check_keys(blocks[name], keys, name)
    if "hidden" in blocks["train"]:
        blocks["train"]["hidden"] = [int(h) for h in blocks["train"]["hidden"]]
    if "path" in blocks["data"]:
        p = Path(blocks["data"]["path"])
        p = p if p.is_absolute() else base_dir / p
        if not p.exists():
            raise ConfigError(f"data.path {p} does not exist")
        blocks["data"]["path"] = str(p)
    cfg = ExperimentConfig(seed=int(raw.get("seed", 0)), output=str(raw.get("output", "runs")), env=env, **blocks)
    try:
        cfg.train_config("lvr")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid train/loss settings: {exc}") from exc
    return cfg


def load_config(path, seed=None, out=None):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = parse_config(raw, path.parent)
    if seed is not None:
        cfg.seed = int(seed)
    if out is not None:
        cfg.output = str(out)
    return cfg


# -- helpers ------------------------------------------------------------------

def _stamp(cfg):
    return {"config_hash": cfg.hash, "seed": cfg.seed}


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _comment(cfg):
    return f"config_hash={cfg.hash} seed={cfg.seed}"


def _dataset_path(cfg):
    return Path(cfg.data["path"]) if "path" in cfg.data else Path(cfg.output) / "data.csv"


def _load_data(cfg):
    path = _dataset_path(cfg)
    if not path.exists():
        raise MissingInput(f"dataset {path} not found; run 'lvr generate' first")
    return load_dataset(path)


def _checkpoint_path(cfg, method):
    return Path(cfg.output) / method / "checkpoint.json"


def _controller(cfg, env, method):
    """Expert, zero or trained-policy controller plus the loaded net (if any)."""
    if method == "expert":
        return env.expert, None
    if method == "zero":
        return envs.zero_controller, None
    path = _checkpoint_path(cfg, method)
    if not path.exists():
        raise MissingInput(f"checkpoint {path} not found; run 'lvr train --method {method}' first")
    net, _ = load_checkpoint(path)
    if net.input_dim != env.obs_dim or net.action_dim != env.action_dim:
        raise ConfigError(f"checkpoint maps {net.input_dim} -> {net.action_dim} but env "
                          f"{env.kind} needs {env.obs_dim} -> {env.action_dim}")
    return envs.PolicyController(env, net), net


def _eval_settings(cfg):
    return {"episodes": int(cfg.eval.get("episodes", 100)), "horizon": int(cfg.eval.get("horizon", 500)),
            "perturb": float(cfg.eval.get("perturb", 0.1))}


# -- commands -----------------------------------------------------------------

def cmd_generate(cfg, args):
    env = cfg.make_env()
    seed = cfg.component_seed("data")
    noise = cfg.data.get("noise")
    data = envs.generate_demos(env, n_steps=int(cfg.data.get("steps", 250)),
                               noise_std=None if noise is None else float(noise), seed=seed)
    data.meta["data_seed"] = data.meta.pop("seed")
    data.meta.update(_stamp(cfg))
    data.meta["env_config"] = cfg.env
    path = Path(cfg.output) / "data.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(path, data, comment=_comment(cfg))
    print(f"wrote {path}: {len(data)} samples, {data.meta['section_crossings']} section crossings")
    return EXIT_OK


def cmd_train(cfg, args):
    data = _load_data(cfg)
    tcfg = cfg.train_config(args.method)
    start = time.perf_counter()
    try:
        res = train(data, tcfg)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(cfg.output) / args.method
    out.mkdir(parents=True, exist_ok=True)
    first, last = res.history[0], res.history[-1]
    save_checkpoint(out / "checkpoint.json", res.net, cfg.content(),
                    extra={"method": args.method, "seed": cfg.seed, "train": res.config,
                           "best_epoch": res.best_epoch})
    _write_text(out / "loss.csv", f"# {_comment(cfg)} method={args.method}\n" + history_csv_text(res.history))
    _write_json(out / "graph.json", {**_stamp(cfg), **graph_summary(res.graph)})
    log.info("train %s: %d epochs in %.1f s", args.method, tcfg.epochs, time.perf_counter() - start)
    print(f"{args.method}: l_bc {first.l_bc:.6g} -> {last.l_bc:.6g}, l_kl {last.l_kl:.6g}, "
          f"best epoch {res.best_epoch}; wrote {out}")
    return EXIT_OK


def cmd_eval(cfg, args):
    env = cfg.make_env()
    ctrl, _ = _controller(cfg, env, args.method)
    settings = _eval_settings(cfg)
    metrics = envs.evaluate_controller(env, ctrl, seed=cfg.component_seed("eval"), **settings)
    metrics.update(_stamp(cfg))
    metrics["method"] = args.method
    path = Path(cfg.output) / args.method / "metrics.json"
    _write_json(path, metrics)
    print(f"{args.method}: survival {metrics['survival_mean']:.1f}/{settings['horizon']} "
          f"(fraction {metrics['survival_fraction']:.2f}), return {metrics['return_mean']:.2f}; wrote {path}")
    return EXIT_OK


def cmd_analyze(cfg, args):
    out = Path(cfg.output)
    a = cfg.analysis
    if args.what == "poincare":
        env = cfg.make_env()
        ctrl, _ = _controller(cfg, env, args.method)
        res = estimate_return_map(env, ctrl, n_crossings=int(a.get("n_crossings", 40)))
        path = out / args.method / "poincare.json"
        _write_json(path, {**_stamp(cfg), "method": args.method, **res.to_dict()})
        print(f"{args.method}: {res.verdict}, spectral radius {res.spectral_radius:.4f}; wrote {path}")
        return EXIT_OK
    if args.what == "latent":
        if args.method not in ("bc", "lvr"):
            raise ConfigError("latent analysis needs a trained policy (--method bc|lvr)")
        env = cfg.make_env()
        _, net = _controller(cfg, env, args.method)
        rep = latent_geometry(net, _load_data(cfg))
        path = out / args.method / "latent.json"
        _write_json(path, {**_stamp(cfg), "method": args.method, **rep.to_dict()})
        print(f"{args.method}: PC1 ratio {rep.pc1_ratio:.4f}, bundle separation {rep.bundle_separation:.4f}; "
              f"wrote {path}")
        return EXIT_OK
    # sweep
    env = cfg.make_env()
    data = _load_data(cfg)
    base = cfg.train_config("lvr")
    seeds = [int(s) for s in a.get("seeds", [0])]
    ev = {"episodes": int(a.get("episodes", cfg.eval.get("episodes", 100))),
          "horizon": int(a.get("horizon", cfg.eval.get("horizon", 500))),
          "perturb": float(cfg.eval.get("perturb", 0.1))}
    start = time.perf_counter()
    if args.axis == "size":
        sizes = a.get("sizes", [len(data)])
        res = data_efficiency_sweep(env, sizes, seeds=seeds, train_cfg=base, data=data, jobs=args.jobs, **ev)
    else:
        levels = a.get("levels", [0.0])
        res = robustness_sweep(env, levels, seeds=seeds, train_cfg=base, data=data, jobs=args.jobs, **ev)
    log.info("sweep %s: %d rows in %.1f s", args.axis, len(res.rows), time.perf_counter() - start)
    stem = out / f"sweep_{res.axis}"
    _write_text(stem.with_suffix(".csv"), f"# {_comment(cfg)}\n" + res.csv_text())
    summary = {**_stamp(cfg), **res.summary()}
    _write_json(stem.with_suffix(".json"), summary)
    for row in summary["table"]:
        surv = row.get("survival_mean", {}).get("mean", float("nan"))
        print(f"{res.axis}={row['point']} {row['method']}: survival {surv:.1f}")
    print(f"wrote {stem}.csv and {stem}.json" + (f"; {len(res.failures)} failed runs" if res.failures else ""))
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment YAML file")
    common.add_argument("--seed", type=int, default=None, help="override the root seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes (sweeps)")

    p = argparse.ArgumentParser(prog="lvr", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="record expert demonstrations")
    t = sub.add_parser("train", parents=[common], help="train a policy (bc or lvr)")
    t.add_argument("--method", choices=["bc", "lvr"], required=True)
    e = sub.add_parser("eval", parents=[common], help="closed-loop evaluation")
    e.add_argument("--method", choices=["bc", "lvr", "expert", "zero"], required=True)
    an = sub.add_parser("analyze", help="Poincare, latent-geometry and sweep analyses")
    asub = an.add_subparsers(dest="what", required=True)
    pc = asub.add_parser("poincare", parents=[common], help="return-map stability of a controller")
    pc.add_argument("--method", choices=["bc", "lvr", "expert", "zero"], required=True)
    la = asub.add_parser("latent", parents=[common], help="PCA of latent differences on the demo")
    la.add_argument("--method", choices=["bc", "lvr"], required=True)
    sw = asub.add_parser("sweep", parents=[common], help="BC vs LVR over dataset size or perturbation")
    sw.add_argument("--axis", choices=["size", "perturbation"], required=True)
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze}


def _setup_log(out):
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "cli.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("lvr")
    root.setLevel(logging.INFO)
    root.addHandler(handler)
    return handler


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    handler = _setup_log(Path(cfg.output))
    log.info("command %s config %s hash %s seed %d", args.command, args.config, cfg.hash, cfg.seed)
    try:
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, MissingInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (envs.ExpertFailedError, vanderpol.ConfigurationError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        logging.getLogger("lvr").removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
