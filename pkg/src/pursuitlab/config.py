"""Run configuration: embedded defaults, YAML overlay, object builders.

Every table and trace in this package is reproducible from one config
file plus a seed: the file overlays these defaults, and CLI flags overlay
the file.
"""

from __future__ import annotations

import copy
import math

import yaml

from . import raceline as rl
from .controllers import DEFAULT_FIXED_GAIN
from .env import EnvConfig, RacingEnv, RewardWeights
from .ppo import PPOConfig
from .vehicle import SimConfig

DEFAULTS = {
    "seed": 0,
    "track": {
        "kind": "oval",  # oval | rounded_rectangle | file
        "path": None,
        "straight": 10.0,
        "radius": 3.0,
        "length_x": 12.0,
        "length_y": 6.0,
        "spacing": 0.25,
        "half_width": 1.1,
        "v_cap": 8.0,
        "a_lat_max": 3.0,
    },
    "sim": {
        "wheelbase": 0.33,
        "dt_physics": 0.01,
        "dt_control": 0.05,
        "delta_max": 0.4189,
        "delta_rate_max": math.pi,
        "a_max": 3.0,
        "speed_gain": 2.0,
    },
    "controller": {
        "type": "teacher",  # fixed | adaptive | teacher | rl | mpc
        "multiplier": 1.0,
        "lookahead": 1.5,
        "gain": DEFAULT_FIXED_GAIN,
        "checkpoint": None,
        "timeout": 0.2,
    },
    "eval": {
        "laps": 10,
        "max_lap_time": 120.0,
        "sweep_grid": [round(0.80 + 0.05 * i, 2) for i in range(11)],
        "refine_step": 0.01,
    },
    "compare": [],
    "train": {
        "steps": 200_000,
        "mode": "joint",  # joint | ld-only
        "lr_schedule": "linear",
        "multiplier": 1.0,
        "laps": 50,
        "max_steps": 6000,
        "fixed_gain": DEFAULT_FIXED_GAIN,
        "n_steps": 4096,
        "minibatch_size": 256,
        "epochs": 5,
        "gamma": 0.99,
        "gae_lambda": 0.98,
        "clip_epsilon": 0.2,
        "target_kl": 0.015,
        "entropy_coef": 0.02,
        "value_coef": 0.6,
        "max_grad_norm": 0.7,
        "learning_rate": 2.4e-4,
        "eval_every": 5000,
        "checkpoint_every": 25000,
        "n_envs": 1,
    },
    "reward": {
        "speed": 1.8,
        "lookahead_tracking": 3.0,
        "gain_tracking": 0.0,
        "lookahead_jerk": 0.4,
        "gain_jerk": 0.0,
        "curvature": 1.5,
        "lookahead_curvature": 2.0,
        "preshorten_bonus": 1.5,
        "collision": 10.0,
        "slow": 0.5,
        "progress": 1.0,
        "clip_lo": -30.0,
        "clip_hi": 100.0,
        "kappa_bend": 0.3,
        "v_slow": 0.5,
    },
}


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None) -> dict:
    """Defaults overlaid with the YAML file at ``path`` (if given)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            overlay = yaml.safe_load(f) or {}
        if not isinstance(overlay, dict):
            raise ValueError("config file must contain a mapping")
        cfg = _deep_merge(cfg, overlay)
    return cfg


def dump_default_config() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=False)


def build_track(cfg: dict) -> rl.Raceline:
    track = cfg["track"]
    kind = track["kind"]
    if kind == "file":
        if not track.get("path"):
            raise ValueError("track.kind 'file' requires track.path")
        return rl.load_raceline_file(track["path"], track["half_width"])
    common = dict(spacing=track["spacing"], half_width=track["half_width"],
                  v_cap=track["v_cap"], a_lat_max=track["a_lat_max"],
                  radius=track["radius"])
    if kind == "oval":
        return rl.synthesize_track("oval", straight=track["straight"], **common)
    if kind == "rounded_rectangle":
        return rl.synthesize_track("rounded_rectangle",
                                   length_x=track["length_x"],
                                   length_y=track["length_y"], **common)
    raise ValueError(f"unknown track.kind {kind!r}")


def build_sim_config(cfg: dict) -> SimConfig:
    return SimConfig(**cfg["sim"])


def build_reward_weights(cfg: dict) -> RewardWeights:
    return RewardWeights(**cfg["reward"])


def action_mode_from_cli(mode: str) -> str:
    return {"joint": "joint", "ld-only": "ld_only", "ld_only": "ld_only"}[mode]


def build_env_factory(cfg: dict, track: rl.Raceline):
    """Returns ``factory(seed) -> RacingEnv`` for training."""
    sim_config = build_sim_config(cfg)
    weights = build_reward_weights(cfg)
    train = cfg["train"]
    env_config = EnvConfig(
        laps=train["laps"],
        max_steps=train["max_steps"],
        action_mode=action_mode_from_cli(train["mode"]),
        fixed_gain=train["fixed_gain"],
    )

    def factory(seed: int) -> RacingEnv:
        return RacingEnv(track, sim_config, weights, env_config, seed=seed)

    return factory


def build_ppo_config(cfg: dict) -> PPOConfig:
    train = cfg["train"]
    return PPOConfig(
        n_steps=train["n_steps"],
        minibatch_size=train["minibatch_size"],
        epochs=train["epochs"],
        gamma=train["gamma"],
        gae_lambda=train["gae_lambda"],
        clip_epsilon=train["clip_epsilon"],
        target_kl=train["target_kl"],
        entropy_coef=train["entropy_coef"],
        value_coef=train["value_coef"],
        max_grad_norm=train["max_grad_norm"],
        learning_rate=train["learning_rate"],
        lr_schedule=train["lr_schedule"],
        total_steps=train["steps"],
        eval_every=train["eval_every"],
        checkpoint_every=train["checkpoint_every"],
        n_envs=train["n_envs"],
    )
