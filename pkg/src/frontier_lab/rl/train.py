"""Training harness: the episode/agent glue, the step loop with JSONL
logging and checkpoints, and a planner adapter for trained policies."""

from __future__ import annotations

import json
import time

import numpy as np

from ..episode import Episode, EpisodeConfig, sample_start
from ..metrics import training_reward
from ..planners import FrontierChoice, NoAction
from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import DEFAULT_ENCODER, DEFAULT_PREPROCESS, EncoderSpec, PreprocessSpec, preprocess_map
from .sac import DiscreteSac, Observation, SacConfig, Transition


def observation_from_view(view, spec=DEFAULT_PREPROCESS):
    """Agent-facing observation for one planning decision."""
    image = preprocess_map(view.bundle.mean, view.robot, spec)
    return Observation(image=image,
                       features=view.features.flat(),
                       valid=view.features.valid.copy())


def terminal_observation(image_side, n_slots):
    """All-zero observation with no valid slots; the absorbing state after
    episode end."""
    return Observation(image=np.zeros((image_side, image_side), dtype=np.float32),
                       features=np.zeros(5 * n_slots + 1, dtype=np.float32),
                       valid=np.zeros(n_slots, dtype=bool))


class FrontierEnv:
    """Slot-choice environment over exploration episodes.

    Each reset draws a map uniformly and a fresh start pose, runs the
    sense/predict/score pipeline, and exposes the action-set observation.
    Rewards are sparse: 0 every step, the terminal value at episode end.
    """

    def __init__(self, maps, ensemble_factory, config=None,
                 preprocess=DEFAULT_PREPROCESS, seed=0, min_wall_m=1.0):
        if not maps:
            raise ValueError("need at least one map")
        self.maps = list(maps)
        self.ensemble_factory = ensemble_factory
        self.config = config or EpisodeConfig()
        self.preprocess = preprocess
        self.min_wall_m = min_wall_m
        self.rng = np.random.default_rng(seed)
        self._ensembles = {}
        self.episode = None

    @property
    def n_slots(self):
        return self.config.action_slots

    @property
    def feature_dim(self):
        return 5 * self.config.action_slots + 1

    @property
    def image_side(self):
        return self.preprocess.out_size

    def reset(self):
        idx = int(self.rng.integers(len(self.maps)))
        map_id, truth = self.maps[idx]
        if map_id not in self._ensembles:
            self._ensembles[map_id] = self.ensemble_factory(truth)
        start = sample_start(truth, self.rng, self.min_wall_m)
        self.episode = Episode(truth, start, self._ensembles[map_id],
                               planner=None, config=self.config)
        if self.episode.done:
            # first scan already finished the map; hand back a dead
            # observation so the caller records the (trivial) episode
            return terminal_observation(self.image_side, self.n_slots)
        return observation_from_view(self.episode.plan(), self.preprocess)

    def step(self, slot):
        """Apply one slot choice (None means give up); returns
        (next_obs, reward, done)."""
        ep = self.episode
        if not ep.done:  # reset() can hand back an already-finished episode
            decision = NoAction() if slot is None else FrontierChoice(int(slot))
            ep.execute(decision)
        if ep.done:
            reward = training_reward(ep.iou, ep.state.b_r, True)
            return (terminal_observation(self.image_side, self.n_slots),
                    reward, True)
        return observation_from_view(ep.plan(), self.preprocess), 0.0, False


def checkpoint_meta(agent, env, extra=None):
    meta = {
        "sac_config": agent.config_dict(),
        "encoder_spec": {
            "in_size": agent.encoder_spec.in_size,
            "channels": list(agent.encoder_spec.channels),
            "kernels": list(agent.encoder_spec.kernels),
            "strides": list(agent.encoder_spec.strides),
            "latent": agent.encoder_spec.latent,
        },
        "preprocess": {
            "crop_cells": env.preprocess.crop_cells,
            "resize": env.preprocess.resize,
            "pool": env.preprocess.pool,
        },
        "n_slots": agent.n_slots,
        "feature_dim": agent.feature_dim,
        "opt_steps": agent.opt_steps(),
    }
    if extra:
        meta.update(extra)
    return meta


def train(env, total_steps, sac_config=None, encoder_spec=DEFAULT_ENCODER,
          seed=0, agent=None, log_path=None, checkpoint_path=None,
          checkpoint_every=0, progress=None):
    """Run the collect/update loop for total_steps environment steps.

    Writes one JSONL record per finished episode:
    {"episode", "steps", "iou", "b_r", "reward", "wall_ms"}.  Saves a
    checkpoint every checkpoint_every agent steps (0 = only at the end)
    when checkpoint_path is given; the final save always happens, so
    total_steps=0 just snapshots the freshly initialised agent.

    Returns (agent, history) where history is the list of log records.
    """
    if agent is None:
        agent = DiscreteSac(n_slots=env.n_slots, feature_dim=env.feature_dim,
                            encoder_spec=encoder_spec, config=sac_config,
                            seed=seed)
    history = []
    log_file = open(log_path, "w") if log_path else None

    def save(path):
        save_checkpoint(path, agent.state_tensors(),
                        meta=checkpoint_meta(agent, env,
                                             {"episodes": len(history)}))

    try:
        obs = env.reset()
        episode_t0 = time.monotonic()
        for step in range(total_steps):
            action = agent.act(obs, mode="train")
            next_obs, reward, done = env.step(action)
            if action is not None:
                agent.record(Transition(obs, action, reward, next_obs, done))
                if agent.ready():
                    agent.train_step()
            if done:
                ep = env.episode
                rec = {"episode": len(history),
                       "steps": ep.config.budget - ep.state.b_r,
                       "iou": ep.iou,
                       "b_r": ep.state.b_r,
                       "reward": reward,
                       "wall_ms": int((time.monotonic() - episode_t0) * 1000)}
                history.append(rec)
                if log_file:
                    log_file.write(json.dumps(rec, sort_keys=True) + "\n")
                    log_file.flush()
                if progress:
                    progress(step + 1, rec)
                obs = env.reset()
                episode_t0 = time.monotonic()
            else:
                obs = next_obs
            if (checkpoint_path and checkpoint_every
                    and (step + 1) % checkpoint_every == 0):
                save(checkpoint_path)
        if checkpoint_path:
            save(checkpoint_path)
    finally:
        if log_file:
            log_file.close()
    return agent, history


class SacPlanner:
    """Frontier planner that defers to a trained slot policy."""

    kind = "frontier"

    def __init__(self, agent, preprocess=DEFAULT_PREPROCESS, mode="eval"):
        self.agent = agent
        self.preprocess = preprocess
        self.mode = mode

    def decide(self, view):
        obs = observation_from_view(view, self.preprocess)
        slot = self.agent.act(obs, mode=self.mode)
        if slot is None:
            return NoAction()
        return FrontierChoice(slot)

    @classmethod
    def from_checkpoint(cls, path, mode="eval"):
        tensors, manifest = load_checkpoint(path)
        meta = manifest["meta"]
        enc = meta["encoder_spec"]
        spec = EncoderSpec(in_size=enc["in_size"],
                           channels=tuple(enc["channels"]),
                           kernels=tuple(enc["kernels"]),
                           strides=tuple(enc["strides"]),
                           latent=enc["latent"])
        cfg_fields = dict(meta["sac_config"])
        cfg_fields["hidden"] = tuple(cfg_fields["hidden"])
        config = SacConfig(**cfg_fields)
        agent = DiscreteSac(n_slots=meta["n_slots"],
                            feature_dim=meta["feature_dim"],
                            encoder_spec=spec, config=config)
        agent.load_state_tensors(tensors, opt_steps=meta.get("opt_steps"))
        pp = meta["preprocess"]
        preprocess = PreprocessSpec(crop_cells=pp["crop_cells"],
                                    resize=pp["resize"], pool=pp["pool"])
        return cls(agent, preprocess, mode=mode)
