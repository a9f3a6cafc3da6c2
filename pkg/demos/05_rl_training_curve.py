"""
Training a frontier-choice policy
=================================

A miniature end-to-end run of the actor-critic loop: a small map, a small
convolutional encoder, a few hundred decisions.  Not enough to produce a
strong policy — the point is to watch the plumbing work: episode rewards
stream into a history, the agent checkpoints to disk, and the restored
planner reproduces the live one exactly.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from frontier_lab.episode import EpisodeConfig, run_episode
from frontier_lab.grids import Pose, generate_floorplan
from frontier_lab.predictor import MorphologicalInpaintPredictor
from frontier_lab.rl import FrontierEnv, SacPlanner, train
from frontier_lab.rl.encoder import EncoderSpec, PreprocessSpec
from frontier_lab.rl.sac import SacConfig

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)

maps = [("demo", generate_floorplan(seed=33, width=60, height=60, room_count=3))]
cfg = EpisodeConfig(budget=10, step_cells=6, beam_count=240, range_m=2.5)
prep = PreprocessSpec(crop_cells=128, resize=32, pool=2)  # 16x16 policy input
enc = EncoderSpec(in_size=16, channels=(8, 16), kernels=(3, 3), strides=(2, 2),
                  latent=64)
sac = SacConfig(batch_size=32, buffer_capacity=2000, learning_starts=100,
                gradient_steps=1, hidden=(64, 64), learning_rate=7.3e-4)


def ensemble_factory(truth):
    return [MorphologicalInpaintPredictor(radius=10)]


env = FrontierEnv(maps, ensemble_factory, config=cfg, preprocess=prep, seed=0)
ckpt = os.path.join(out, "demo_agent.ckpt")
agent, history = train(env, 400, sac_config=sac, encoder_spec=enc, seed=0,
                       checkpoint_path=ckpt)
rewards = [h["reward"] for h in history]
print(f"{len(history)} episodes over 400 decisions; "
      f"first-10 reward mean {np.mean(rewards[:10]):.1f}, "
      f"last-10 {np.mean(rewards[-10:]):.1f}")

fig, ax = plt.subplots(figsize=(7, 4))
ax.plot(rewards, ".", color="lightgray", markersize=4, label="episode")
if len(rewards) >= 10:
    smooth = np.convolve(rewards, np.ones(10) / 10, mode="valid")
    ax.plot(range(9, len(rewards)), smooth, color="tab:red",
            label="10-episode mean")
ax.set_xlabel("episode")
ax.set_ylabel("clipped terminal reward")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(out, "training_curve.png"), dpi=110)
print(f"wrote {out}/training_curve.png")

# Checkpoint round trip: the restored planner must reproduce the live agent
# decision for decision.  The inpaint predictor is stateless, so two episodes
# from the same start are directly comparable.
truth = maps[0][1]
free_ys, free_xs = np.nonzero(truth.cells == 0.0)
start = Pose(int(free_xs[len(free_xs) // 2]), int(free_ys[len(free_ys) // 2]))
live = run_episode(truth, start, ensemble_factory(truth),
                   SacPlanner(agent, preprocess=prep, mode="eval"), cfg)
restored = run_episode(truth, start, ensemble_factory(truth),
                       SacPlanner.from_checkpoint(ckpt), cfg)
assert live.to_json() == restored.to_json()
print(f"checkpoint round trip OK: restored planner matches live "
      f"(iou={restored.final_iou:.3f}, decisions={restored.steps_used})")
