"""Discrete soft actor-critic over frontier action sets.

The agent sees an egocentric probability image plus the flat frontier
feature block, encodes the image with separate actor/critic conv
encoders, and maintains twin Q heads with a slowly tracking target
copy.  Invalid action slots are masked to probability zero everywhere:
in action selection, in the policy gradient, and in the target value.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .encoder import DEFAULT_ENCODER, MapEncoder


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    batch_size: int = 256
    buffer_capacity: int = 10_000
    learning_starts: int = 1000
    gradient_steps: int = 4
    train_freq: int = 1
    tau: float = 0.02
    learning_rate: float = 0.00073
    entropy_target_scale: float = 0.3  # target entropy = scale * ln(n_slots)
    autotune_alpha: bool = True
    alpha_init: float = 1.0
    hidden: tuple = (256, 256)


@dataclass
class Observation:
    """Raw policy input: preprocessed map image + flat frontier features."""

    image: np.ndarray     # (S, S) float32 in [0, 1]
    features: np.ndarray  # (5N + 1,) float32
    valid: np.ndarray     # (N,) bool


@dataclass
class Transition:
    obs: Observation
    action: int
    reward: float
    next_obs: Observation
    done: bool


class ReplayBuffer:
    """FIFO ring buffer.  Images are stored quantised to uint8 so the
    conv encoders still receive (near-)raw pixels at sample time rather
    than stale latents from an older encoder."""

    def __init__(self, capacity, image_side, feature_dim, n_slots):
        self.capacity = capacity
        shape = (capacity, image_side, image_side)
        self.images = np.zeros(shape, dtype=np.uint8)
        self.next_images = np.zeros(shape, dtype=np.uint8)
        self.features = np.zeros((capacity, feature_dim), dtype=np.float32)
        self.next_features = np.zeros((capacity, feature_dim), dtype=np.float32)
        self.valid = np.zeros((capacity, n_slots), dtype=bool)
        self.next_valid = np.zeros((capacity, n_slots), dtype=bool)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=bool)
        self.pos = 0
        self.size = 0

    @staticmethod
    def _quantise(image):
        return np.rint(np.asarray(image, dtype=np.float32) * 255.0).astype(np.uint8)

    def push(self, t: Transition):
        i = self.pos
        self.images[i] = self._quantise(t.obs.image)
        self.next_images[i] = self._quantise(t.next_obs.image)
        self.features[i] = t.obs.features
        self.next_features[i] = t.next_obs.features
        self.valid[i] = t.obs.valid
        self.next_valid[i] = t.next_obs.valid
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.dones[i] = t.done
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch_size, dtype=np.float32):
        idx = rng.integers(0, self.size, size=batch_size)
        scale = dtype(1.0 / 255.0)
        return {
            "images": self.images[idx].astype(dtype) * scale,
            "features": self.features[idx].astype(dtype),
            "valid": self.valid[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx].astype(dtype),
            "next_images": self.next_images[idx].astype(dtype) * scale,
            "next_features": self.next_features[idx].astype(dtype),
            "next_valid": self.next_valid[idx],
            "dones": self.dones[idx],
        }


class _HeadedNet:
    """Shared conv encoder feeding one or two MLP heads over
    concat(latent, features)."""

    def __init__(self, encoder_spec, feature_dim, n_slots, hidden, n_heads, rng, dtype):
        self.encoder = MapEncoder(encoder_spec, rng, dtype=dtype)
        sizes = (encoder_spec.latent + feature_dim, *hidden, n_slots)
        self.heads = [nn.mlp(sizes, rng, dtype=dtype) for _ in range(n_heads)]
        self._latent = encoder_spec.latent
        self._inp = None

    def forward(self, images, features):
        latent = self.encoder.forward(images)
        self._inp = np.concatenate([latent, features], axis=1)
        outs = [h.forward(self._inp) for h in self.heads]
        return outs[0] if len(outs) == 1 else outs

    def backward(self, *douts):
        dinp = None
        for head, dy in zip(self.heads, douts):
            d = head.backward(dy)
            dinp = d if dinp is None else dinp + d
        self.encoder.backward(dinp[:, :self._latent])

    def params(self):
        out = {f"encoder.{k}": v for k, v in self.encoder.params().items()}
        for i, h in enumerate(self.heads):
            out.update({f"head{i}.{k}": v for k, v in h.params().items()})
        return out

    def grads(self):
        out = {f"encoder.{k}": v for k, v in self.encoder.grads().items()}
        for i, h in enumerate(self.heads):
            out.update({f"head{i}.{k}": v for k, v in h.grads().items()})
        return out


def _copy_params(dst, src):
    dp, sp = dst.params(), src.params()
    for k in sp:
        dp[k][...] = sp[k]


class DiscreteSac:
    def __init__(self, n_slots, feature_dim, encoder_spec=DEFAULT_ENCODER,
                 config=None, seed=0, dtype=np.float32):
        self.n_slots = n_slots
        self.feature_dim = feature_dim
        self.encoder_spec = encoder_spec
        self.config = config or SacConfig()
        self.dtype = dtype
        cfg = self.config
        root = np.random.default_rng(seed)
        init_rng, self._act_rng, self._sample_rng = root.spawn(3)

        self.actor = _HeadedNet(encoder_spec, feature_dim, n_slots,
                                cfg.hidden, 1, init_rng, dtype)
        self.critic = _HeadedNet(encoder_spec, feature_dim, n_slots,
                                 cfg.hidden, 2, init_rng, dtype)
        self.critic_target = _HeadedNet(encoder_spec, feature_dim, n_slots,
                                        cfg.hidden, 2, init_rng, dtype)
        _copy_params(self.critic_target, self.critic)

        self.log_alpha = np.array([math.log(cfg.alpha_init)], dtype=np.float64)
        self.target_entropy = cfg.entropy_target_scale * math.log(n_slots)

        self.actor_opt = nn.Adam(self.actor.params(), cfg.learning_rate)
        self.critic_opt = nn.Adam(self.critic.params(), cfg.learning_rate)
        self.alpha_opt = nn.Adam({"log_alpha": self.log_alpha}, cfg.learning_rate)

        self.buffer = ReplayBuffer(cfg.buffer_capacity, encoder_spec.in_size,
                                   feature_dim, n_slots)
        self.env_steps = 0
        self.updates = 0

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha[0]))

    # ---- acting --------------------------------------------------------

    def observation_vector(self, obs: Observation):
        """Assembled policy input: encoded map latent then flat features."""
        latent = self.actor.encoder.forward(
            obs.image[None].astype(self.dtype))[0]
        return np.concatenate([latent, obs.features]).astype(np.float32)

    def act(self, obs: Observation, mode="train"):
        """Chosen slot index, or None when no slot is valid.

        Train mode samples the masked policy; eval mode is the masked
        argmax (deterministic, lowest index on ties).
        """
        valid = np.asarray(obs.valid, dtype=bool)
        if not valid.any():
            return None
        logits = self.actor.forward(obs.image[None].astype(self.dtype),
                                    obs.features[None].astype(self.dtype))[0]
        if mode == "eval":
            return int(np.argmax(np.where(valid, logits, -np.inf)))
        p = nn.masked_softmax(logits[None], valid[None])[0]
        p = p / p.sum()
        return int(self._act_rng.choice(self.n_slots, p=p))

    # ---- learning ------------------------------------------------------

    def record(self, transition: Transition):
        self.buffer.push(transition)
        self.env_steps += 1

    def ready(self):
        cfg = self.config
        return (self.env_steps >= cfg.learning_starts
                and self.env_steps % cfg.train_freq == 0)

    def train_step(self):
        """Run the configured number of gradient steps if warm-up is done."""
        if not self.ready():
            return None
        diag = None
        for _ in range(self.config.gradient_steps):
            diag = self.update()
        return diag

    def _target_values(self, batch):
        logits = self.actor.forward(batch["next_images"], batch["next_features"])
        logp = nn.masked_log_softmax(logits, batch["next_valid"])
        pi = np.where(batch["next_valid"], np.exp(logp), 0.0)
        q1t, q2t = self.critic_target.forward(batch["next_images"],
                                              batch["next_features"])
        qmin = np.minimum(q1t, q2t).astype(np.float64)
        inner = np.where(batch["next_valid"], qmin - self.alpha * logp, 0.0)
        v_next = (pi * inner).sum(axis=1)  # all-invalid rows contribute 0
        not_done = 1.0 - batch["dones"].astype(np.float64)
        return batch["rewards"].astype(np.float64) + self.config.gamma * not_done * v_next

    def critic_loss(self, batch):
        """Twin TD loss on the taken actions; fills critic grads."""
        y = self._target_values(batch)
        nn.zero_grads(self.critic.grads())
        q1, q2 = self.critic.forward(batch["images"], batch["features"])
        rows = np.arange(len(y))
        a = batch["actions"]
        td1 = q1[rows, a].astype(np.float64) - y
        td2 = q2[rows, a].astype(np.float64) - y
        loss = float((td1 ** 2 + td2 ** 2).mean())
        dq1 = np.zeros_like(q1)
        dq2 = np.zeros_like(q2)
        dq1[rows, a] = (2.0 * td1 / len(y)).astype(q1.dtype)
        dq2[rows, a] = (2.0 * td2 / len(y)).astype(q2.dtype)
        self.critic.backward(dq1, dq2)
        return loss

    def actor_loss(self, batch):
        """Expected (alpha*logpi - minQ) under the masked policy; fills
        actor grads.  Returns (loss, mean policy entropy)."""
        nn.zero_grads(self.actor.grads())
        logits = self.actor.forward(batch["images"], batch["features"])
        logp = nn.masked_log_softmax(logits, batch["valid"])
        pi = np.where(batch["valid"], np.exp(logp), 0.0)
        q1, q2 = self.critic.forward(batch["images"], batch["features"])
        qmin = np.minimum(q1, q2).astype(np.float64)
        g = np.where(batch["valid"], self.alpha * logp - qmin, 0.0)
        per_row = (pi * g).sum(axis=1)
        loss = float(per_row.mean())
        dlogits = (pi * (g - per_row[:, None]) / len(per_row)).astype(logits.dtype)
        self.actor.backward(dlogits)
        entropy = -(pi * np.where(batch["valid"], logp, 0.0)).sum(axis=1)
        return loss, entropy

    def update(self, batch=None):
        if batch is None:
            batch = self.buffer.sample(self._sample_rng,
                                       self.config.batch_size, self.dtype)
        closs = self.critic_loss(batch)
        self.critic_opt.step(self.critic.grads())
        aloss, entropy = self.actor_loss(batch)
        self.actor_opt.step(self.actor.grads())
        if self.config.autotune_alpha:
            # descend alpha when entropy sits above target, raise it below
            grad = float(entropy.mean() - self.target_entropy)
            self.alpha_opt.step({"log_alpha": np.array([grad])})
        self.soft_update()
        self.updates += 1
        return {"critic_loss": closs, "actor_loss": aloss,
                "alpha": self.alpha, "entropy": float(entropy.mean())}

    def soft_update(self):
        tau = self.config.tau
        tp = self.critic_target.params()
        sp = self.critic.params()
        for k in sp:
            tp[k][...] = (1.0 - tau) * tp[k] + tau * sp[k]

    # ---- persistence ---------------------------------------------------

    def state_tensors(self):
        """Every learnable array, keyed for the checkpoint file."""
        out = {}
        for prefix, net in (("actor", self.actor), ("critic", self.critic),
                            ("target", self.critic_target)):
            out.update({f"{prefix}/{k}": v for k, v in net.params().items()})
        out["log_alpha"] = self.log_alpha
        for prefix, opt in (("opt_actor", self.actor_opt),
                            ("opt_critic", self.critic_opt),
                            ("opt_alpha", self.alpha_opt)):
            for k in opt.params:
                out[f"{prefix}/m/{k}"] = opt.m[k]
                out[f"{prefix}/v/{k}"] = opt.v[k]
        return out

    def opt_steps(self):
        return {"actor": self.actor_opt.t, "critic": self.critic_opt.t,
                "alpha": self.alpha_opt.t}

    def load_state_tensors(self, tensors, opt_steps=None):
        own = self.state_tensors()
        for k, v in own.items():
            if k not in tensors:
                raise ValueError(f"checkpoint missing tensor {k!r}")
            src = tensors[k]
            if tuple(src.shape) != tuple(v.shape):
                raise ValueError(f"shape mismatch for {k!r}: "
                                 f"{src.shape} vs {v.shape}")
            v[...] = src
        if opt_steps:
            self.actor_opt.t = int(opt_steps["actor"])
            self.critic_opt.t = int(opt_steps["critic"])
            self.alpha_opt.t = int(opt_steps["alpha"])

    def config_dict(self):
        return asdict(self.config)
