"""Truncated-quantile-critics learner.

An ensemble of distributional critics predicts quantile atoms of the
return; the pooled, sorted atoms lose their largest few before forming
the Bellman target, which counters overestimation bias. The actor is a
tanh-squashed Gaussian trained on the truncated value estimate with
entropy regularization, and every target network tracks its online twin
through Polyak averaging.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import Adam, DenseNet, NonFiniteGradient

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss or gradient; diagnostics attached."""

    def __init__(self, message: str, checkpoint: str | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


# -- distributional pieces ----------------------------------------------------

def quantile_fractions(n: int) -> np.ndarray:
    """Midpoint fractions tau_i = (2i - 1) / 2n for i = 1..n."""
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def truncated_mean(quantiles: np.ndarray, n_drop: int) -> np.ndarray | float:
    """Mean of the pooled, sorted atoms after discarding the n_drop largest.

    ``quantiles`` is (n_critics, n_atoms) or batched (batch, n_critics,
    n_atoms); the critic axis is always pooled before sorting.
    """
    q = np.asarray(quantiles, dtype=float)
    batched = q.ndim == 3
    flat = q.reshape(q.shape[0], -1) if batched else q.reshape(1, -1)
    total = flat.shape[1]
    if not 0 <= n_drop < total:
        raise ValueError(f"n_drop must lie in [0, {total}), got {n_drop}")
    keep = total - n_drop
    kept = np.sort(flat, axis=1)[:, :keep]
    means = kept.mean(axis=1)
    return means if batched else float(means[0])


def truncated_mean_per_critic(quantiles: np.ndarray, drop_per_critic: int) -> np.ndarray | float:
    """Variant that sorts and truncates within each critic before pooling."""
    q = np.asarray(quantiles, dtype=float)
    batched = q.ndim == 3
    if not batched:
        q = q[None]
    n_atoms = q.shape[2]
    if not 0 <= drop_per_critic < n_atoms:
        raise ValueError(f"drop_per_critic must lie in [0, {n_atoms})")
    keep = n_atoms - drop_per_critic
    kept = np.sort(q, axis=2)[:, :, :keep]
    means = kept.reshape(kept.shape[0], -1).mean(axis=1)
    return means if batched else float(means[0])


def huber(u: np.ndarray, kappa: float) -> np.ndarray:
    au = np.abs(u)
    return np.where(au <= kappa, 0.5 * u * u, kappa * (au - 0.5 * kappa))


def quantile_huber_loss(z, y, tau_i, kappa: float = 1.0):
    """Asymmetric Huber penalty |tau - 1{u<0}| * H_kappa(u) / kappa, u = y - z.

    Works elementwise on broadcastable arrays; tau_i is the quantile
    fraction each predicted atom is responsible for.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    u = np.asarray(y, dtype=float) - np.asarray(z, dtype=float)
    tau = np.asarray(tau_i, dtype=float)
    weight = np.abs(tau - (u < 0))
    out = weight * huber(u, kappa) / kappa
    return float(out) if np.isscalar(y) and np.isscalar(z) else out


def critic_target(rewards: np.ndarray, gamma: float, next_quantiles: np.ndarray,
                  n_drop: int, alpha: float, logp_next: np.ndarray,
                  dones: np.ndarray, per_critic_drop: int | None = None) -> np.ndarray:
    """Common scalar Bellman target per sample, from target-network atoms only.

    y = r + gamma * (1 - done) * (truncated_mean - alpha * log pi(a'|s')).
    The same scalar is regressed by every atom of every critic.
    """
    if per_critic_drop is not None:
        trunc = truncated_mean_per_critic(next_quantiles, per_critic_drop)
    else:
        trunc = truncated_mean(next_quantiles, n_drop)
    not_done = 1.0 - np.asarray(dones, dtype=float)
    return np.asarray(rewards, dtype=float) + gamma * not_done * (trunc - alpha * logp_next)


def soft_update(target: DenseNet, online: DenseNet, rho_polyak: float) -> None:
    """Polyak blend target <- rho * online + (1 - rho) * target, in place."""
    if not 0.0 < rho_polyak <= 1.0:
        raise ValueError("rho_polyak must lie in (0, 1]")
    for t, o in zip(target.parameters(), online.parameters()):
        t *= 1.0 - rho_polyak
        t += rho_polyak * o


# -- replay -------------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, dtype=np.float32):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim), dtype=dtype)
        self.act = np.zeros((self.capacity, act_dim), dtype=dtype)
        self.rew = np.zeros(self.capacity, dtype=dtype)
        self.next_obs = np.zeros((self.capacity, obs_dim), dtype=dtype)
        self.done = np.zeros(self.capacity, dtype=dtype)
        self._idx = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, act, rew, next_obs, done) -> None:
        i = self._idx
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self._idx = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if batch_size > self._size:
            raise ValueError(f"requested {batch_size} samples, only {self._size} stored")
        idx = rng.integers(0, self._size, size=batch_size)
        return {
            "obs": self.obs[idx], "act": self.act[idx], "rew": self.rew[idx],
            "next_obs": self.next_obs[idx], "done": self.done[idx],
        }


# -- networks -----------------------------------------------------------------

class StochasticActor:
    """Tanh-squashed Gaussian policy over a box action space."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: tuple[int, ...],
                 action_low: np.ndarray, action_high: np.ndarray,
                 rng: np.random.Generator, dtype=np.float32):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.net = DenseNet([obs_dim, *hidden, 2 * act_dim],
                            ["relu"] * len(hidden) + ["linear"], rng, dtype)
        self.low = np.asarray(action_low, dtype=float)
        self.high = np.asarray(action_high, dtype=float)
        self.center = (self.high + self.low) / 2.0
        self.half = (self.high - self.low) / 2.0

    def _heads(self, out: np.ndarray):
        mu = out[..., :self.act_dim]
        raw = out[..., self.act_dim:]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        return mu, raw, log_std

    def sample(self, obs: np.ndarray, rng: np.random.Generator | None = None,
               eps: np.ndarray | None = None):
        """Reparameterized draw: returns (action, logp, ctx) where ctx carries
        everything the actor-gradient path needs. Pass ``eps`` to pin the
        exploration noise (gradient checks, reproducing a draw)."""
        out, cache = self.net.forward_cached(np.atleast_2d(obs))
        mu, raw, log_std = self._heads(out)
        std = np.exp(log_std)
        if eps is None:
            if rng is None:
                raise ValueError("provide rng or eps")
            eps = rng.standard_normal(mu.shape)
        u = mu + std * eps
        t = np.tanh(u)
        action = self.center + self.half * t
        logp = self._log_prob(eps, log_std, t)
        ctx = {"cache": cache, "raw": raw, "log_std": log_std, "std": std,
               "eps": eps, "t": t}
        return action, logp, ctx

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        out = self.net.forward(np.atleast_2d(obs))
        mu, _, _ = self._heads(out)
        act = self.center + self.half * np.tanh(mu)
        return act[0] if np.ndim(obs) == 1 else act

    def _log_prob(self, eps, log_std, t):
        gauss = -0.5 * eps * eps - log_std - 0.5 * math.log(2.0 * math.pi)
        squash = np.log(self.half * (1.0 - t * t) + SQUASH_EPS)
        return (gauss - squash).sum(axis=-1)


class QuantileCriticEnsemble:
    """K quantile critics (plus target twins) mapping (s, a) to N atoms."""

    def __init__(self, obs_dim: int, act_dim: int, n_critics: int, n_quantiles: int,
                 hidden: tuple[int, ...], rng: np.random.Generator, dtype=np.float32):
        if n_critics < 2:
            raise ValueError("need at least 2 critics")
        if n_quantiles < 1:
            raise ValueError("need at least 1 quantile atom")
        self.n_critics = n_critics
        self.n_quantiles = n_quantiles
        self.fractions = quantile_fractions(n_quantiles)
        layers = [obs_dim + act_dim, *hidden, n_quantiles]
        acts = ["relu"] * len(hidden) + ["linear"]
        self.nets = [DenseNet(layers, acts, rng, dtype) for _ in range(n_critics)]
        self.targets = [net.clone() for net in self.nets]

    def atoms(self, obs: np.ndarray, act: np.ndarray, target: bool = False) -> np.ndarray:
        """Stacked atoms with shape (batch, n_critics, n_quantiles)."""
        x = np.concatenate([obs, act], axis=1)
        nets = self.targets if target else self.nets
        return np.stack([net.forward(x) for net in nets], axis=1)


# -- trainer ------------------------------------------------------------------

@dataclass
class TqcConfig:
    """Learner hyperparameters. Sizes follow the standard truncated-quantile
    reference values; everything is overridable per run."""

    hidden: tuple[int, ...] = (256, 256)
    n_critics: int = 5
    n_quantiles: int = 25
    drop_per_critic: int = 2          # pooled mode drops drop_per_critic * n_critics atoms
    truncation: str = "pooled"        # "pooled" | "per_critic"
    gamma: float = 0.99
    batch_size: int = 256
    replay_capacity: int = 1_000_000
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_alpha: float = 3e-4
    rho_polyak: float = 0.005
    kappa: float = 1.0
    alpha_init: float = 0.2
    auto_alpha: bool = True
    target_entropy: float | None = None   # None -> -act_dim
    start_steps: int = 1000
    update_every: int = 1
    updates_per_step: int = 1
    episodes: int = 200
    dtype: str = "float32"


@dataclass
class EpisodeLog:
    episode: int
    ret: float
    avg_aoi: float
    min_sss: float
    drops: int
    collisions: int
    energy_violations: int
    wall_time: float

    HEADER = ["episode", "return", "avg_aoi", "min_sss", "drops", "collisions",
              "energy_violations", "wall_time"]

    def row(self) -> list:
        return [self.episode, self.ret, self.avg_aoi, self.min_sss, self.drops,
                self.collisions, self.energy_violations, self.wall_time]


class TqcTrainer:
    """Owns the actor, critic ensemble, replay buffer and optimizers."""

    def __init__(self, obs_dim: int, act_dim: int, action_low, action_high,
                 cfg: TqcConfig, seed: int = 0):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        dtype = np.dtype(cfg.dtype)
        self.rng = np.random.default_rng(seed)
        self.actor = StochasticActor(obs_dim, act_dim, cfg.hidden,
                                     action_low, action_high, self.rng, dtype)
        self.actor_target = StochasticActor(obs_dim, act_dim, cfg.hidden,
                                            action_low, action_high, self.rng, dtype)
        self.actor_target.net.copy_from(self.actor.net)
        self.critics = QuantileCriticEnsemble(obs_dim, act_dim, cfg.n_critics,
                                              cfg.n_quantiles, cfg.hidden, self.rng, dtype)
        self.buffer = ReplayBuffer(cfg.replay_capacity, obs_dim, act_dim)
        self.actor_opt = Adam(self.actor.net.parameters(), lr=cfg.lr_actor)
        self.critic_opts = [Adam(net.parameters(), lr=cfg.lr_critic)
                            for net in self.critics.nets]
        self.log_alpha = math.log(cfg.alpha_init)
        self._alpha_m = 0.0
        self._alpha_v = 0.0
        self._alpha_t = 0
        self.target_entropy = (-float(act_dim) if cfg.target_entropy is None
                               else cfg.target_entropy)
        self.total_drop = cfg.drop_per_critic * cfg.n_critics

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    # -- acting ---------------------------------------------------------------

    def select_action(self, obs: np.ndarray, deterministic: bool = False) -> np.ndarray:
        if deterministic:
            return self.actor.mean_action(obs)
        action, _, _ = self.actor.sample(obs, self.rng)
        return action[0]

    def random_action(self) -> np.ndarray:
        return self.rng.uniform(self.actor.low, self.actor.high)

    # -- learning -------------------------------------------------------------

    def compute_targets(self, batch: dict) -> np.ndarray:
        """Bellman targets; reads target networks exclusively."""
        cfg = self.cfg
        next_action, logp_next, _ = self.actor_target.sample(batch["next_obs"], self.rng)
        next_atoms = self.critics.atoms(batch["next_obs"], next_action, target=True)
        per_critic = cfg.drop_per_critic if cfg.truncation == "per_critic" else None
        return critic_target(batch["rew"], cfg.gamma, next_atoms, self.total_drop,
                             self.alpha, logp_next, batch["done"],
                             per_critic_drop=per_critic)

    def update(self, batch: dict) -> dict:
        cfg = self.cfg
        y = self.compute_targets(batch)
        x = np.concatenate([batch["obs"], batch["act"]], axis=1)
        batch_size = x.shape[0]
        fractions = self.critics.fractions

        critic_loss = 0.0
        for net, opt in zip(self.critics.nets, self.critic_opts):
            z, cache = net.forward_cached(x)
            u = y[:, None] - z
            weight = np.abs(fractions[None, :] - (u < 0))
            critic_loss += float((weight * huber(u, cfg.kappa)).sum(axis=1).mean() / cfg.kappa)
            gz = -(weight * np.clip(u, -cfg.kappa, cfg.kappa)) / (cfg.kappa * batch_size)
            grads, _ = net.backward(cache, gz.astype(z.dtype))
            opt.step(net.parameters(), _flatten(grads))
        critic_loss /= cfg.n_critics

        actor_loss, entropy = self._update_actor(batch["obs"])
        self._update_alpha(entropy)

        for target, online in zip(self.critics.targets, self.critics.nets):
            soft_update(target, online, cfg.rho_polyak)
        soft_update(self.actor_target.net, self.actor.net, cfg.rho_polyak)

        if not (math.isfinite(critic_loss) and math.isfinite(actor_loss)):
            raise TrainingDiverged(
                f"non-finite loss (critic={critic_loss}, actor={actor_loss})")
        return {"critic_loss": critic_loss, "actor_loss": actor_loss,
                "alpha": self.alpha, "entropy": entropy}

    def _update_actor(self, obs: np.ndarray) -> tuple[float, float]:
        """One step on E[alpha * log pi - Q_trunc]; critics stay frozen and
        gradients reach them only through the sampled action."""
        eps = self.rng.standard_normal((obs.shape[0], self.act_dim))
        loss, grads, aux = actor_loss_and_grads(self.actor, self.critics, obs,
                                                self.total_drop, self.alpha, eps)
        self.actor_opt.step(self.actor.net.parameters(), grads)
        return loss, aux["mean_logp"]

    def _update_alpha(self, mean_logp: float) -> None:
        if not self.cfg.auto_alpha:
            return
        # Descent on E[-log_alpha * (log pi + target_entropy)]: temperature
        # rises while the policy is more deterministic than the target.
        grad = -(mean_logp + self.target_entropy)
        # Adam on log_alpha, one scalar parameter.
        self._alpha_t += 1
        self._alpha_m = 0.9 * self._alpha_m + 0.1 * grad
        self._alpha_v = 0.999 * self._alpha_v + 0.001 * grad * grad
        m_hat = self._alpha_m / (1.0 - 0.9 ** self._alpha_t)
        v_hat = self._alpha_v / (1.0 - 0.999 ** self._alpha_t)
        self.log_alpha -= self.cfg.lr_alpha * m_hat / (math.sqrt(v_hat) + 1e-8)

    # -- persistence ------------------------------------------------------------

    def save_actor(self, path: str | Path) -> None:
        self.actor.net.save(path)

    def load_actor(self, path: str | Path) -> None:
        self.actor.net = DenseNet.load(path)
        self.actor_target.net = self.actor.net.clone()


def actor_loss_and_grads(actor: StochasticActor, critics: QuantileCriticEnsemble,
                         obs: np.ndarray, n_drop: int, alpha: float,
                         eps: np.ndarray) -> tuple[float, list[np.ndarray], dict]:
    """Loss mean[alpha * log pi(a|s) - Q_trunc(s, a)] with a reparameterized
    from the policy, plus its exact gradients w.r.t. the actor parameters.

    The critics are read-only here: gradients reach them only through the
    sampled action, never their parameters. Returns (loss, parameter
    gradients in ``actor.net.parameters()`` order, aux diagnostics).
    """
    obs = np.atleast_2d(obs)
    batch_size = obs.shape[0]
    action, logp, ctx = actor.sample(obs, eps=eps)

    x = np.concatenate([obs, action], axis=1)
    total = critics.n_critics * critics.n_quantiles
    if not 0 <= n_drop < total:
        raise ValueError(f"n_drop must lie in [0, {total})")
    keep = total - n_drop
    caches, atom_list = [], []
    for net in critics.nets:
        z, cache = net.forward_cached(x)
        caches.append(cache)
        atom_list.append(z)
    atoms = np.stack(atom_list, axis=1)            # (B, K, N)
    flat = atoms.reshape(batch_size, -1)
    order = np.argsort(flat, axis=1)
    q_value = np.take_along_axis(flat, order[:, :keep], axis=1).mean(axis=1)

    # dL/d(atom) = -1/(keep * B) on the kept atoms, zero on the truncated.
    g_flat = np.zeros_like(flat)
    np.put_along_axis(g_flat, order[:, :keep], -1.0 / (keep * batch_size), axis=1)
    g_atoms = g_flat.reshape(atoms.shape)

    grad_action = np.zeros((batch_size, actor.act_dim))
    for j, (net, cache) in enumerate(zip(critics.nets, caches)):
        _, g_in = net.backward(cache, g_atoms[:, j, :])
        grad_action += g_in[:, obs.shape[1]:]

    t = ctx["t"]
    half = actor.half
    alpha_term = alpha / batch_size
    squash_den = half * (1.0 - t * t) + SQUASH_EPS
    g_t = grad_action * half + alpha_term * (2.0 * half * t) / squash_den
    g_u = g_t * (1.0 - t * t)
    g_log_std = g_u * ctx["std"] * ctx["eps"] - alpha_term
    clip_mask = (ctx["raw"] > LOG_STD_MIN) & (ctx["raw"] < LOG_STD_MAX)
    g_log_std = g_log_std * clip_mask
    head_grad = np.concatenate([g_u, g_log_std], axis=1)
    grads, _ = actor.net.backward(ctx["cache"], head_grad)

    loss = float((alpha * logp - q_value).mean())
    aux = {"action": action, "logp": logp, "q_value": q_value,
           "grad_action": grad_action, "mean_logp": float(logp.mean())}
    return loss, _flatten(grads), aux


def train(env_factory, cfg: TqcConfig, seed: int = 0,
          log_path: str | Path | None = None,
          checkpoint_dir: str | Path | None = None) -> tuple[StochasticActor, list[EpisodeLog]]:
    """Collect/learn loop: roll out one slot at a time, store transitions,
    and take gradient steps on critics, actor and temperature after every
    environment step once the warmup buffer is filled.

    Returns the trained actor and the per-episode log. On divergence the
    current actor is checkpointed (when a directory is given) and
    :class:`TrainingDiverged` is raised with diagnostics.
    """
    env = env_factory()
    trainer = TqcTrainer(env.observation_dim, env.action_dim,
                         env.action_low, env.action_high, cfg, seed=seed)
    logs: list[EpisodeLog] = []
    total_steps = 0
    t0 = time.perf_counter()

    try:
        for episode in range(cfg.episodes):
            obs = env.reset(seed=seed + episode)
            ep_return = 0.0
            done = False
            while not done:
                if total_steps < cfg.start_steps:
                    action = trainer.random_action()
                else:
                    action = trainer.select_action(obs)
                next_obs, reward, done, _ = env.step(action)
                trainer.buffer.add(obs, action, reward, next_obs, done)
                obs = next_obs
                ep_return += reward
                total_steps += 1
                if (len(trainer.buffer) >= cfg.batch_size
                        and total_steps >= cfg.start_steps
                        and total_steps % cfg.update_every == 0):
                    for _ in range(cfg.updates_per_step):
                        trainer.update(trainer.buffer.sample(cfg.batch_size, trainer.rng))

            metrics = env.mission_metrics() if hasattr(env, "mission_metrics") else {}
            logs.append(EpisodeLog(
                episode=episode, ret=ep_return,
                avg_aoi=metrics.get("avg_aoi", 0.0),
                min_sss=metrics.get("min_sss", 0.0),
                drops=metrics.get("drops", 0),
                collisions=metrics.get("collisions", 0),
                energy_violations=metrics.get("energy_violations", 0),
                wall_time=time.perf_counter() - t0))
    except (TrainingDiverged, NonFiniteGradient) as exc:
        checkpoint = None
        if checkpoint_dir is not None:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            checkpoint = str(Path(checkpoint_dir) / "actor_diverged.npz")
            trainer.save_actor(checkpoint)
        raise TrainingDiverged(
            f"aborted after {total_steps} steps: {exc}", checkpoint=checkpoint) from exc

    if log_path is not None:
        write_training_log(logs, log_path)
    return trainer.actor, logs


def write_training_log(logs: list[EpisodeLog], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EpisodeLog.HEADER)
        for log in logs:
            writer.writerow(log.row())


def _flatten(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    out = []
    for dw, db in grads:
        out.extend([dw, db])
    return out
