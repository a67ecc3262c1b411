"""Adversarial jammer: listen/jam scheduling, interference interpolation,
reward shaping, the learning jammer and the non-learning baselines.

Every jammer sees only the aggregate downlink power vector it overheard on
listening slots plus its own past actions; victim internals (rewards, user
positions, fading) never cross this interface.  The max-rate baseline is the
one exception and is constructed with an explicit oracle callback.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .nn import Adam, FeedForward, save_params, load_params, assign_params

LOG_EPS = 1e-12


@dataclass
class JammerConfig:
    n_channels: int = 16
    n_jam: int = 8               # channels jammed per jamming slot
    period: int = 2              # T_J slots per listen/jam cycle, jam on the last
    gamma: float = 0.9
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    hidden: int = 16
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_horizon: int = 5_000     # jamming phases, not slots
    batch: int = 10
    replay_capacity: int = 1000
    diff_window: int = 50        # jamming phases kept for the beta numerator
    reward_scale: float = 1.0

    def validate(self) -> None:
        if not 1 <= self.n_jam <= self.n_channels:
            raise ValueError("need 1 <= n_jam <= n_channels")
        if self.period < 2:
            raise ValueError("listen/jam period must be at least 2 slots")


def interpolate_target(prev_listen: np.ndarray, next_listen: np.ndarray,
                       beta: float) -> np.ndarray:
    """Interference estimate for the blind jamming slot between two listens:
    (beta*prev + next) / (beta + 1).  beta=0 trusts the upcoming listen."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return (beta * prev_listen + next_listen) / (beta + 1.0)


def jam_reward(action_mask: np.ndarray, target: np.ndarray) -> float:
    """Negative squared distance between the action and the peak-normalised
    target; 0 only when the binary action matches the normalised target."""
    peak = target.max()
    scaled = target / peak if peak > 0 else target
    diff = action_mask.astype(float) - scaled
    return float(-(diff * diff).sum())


class BetaEstimator:
    """Tracks how much faster interference drifts across jamming phases than
    across quiet listening, beta = max(2*r - 1, 0) with r the ratio of the
    mean summed |listen(t+1) - listen(t-1)| over jamming phases to the same
    mean over a pre-jamming baseline."""

    def __init__(self, window: int):
        self.baseline: list[float] = []
        self.jam_diffs: deque[float] = deque(maxlen=window)
        self._beta = 0.0

    def add_baseline(self, prev_listen: np.ndarray, next_listen: np.ndarray) -> None:
        self.baseline.append(float(np.abs(next_listen - prev_listen).sum()))

    def add_jam_diff(self, prev_listen: np.ndarray, next_listen: np.ndarray) -> None:
        self.jam_diffs.append(float(np.abs(next_listen - prev_listen).sum()))
        self._refresh()

    def _refresh(self) -> None:
        if not self.baseline or not self.jam_diffs:
            return
        base = sum(self.baseline) / len(self.baseline)
        if base == 0.0:
            return                      # keep previous beta on a dead baseline
        jam = sum(self.jam_diffs) / len(self.jam_diffs)
        self._beta = max(2.0 * jam / base - 1.0, 0.0)

    @property
    def beta(self) -> float:
        return self._beta


def top_k_channels(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties toward the lowest index."""
    return np.sort(np.argsort(-values, kind="stable")[:k])


def channel_mask(channels: np.ndarray, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=np.uint8)
    mask[channels] = 1
    return mask


@dataclass(eq=False)
class JamSample:
    obs_prev: np.ndarray
    obs_cur: np.ndarray
    action: np.ndarray           # (N,) 0/1
    reward: float = 0.0
    policy: int = 0
    sigma: np.ndarray | None = None


class JammerAgent:
    """Actor-critic jammer over a sliding window of listens and own actions.

    The observation at a jamming slot t stacks the previous jamming action
    and the listening vectors of the T_J - 1 slots in between.  Rewards
    arrive one slot late (the next listen closes the interpolation), so
    samples are finalised asynchronously.  mode "ac" learns beta from the
    listening stream; mode "next" pins beta = 0.
    """

    def __init__(self, cfg: JammerConfig, rng: np.random.Generator,
                 mode: str = "ac"):
        if mode not in ("ac", "next"):
            raise ValueError("mode must be ac or next")
        cfg.validate()
        self.cfg = cfg
        self.mode = mode
        self.rng = rng
        in_dim = cfg.period * cfg.n_channels
        self.actor = FeedForward([in_dim, cfg.hidden, cfg.n_channels], rng,
                                 out_activation="sigmoid")
        self.critic = FeedForward([in_dim, cfg.hidden, 1], rng)
        self.opt_actor = Adam(self.actor.named_items("jactor."), cfg.lr_actor)
        self.opt_critic = Adam(self.critic.named_items("jcritic."), cfg.lr_critic)
        self.beta_est = BetaEstimator(cfg.diff_window)
        self.listens: dict[int, np.ndarray] = {}
        self.actions: dict[int, np.ndarray] = {}
        self.replay: list[JamSample] = []
        self.open_sample: JamSample | None = None
        self.prev_obs: np.ndarray | None = None
        self.phases = 0
        self.training = True

    # ---- observation plumbing ------------------------------------------

    def observe_listen(self, t: int, listen: np.ndarray) -> None:
        self.listens[t] = np.asarray(listen, dtype=float).copy()
        self._trim(t)

    def note_baseline_pair(self, t: int) -> None:
        """During pre-jamming listening, consecutive listens feed the beta
        baseline: uses listens at t-1 and t+1 when both quiet."""
        if t - 1 in self.listens and t + 1 in self.listens:
            self.beta_est.add_baseline(self.listens[t - 1], self.listens[t + 1])

    def _trim(self, t: int) -> None:
        horizon = 4 * self.cfg.period + 4
        for d in (self.listens, self.actions):
            for key in [k for k in d if k < t - horizon]:
                del d[key]

    def build_observation(self, t: int) -> np.ndarray | None:
        """Window for a jamming decision at slot t: own action at t - T_J then
        the listens at t - T_J + 1 ... t - 1.  None while history is short."""
        parts = []
        prev_jam = t - self.cfg.period
        if prev_jam not in self.actions:
            return None
        parts.append(self.actions[prev_jam].astype(float))
        for s in range(prev_jam + 1, t):
            if s not in self.listens:
                return None
            parts.append(self.listens[s])
        return np.concatenate(parts)

    # ---- acting ----------------------------------------------------------

    def epsilon(self) -> float:
        cfg = self.cfg
        if not self.training or self.phases >= cfg.eps_horizon:
            return cfg.eps_end
        frac = self.phases / cfg.eps_horizon
        return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac

    def decide(self, t: int) -> np.ndarray:
        """Channel mask to jam at slot t (a jamming slot)."""
        cfg = self.cfg
        obs = self.build_observation(t)
        explore = self.rng.uniform() < self.epsilon()
        if obs is None or explore:
            chans = self.rng.choice(cfg.n_channels, size=cfg.n_jam, replace=False)
            mask = channel_mask(chans, cfg.n_channels)
        else:
            probs = self.actor.forward(obs)
            mask = channel_mask(top_k_channels(probs, cfg.n_jam), cfg.n_channels)
        self.actions[t] = mask
        if obs is not None and self.prev_obs is not None:
            self.open_sample = JamSample(obs_prev=self.prev_obs, obs_cur=obs,
                                         action=mask)
        else:
            self.open_sample = None
        if obs is not None:
            self.prev_obs = obs
        self.phases += 1
        return mask

    # ---- learning --------------------------------------------------------

    def finalize(self, t: int) -> float | None:
        """Close the reward of the jamming slot at t-1 once the listen at t
        landed; trains on a minibatch when enough samples are banked."""
        jam_t = t - 1
        if jam_t not in self.actions:
            return None
        prev_l = self.listens.get(jam_t - 1)
        next_l = self.listens.get(jam_t + 1)
        if prev_l is None or next_l is None:
            return None
        if self.mode == "ac":
            self.beta_est.add_jam_diff(prev_l, next_l)
        beta = self.beta_est.beta if self.mode == "ac" else 0.0
        target = interpolate_target(prev_l, next_l, beta)
        reward = jam_reward(self.actions[jam_t], target)
        if self.open_sample is not None:
            self.open_sample.reward = reward
            self.replay.append(self.open_sample)
            if len(self.replay) > self.cfg.replay_capacity:
                self.replay.pop(0)
            self.open_sample = None
            if self.training:
                self._train()
        return reward

    def _train(self) -> None:
        cfg = self.cfg
        if len(self.replay) < cfg.batch:
            return
        idx = self.rng.integers(0, len(self.replay), size=cfg.batch)
        batch = [self.replay[i] for i in idx]
        inv = 1.0 / cfg.batch
        self.critic.zero_grads()
        self.actor.zero_grads()
        deltas = []
        for s in batch:
            v_next = float(self.critic.forward(s.obs_cur)[0])
            v_prev = float(self.critic.forward(s.obs_prev)[0])
            delta = (s.reward * cfg.reward_scale + cfg.gamma * v_next - v_prev)
            self.critic.backward(np.array([-2.0 * delta * inv]))
            deltas.append(delta)
        self.opt_critic.step()
        for s, delta in zip(batch, deltas):
            probs = self.actor.forward(s.obs_cur)
            chosen = s.action.astype(bool)
            dp = np.zeros_like(probs)
            dp[chosen] = -delta * inv / np.maximum(probs[chosen], LOG_EPS)
            self.actor.backward(dp)
        self.opt_actor.step()

    # ---- persistence -----------------------------------------------------

    def state_items(self) -> dict[str, np.ndarray]:
        items = {name: p for name, p, _ in self.actor.named_items("jactor.")}
        items.update({name: p for name, p, _ in self.critic.named_items("jcritic.")})
        return items

    def save(self, path) -> None:
        save_params(path, self.state_items())

    def load(self, path) -> None:
        loaded = load_params(path)
        assign_params(self.actor.named_items("jactor."), loaded)
        assign_params(self.critic.named_items("jcritic."), loaded)


class LastInterferenceJammer:
    """Jams the strongest channels of the most recent listen."""

    def __init__(self, cfg: JammerConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.rng = rng
        self.last_listen: np.ndarray | None = None

    def observe_listen(self, t: int, listen: np.ndarray) -> None:
        self.last_listen = np.asarray(listen, dtype=float).copy()

    def note_baseline_pair(self, t: int) -> None:
        pass

    def decide(self, t: int) -> np.ndarray:
        cfg = self.cfg
        if self.last_listen is None:
            chans = self.rng.choice(cfg.n_channels, size=cfg.n_jam, replace=False)
        else:
            chans = top_k_channels(self.last_listen, cfg.n_jam)
        return channel_mask(chans, cfg.n_channels)

    def finalize(self, t: int) -> None:
        return None


class MaxRateJammer:
    """Samples channels proportionally to their best achievable clean rate.

    Built with an oracle callback returning the per-channel peak rates; this
    baseline deliberately breaks the listening-only information model.
    """

    def __init__(self, cfg: JammerConfig, rng: np.random.Generator, oracle):
        cfg.validate()
        self.cfg = cfg
        self.rng = rng
        self.oracle = oracle

    def observe_listen(self, t: int, listen: np.ndarray) -> None:
        pass

    def note_baseline_pair(self, t: int) -> None:
        pass

    def decide(self, t: int) -> np.ndarray:
        cfg = self.cfg
        rates = np.asarray(self.oracle(), dtype=float)
        w = rates.clip(min=0.0)
        if w.sum() <= 0:
            chans = self.rng.choice(cfg.n_channels, size=cfg.n_jam, replace=False)
            return channel_mask(chans, cfg.n_channels)
        chans = self.rng.choice(cfg.n_channels, size=cfg.n_jam, replace=False,
                                p=w / w.sum())
        return channel_mask(chans, cfg.n_channels)

    def finalize(self, t: int) -> None:
        return None


def optimize_location(params, bs_xy: np.ndarray, radius_km: float,
                      pitch_km: float, mc_samples: int,
                      rng: np.random.Generator,
                      bounds_km: tuple[float, float, float, float] | None = None
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Grid search for the jammer position minimising the service-area rate.

    For each grid point the objective is a Monte Carlo average, over fading
    draws and user positions uniform in the coverage union, of the best
    jammed sum rate any cell can offer that user when every cell transmits on
    every channel and every channel is jammed.  Common random numbers and a
    4-fold reflection of the sampled positions about the grid centre keep the
    comparison between neighbouring candidates noise-free.

    Returns (best_xy, grid_x, grid_y, objective_grid).
    """
    from .radio import path_loss, sample_cn

    if bounds_km is None:
        lo = bs_xy.min(axis=0)
        hi = bs_xy.max(axis=0)
        bounds_km = (lo[0], hi[0], lo[1], hi[1])
    x0, x1, y0, y1 = bounds_km
    gx = np.arange(x0, x1 + pitch_km / 2, pitch_km)
    gy = np.arange(y0, y1 + pitch_km / 2, pitch_km)

    base = max(mc_samples // 4, 1)
    from .traffic import draw_positions_in_coverage
    users = draw_positions_in_coverage(base, bs_xy, radius_km, rng)
    centre = 0.5 * np.array([x0 + x1, y0 + y1])
    reflected = [users,
                 np.column_stack([2 * centre[0] - users[:, 0], users[:, 1]]),
                 np.column_stack([users[:, 0], 2 * centre[1] - users[:, 1]]),
                 2 * centre - users]
    users = np.vstack(reflected)                      # (S, 2)
    s_total = users.shape[0]
    n_bs = bs_xy.shape[0]
    n = params.num_channels
    h_bs = sample_cn(rng, (n_bs, base, n))
    h_bs = np.concatenate([h_bs] * 4, axis=1)         # shared fading across reflections
    h_jam = sample_cn(rng, (base, n))
    h_jam = np.concatenate([h_jam] * 4, axis=0)

    d_bu = np.sqrt(((bs_xy[:, None, :] - users[None, :, :]) ** 2).sum(axis=2))
    loss_bu = path_loss(d_bu, params.bs_height_m, params.path_loss_exponent)
    scale_b = params.tx_power_to_noise * params.link_budget_gain
    sig = scale_b * loss_bu[:, :, None] * np.abs(h_bs) ** 2   # (B, S, N)
    jam_h2 = np.abs(h_jam) ** 2                               # (S, N)
    scale_j = params.jam_power_to_noise * params.link_budget_gain

    objective = np.empty((gx.size, gy.size))
    for ix, x in enumerate(gx):
        for iy, y in enumerate(gy):
            d_ju = np.sqrt(((users - np.array([x, y])) ** 2).sum(axis=1))
            loss_ju = path_loss(d_ju, params.jammer_height_m,
                                params.path_loss_exponent)
            jam = scale_j * loss_ju[:, None] * jam_h2         # (S, N)
            rates = np.log2(1.0 + sig / (jam[None, :, :] + 1.0))
            objective[ix, iy] = rates.sum(axis=2).max(axis=0).mean()
    best = np.unravel_index(np.argmin(objective), objective.shape)
    best_xy = np.array([gx[best[0]], gy[best[1]]])
    return best_xy, gx, gy, objective
