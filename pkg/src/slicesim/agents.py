"""Slicing agents: observations, pointer-network actors, critics, baselines.

Per cell and slot the agent emits a binary request/channel assignment matrix.
The learned policy is a pointer network: an LSTM encoder over the serving
requests, an LSTM decoder over the channels, and a reduced-parameter
attention head whose per-channel softmax points at the request that should
own the channel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (Adam, FeedForward, Linear, LSTMLayer, PointerAttention,
                 softmax, save_params, load_params, assign_params)
from .traffic import BaseStation

LOG_EPS = 1e-12


@dataclass(frozen=True)
class ObsLayout:
    """Fixed serialisation of one cell's observation.

    Order: last action rows, history rows, serving request info rows, queued
    request info rows.  Absent requests are zero padded so every vector has
    the same length regardless of load.
    """

    n_serving: int
    n_queue: int
    n_channels: int

    @property
    def per_bs_dim(self) -> int:
        return (2 * self.n_serving * self.n_channels
                + 4 * (self.n_serving + self.n_queue))

    @property
    def encoder_dim(self) -> int:
        return 2 * self.n_channels + 4

    @property
    def decoder_dim(self) -> int:
        return 5 * self.n_serving

    @property
    def init_dim(self) -> int:
        return 4 * self.n_queue


@dataclass
class BsObservation:
    """One cell's view: last action, latest history and request bookkeeping."""

    last_action: np.ndarray    # (n_serving, N)
    history: np.ndarray        # (n_serving, N) latest rates of serving users
    info_serving: np.ndarray   # (n_serving, 4) payload, min rate, lifetime, |R|
    info_queue: np.ndarray     # (n_queue, 4)
    n_r: int

    def flat(self) -> np.ndarray:
        return np.concatenate([self.last_action.ravel(), self.history.ravel(),
                               self.info_serving.ravel(), self.info_queue.ravel()])

    def encoder_inputs(self) -> np.ndarray:
        """(n_r, 2N+4) rows: last channels, user history, request info."""
        rows = [np.concatenate([self.last_action[k], self.history[k],
                                self.info_serving[k]])
                for k in range(self.n_r)]
        return np.array(rows) if rows else np.zeros((0, 0))

    def decoder_inputs(self) -> np.ndarray:
        """(N, 5*n_serving) rows: per-channel history column plus all request info."""
        info = self.info_serving.ravel()
        n = self.history.shape[1]
        out = np.empty((n, self.history.shape[0] + info.size))
        for c in range(n):
            out[c, :self.history.shape[0]] = self.history[:, c]
            out[c, self.history.shape[0]:] = info
        return out

    def init_input(self) -> np.ndarray:
        return self.info_queue.ravel()


def build_observation(bs: BaseStation, layout: ObsLayout) -> BsObservation:
    latest = bs.history.latest()
    act = np.zeros((layout.n_serving, layout.n_channels))
    hist = np.zeros((layout.n_serving, layout.n_channels))
    info_s = np.zeros((layout.n_serving, 4))
    for k, req in enumerate(bs.serving):
        chans = bs.last_channels.get(req.id)
        if chans is not None:
            act[k] = chans
        hist[k] = latest[req.user]
        info_s[k] = req.info_row()
    info_q = np.zeros((layout.n_queue, 4))
    for k, req in enumerate(bs.queue):
        info_q[k] = req.info_row()
    return BsObservation(act, hist, info_s, info_q, n_r=len(bs.serving))


def global_flat(observations: list[BsObservation]) -> np.ndarray:
    return np.concatenate([o.flat() for o in observations])


def pointer_decode(scores: np.ndarray, n_use: int) -> np.ndarray:
    """Turn a (n_r, N) score matrix into a binary assignment.

    Keeps the n_use channels with the largest column maxima and hands each to
    the request with the largest score on that column; ties break toward the
    lowest index.
    """
    n_r, n = scores.shape
    action = np.zeros((n_r, n), dtype=np.uint8)
    if n_r == 0 or n_use == 0:
        return action
    col_best = scores.argmax(axis=0)
    col_max = scores.max(axis=0)
    chosen = np.argsort(-col_max, kind="stable")[:n_use]
    for c in chosen:
        action[col_best[c], c] = 1
    return action


def max_rate_action(latest_hist: np.ndarray, n_use: int) -> np.ndarray:
    """Point each of the best-history channels at its best-history request."""
    return pointer_decode(latest_hist, n_use)


def random_action(n_r: int, n_channels: int, n_use: int,
                  rng: np.random.Generator) -> np.ndarray:
    action = np.zeros((n_r, n_channels), dtype=np.uint8)
    chans = rng.choice(n_channels, size=min(n_use, n_channels), replace=False)
    rows = rng.integers(0, n_r, size=chans.size)
    action[rows, chans] = 1
    return action


def fifo_action(latest_hist: np.ndarray, min_rates: np.ndarray, n_use: int) -> np.ndarray:
    """Earliest request first: give it its best-history channels until the
    estimated rate clears its minimum, then serve the next; leftover budget is
    dealt round-robin in arrival order."""
    n_r, n = latest_hist.shape
    action = np.zeros((n_r, n), dtype=np.uint8)
    budget = min(n_use, n)
    for k in range(n_r):
        if budget == 0:
            break
        got = 0.0
        order = np.argsort(-latest_hist[k], kind="stable")
        for c in order:
            if budget == 0 or got >= min_rates[k]:
                break
            if action[:, c].sum() == 0:
                action[k, c] = 1
                got += latest_hist[k, c]
                budget -= 1
    k = 0
    while budget > 0 and n_r > 0:
        order = np.argsort(-latest_hist[k % n_r], kind="stable")
        for c in order:
            if action[:, c].sum() == 0:
                action[k % n_r, c] = 1
                budget -= 1
                break
        k += 1
    return action


def hard_slicing_action(latest_hist: np.ndarray, min_rates: np.ndarray,
                        n_use: int) -> np.ndarray:
    """Split the channel budget across requests proportionally to their minimum
    rates (largest-remainder rounding), each taking its best-history channels."""
    n_r, n = latest_hist.shape
    action = np.zeros((n_r, n), dtype=np.uint8)
    if n_r == 0:
        return action
    budget = min(n_use, n)
    total = float(min_rates.sum())
    if total <= 0:
        quotas = np.full(n_r, budget / n_r)
    else:
        quotas = budget * min_rates / total
    counts = np.floor(quotas).astype(int)
    rem = budget - counts.sum()
    frac_order = np.argsort(-(quotas - counts), kind="stable")
    for i in range(rem):
        counts[frac_order[i % n_r]] += 1
    for k in range(n_r):
        order = np.argsort(-latest_hist[k], kind="stable")
        given = 0
        for c in order:
            if given == counts[k]:
                break
            if action[:, c].sum() == 0:
                action[k, c] = 1
                given += 1
    return action


@dataclass
class ExplorationSchedule:
    """Linear epsilon decay with a max-rate-vs-random split inside epsilon."""

    eps_start: float = 1.0
    eps_end: float = 0.005
    eps_max_rate: float = 0.1
    horizon: int = 10_000

    def epsilon(self, t: int) -> float:
        if t >= self.horizon:
            return self.eps_end
        frac = t / self.horizon
        return self.eps_start + (self.eps_end - self.eps_start) * frac

    def choose(self, t: int, rng: np.random.Generator) -> str:
        eps = self.epsilon(t)
        if rng.uniform() >= eps:
            return "actor"
        if rng.uniform() < self.eps_max_rate:
            return "max_rate"
        return "random"


class PointerActor:
    """Encoder/decoder pointer network emitting per-channel request pointers."""

    def __init__(self, layout: ObsLayout, hidden: int, rng: np.random.Generator):
        self.layout = layout
        self.hidden = hidden
        self.init_net = Linear(layout.init_dim, 2 * hidden, rng)
        self.encoder = LSTMLayer(layout.encoder_dim, hidden, rng)
        self.decoder = LSTMLayer(layout.decoder_dim, hidden, rng)
        self.attention = PointerAttention(hidden, rng)
        self._probs: np.ndarray | None = None

    def named_items(self, prefix: str = "actor.") -> list:
        return (self.init_net.named_items(prefix + "init.")
                + self.encoder.named_items(prefix + "enc.")
                + self.decoder.named_items(prefix + "dec.")
                + self.attention.named_items(prefix + "att."))

    def zero_grads(self) -> None:
        for net in (self.init_net, self.encoder, self.decoder, self.attention):
            net.zero_grads()

    def forward(self, obs: BsObservation) -> np.ndarray:
        """Returns (n_r, N) pointer probabilities; each column sums to 1."""
        if obs.n_r == 0:
            raise ValueError("pointer actor needs at least one serving request")
        s = self.init_net.forward(obs.init_input())
        h0, c0 = s[:self.hidden], s[self.hidden:]
        enc_out, h_t, c_t = self.encoder.forward(obs.encoder_inputs(), h0, c0)
        dec_out, _, _ = self.decoder.forward(obs.decoder_inputs(), h_t, c_t)
        scores = self.attention.forward(enc_out, dec_out)
        self._probs = softmax(scores, axis=0)
        return self._probs

    def backward_logprob(self, pairs: list[tuple[int, int]], coef: float) -> None:
        """Accumulate grads of coef * sum(log P[k, c]) over the chosen pairs.

        Must follow a forward pass on the same observation.  Uses the closed
        form d log softmax: one-hot minus the column distribution.
        """
        probs = self._probs
        dscores = np.zeros_like(probs)
        for k, c in pairs:
            dscores[:, c] -= coef * probs[:, c]
            dscores[k, c] += coef
        d_enc, d_dec = self.attention.backward(dscores)
        _, dh0_dec, dc0_dec = self.decoder.backward(d_dec)
        _, dh0_enc, dc0_enc = self.encoder.backward(d_enc, dh0_dec, dc0_dec)
        self.init_net.backward(np.concatenate([dh0_enc, dc0_enc]))

    def log_prob(self, pairs: list[tuple[int, int]]) -> float:
        p = self._probs
        return float(sum(np.log(max(p[k, c], LOG_EPS)) for k, c in pairs))

    def act(self, obs: BsObservation, n_use: int) -> np.ndarray:
        return pointer_decode(self.forward(obs), n_use)

    def clone_from(self, other: "PointerActor") -> None:
        for (_, p, _), (_, q, _) in zip(self.named_items(), other.named_items()):
            p[...] = q


def action_pairs(action: np.ndarray) -> list[tuple[int, int]]:
    ks, cs = np.nonzero(action)
    return list(zip(ks.tolist(), cs.tolist()))


class Critic:
    """State-value head over a flattened observation vector."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.net = FeedForward([in_dim, hidden, 1], rng)

    def value(self, x: np.ndarray) -> float:
        return float(self.net.forward(x)[0])

    def backward(self, coef: float) -> None:
        self.net.backward(np.array([coef]))

    def named_items(self, prefix: str = "critic.") -> list:
        return self.net.named_items(prefix)

    def zero_grads(self) -> None:
        self.net.zero_grads()


def critic_td(reward: float, gamma: float, value_next: float,
              value_prev: float) -> float:
    """One-step temporal-difference error delta = R + gamma*V' - V."""
    return reward + gamma * value_next - value_prev


@dataclass(eq=False)
class TrainSample:
    """One replayed transition, trainable once every in-flight request resolved."""

    obs_prev: list[BsObservation]
    obs_next: list[BsObservation] | None
    flat_prev: np.ndarray
    flat_next: np.ndarray | None
    pairs: list[list[tuple[int, int]]]    # executed (request, channel) per cell
    pending: set[int] = field(default_factory=set)
    reward: float = 0.0
    policy: int = 0                        # ensemble member that acted
    sigma: np.ndarray | None = None        # mixed strategy at record time


class ReplayBuffer:
    """Pending transitions graduate to a bounded ready pool on resolution."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.pending: list[TrainSample] = []
        self.ready: list[TrainSample] = []
        self.by_request: dict[int, list[TrainSample]] = {}

    def add(self, sample: TrainSample) -> None:
        if not sample.pending:
            self._graduate(sample)
            return
        self.pending.append(sample)
        for rid in sample.pending:
            self.by_request.setdefault(rid, []).append(sample)

    def resolve(self, request_id: int, reward: float) -> None:
        for sample in self.by_request.pop(request_id, []):
            sample.pending.discard(request_id)
            sample.reward += reward
            if not sample.pending:
                self.pending.remove(sample)
                self._graduate(sample)

    def _graduate(self, sample: TrainSample) -> None:
        self.ready.append(sample)
        if len(self.ready) > self.capacity:
            self.ready.pop(0)

    def draw(self, batch: int, rng: np.random.Generator) -> list[TrainSample]:
        idx = rng.integers(0, len(self.ready), size=batch)
        return [self.ready[i] for i in idx]


@dataclass
class TrainerConfig:
    gamma: float = 0.9
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch: int = 10
    period: int = 10
    replay_capacity: int = 1000
    reward_scale: float = 1.0
    actor_hidden: int = 32
    critic_hidden: int = 64


class SliceTrainer:
    """Actor-critic training over replayed, fully resolved transitions.

    mode "macc": one critic over the concatenated observation of every cell,
    trained on the sum reward of all in-flight requests.  mode "iac": one
    critic per cell over its own observation and local rewards.  The pointer
    actor is shared by every cell in both modes.
    """

    def __init__(self, layout: ObsLayout, n_bs: int, cfg: TrainerConfig,
                 rng: np.random.Generator, mode: str = "macc"):
        if mode not in ("macc", "iac"):
            raise ValueError("mode must be macc or iac")
        self.layout = layout
        self.n_bs = n_bs
        self.cfg = cfg
        self.mode = mode
        self.actor = PointerActor(layout, cfg.actor_hidden, rng)
        if mode == "macc":
            self.critics = [Critic(n_bs * layout.per_bs_dim, cfg.critic_hidden, rng)]
            self.buffers = [ReplayBuffer(cfg.replay_capacity)]
        else:
            self.critics = [Critic(layout.per_bs_dim, cfg.critic_hidden, rng)
                            for _ in range(n_bs)]
            self.buffers = [ReplayBuffer(cfg.replay_capacity) for _ in range(n_bs)]
        self.opt_actor = Adam(self.actor.named_items(), cfg.lr_actor)
        self.opt_critics = [Adam(c.named_items(f"critic{i}."), cfg.lr_critic)
                            for i, c in enumerate(self.critics)]
        self.open: list[TrainSample] = []
        self.updates = 0

    # ---- sample intake -------------------------------------------------
    #
    # A sample opens when the action is taken (so rewards of requests that
    # resolve in that very slot are credited to it) and closes at the next
    # observation, which supplies the successor state for the TD target.

    def begin(self, obs: list[BsObservation], pairs: list[list[tuple[int, int]]],
              inflight: list[set[int]]) -> None:
        """inflight: per-cell sets of request ids live when the action fired."""
        if self.mode == "macc":
            union = set().union(*inflight) if inflight else set()
            self.open = [TrainSample(
                obs_prev=obs, obs_next=None, flat_prev=global_flat(obs),
                flat_next=None, pairs=pairs, pending=union)]
        else:
            self.open = [TrainSample(
                obs_prev=[obs[b]], obs_next=None, flat_prev=obs[b].flat(),
                flat_next=None, pairs=[pairs[b]], pending=set(inflight[b]))
                for b in range(self.n_bs)]

    def complete(self, obs_next: list[BsObservation]) -> None:
        """Attach the successor observation and hand the sample to replay."""
        if not self.open:
            return
        if self.mode == "macc":
            sample = self.open[0]
            sample.obs_next = obs_next
            sample.flat_next = global_flat(obs_next)
            self.buffers[0].add(sample)
        else:
            for b, sample in enumerate(self.open):
                sample.obs_next = [obs_next[b]]
                sample.flat_next = obs_next[b].flat()
                self.buffers[b].add(sample)
        self.open = []

    def resolve(self, request_id: int, bs: int, reward: float) -> None:
        for sample in self.open:
            if request_id in sample.pending:
                sample.pending.discard(request_id)
                sample.reward += reward
        if self.mode == "macc":
            self.buffers[0].resolve(request_id, reward)
        else:
            self.buffers[bs].resolve(request_id, reward)

    # ---- updates -------------------------------------------------------

    def train_tick(self, t: int, rng: np.random.Generator) -> bool:
        if t % self.cfg.period != 0:
            return False
        trained = False
        for ci, buf in enumerate(self.buffers):
            if len(buf.ready) < self.cfg.batch:
                continue
            self._train_batch(buf.draw(self.cfg.batch, rng), ci)
            trained = True
        if trained:
            self.updates += 1
        return trained

    def _train_batch(self, batch: list[TrainSample], ci: int) -> None:
        critic = self.critics[ci]
        inv = 1.0 / len(batch)
        critic.zero_grads()
        self.actor.zero_grads()
        deltas = []
        for sample in batch:
            v_next = critic.value(sample.flat_next)
            v_prev = critic.value(sample.flat_prev)   # cached for backward
            delta = critic_td(sample.reward * self.cfg.reward_scale,
                              self.cfg.gamma, v_next, v_prev)
            critic.backward(-2.0 * delta * inv)       # descend delta^2, target frozen
            deltas.append(delta)
        self.opt_critics[ci].step()
        for sample, delta in zip(batch, deltas):
            for b, obs in enumerate(sample.obs_prev):
                if obs.n_r == 0 or not sample.pairs[b]:
                    continue
                self.actor.forward(obs)
                self.actor.backward_logprob(sample.pairs[b], -delta * inv)
        self.opt_actor.step()

    # ---- persistence ---------------------------------------------------

    def state_items(self) -> dict[str, np.ndarray]:
        items = {name: p for name, p, _ in self.actor.named_items()}
        for i, c in enumerate(self.critics):
            items.update({name: p for name, p, _ in c.named_items(f"critic{i}.")})
        return items

    def save(self, path) -> None:
        save_params(path, self.state_items())

    def load(self, path) -> None:
        loaded = load_params(path)
        assign_params(self.actor.named_items(), loaded)
        for i, c in enumerate(self.critics):
            assign_params(c.named_items(f"critic{i}."), loaded)
