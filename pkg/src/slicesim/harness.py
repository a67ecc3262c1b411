"""Experiment orchestration: scenario presets, the slot loop, metrics, compare.

A run walks fixed phases: victim training (skipped when a checkpoint is
loaded), jammer warm-up listening, jammer training (the victim may keep
adapting online), then a frozen test window that all reported metrics come
from.  Three independent random streams (environment, victim, jammer) keep
the pre-jamming trajectory bit-identical when only the jammer seed changes.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .radio import (RadioParams, FadingField, Geometry, evolve_fading,
                    bs_user_power, jam_user_power, channel_rate_table,
                    listen_powers, peak_rates)
from .traffic import (ArrivalProcess, BaseStation, ConstraintViolation,
                      RequestStatus, assign_arrivals, draw_positions_in_coverage,
                      move_users, validate_action)
from .agents import (BsObservation, Critic, ExplorationSchedule, ObsLayout,
                     PointerActor, ReplayBuffer, SliceTrainer, TrainSample,
                     TrainerConfig, action_pairs, build_observation,
                     fifo_action, global_flat, hard_slicing_action,
                     max_rate_action, pointer_decode, random_action)
from .jammer import (JammerAgent, JammerConfig, LastInterferenceJammer,
                     MaxRateJammer, channel_mask, top_k_channels)
from .game import (ListenDiffClassifier, NashEnsemble, UniformEnsemble,
                   classify_victim, correlation)
from .nn import Adam, save_params, load_params, assign_params

VICTIM_KINDS = ("macc", "iac", "random", "fifo", "hard_slicing", "max_rate",
                "nespe", "ape")
JAMMER_KINDS = ("ac", "last", "next", "max_rate", "nespe", "ape")


@dataclass
class EnsembleConfig:
    n_policies: int = 5
    n_classes: int = 5
    jam_policies: int = 2
    jam_classes: int = 2
    capacity: int = 20
    zeta: float = 0.1
    zeta_jam: float = 0.05
    floor: float = 0.05
    refresh_period: int = 1


@dataclass
class Scenario:
    """Everything a run needs; presets pin the published parameter set."""

    seed: int = 1
    jammer_seed: int | None = None
    victim: str = "macc"
    jammer: str | None = None
    t_train: int = 10_000
    t_test: int = 20_000
    t_jam_train: int = 5_000
    jam_warmup: int = 100
    ma_window: int = 500
    serve_slots: int = 4          # concurrent serving requests per cell
    queue_slots: int = 2          # waiting room per cell
    ch_budget: int = 8            # channels a cell may occupy at once
    cooldown: int = 2             # slots between a user's requests
    history_depth: int = 5
    step_km: float = 0.05
    bs_spacing_km: float = 3.0
    jammer_xy: tuple[float, float] = (0.0, 0.0)
    victim_checkpoint: str | None = None
    victim_adapt: bool = True
    radio: RadioParams = field(default_factory=RadioParams)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    jam_cfg: JammerConfig = field(default_factory=JammerConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)

    def validate(self) -> None:
        self.radio.validate()
        if self.victim not in VICTIM_KINDS:
            raise ValueError(f"unknown victim kind {self.victim!r}")
        if self.jammer is not None and self.jammer not in JAMMER_KINDS:
            raise ValueError(f"unknown jammer kind {self.jammer!r}")
        if self.serve_slots < 1 or self.queue_slots < 0 or self.ch_budget < 1:
            raise ValueError("serving/queue/channel budgets must be positive")
        if self.ch_budget > self.radio.num_channels:
            raise ValueError("channel budget exceeds the channel count")
        if min(self.t_train, self.t_test, self.t_jam_train, self.jam_warmup) < 0:
            raise ValueError("phase lengths must be non-negative")
        if self.jam_cfg.n_channels != self.radio.num_channels:
            raise ValueError("jammer channel count must match the radio")
        # classifier label spaces are fixed by the classifiers themselves
        if self.victim in ("nespe", "ape") and self.ensemble.n_classes != 5:
            raise ValueError("victim ensembles classify attackers into 5 classes")
        if self.jammer in ("nespe", "ape") and self.ensemble.jam_classes != 2:
            raise ValueError("jammer ensembles classify victims into 2 classes")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        for key, sub in (("radio", RadioParams), ("trainer", TrainerConfig),
                         ("jam_cfg", JammerConfig), ("ensemble", EnsembleConfig)):
            if key in data and isinstance(data[key], dict):
                data[key] = sub(**data[key])
        if "jammer_xy" in data and isinstance(data["jammer_xy"], list):
            data["jammer_xy"] = tuple(data["jammer_xy"])
        return cls(**data)

    @classmethod
    def desk(cls, **overrides) -> "Scenario":
        """Small-budget preset: a shrunk system (3 cells, 4 channels, 9 users)
        and re-tuned training hyper-parameters so runs fit a desktop budget."""
        sc = cls(
            t_train=40_000, t_test=5_000, t_jam_train=12_000,
            serve_slots=2, queue_slots=1, ch_budget=4,
            radio=RadioParams(num_channels=4, num_base_stations=3,
                              num_users=9, link_budget_gain=6e5),
            trainer=TrainerConfig(lr_actor=2e-3, lr_critic=6e-3,
                                  batch=16, period=1,
                                  actor_hidden=32, critic_hidden=64,
                                  reward_scale=0.05),
            jam_cfg=JammerConfig(n_channels=4, n_jam=2,
                                 lr_actor=1e-3, lr_critic=1e-3,
                                 reward_scale=0.25),
        )
        for k, v in overrides.items():
            setattr(sc, k, v)
        return sc

    @classmethod
    def paper(cls, **overrides) -> "Scenario":
        """Published operating point; slow learning rates, full horizons."""
        sc = cls(
            t_train=50_000, t_test=150_000, t_jam_train=10_000,
            radio=RadioParams(link_budget_gain=1e6),
            trainer=TrainerConfig(lr_actor=1e-6, lr_critic=1e-6,
                                  actor_hidden=70, critic_hidden=70,
                                  reward_scale=1.0),
            jam_cfg=JammerConfig(lr_actor=1e-5, lr_critic=1e-5),
        )
        for k, v in overrides.items():
            setattr(sc, k, v)
        return sc


def ring_layout(n_bs: int, spacing_km: float) -> np.ndarray:
    """One cell at the origin, the rest evenly spaced on a circle around it."""
    xy = np.zeros((n_bs, 2))
    for i in range(1, n_bs):
        ang = 2.0 * math.pi * (i - 1) / max(n_bs - 1, 1)
        xy[i] = spacing_km * np.array([math.cos(ang), math.sin(ang)])
    return xy


# --------------------------------------------------------------------------
# environment


@dataclass
class SlotResult:
    rates_by_bs: list[dict[int, float]]          # request id -> summed rate
    used: list[list[tuple[int, int, float]]]     # per cell (user, channel, rate)
    listen: np.ndarray
    tx_mask: np.ndarray


class SliceEnv:
    """Mutable world state plus the per-slot physics/traffic transitions."""

    def __init__(self, sc: Scenario, rng: np.random.Generator):
        sc.validate()
        self.sc = sc
        self.rng = rng
        p = sc.radio
        bs_xy = ring_layout(p.num_base_stations, sc.bs_spacing_km)
        user_xy = draw_positions_in_coverage(p.num_users, bs_xy,
                                             p.cell_radius_km, rng)
        self.geom = Geometry(bs_xy=bs_xy, user_xy=user_xy,
                             jammer_xy=np.array(sc.jammer_xy, dtype=float))
        self.field = FadingField.initial(p.num_base_stations, p.num_users,
                                         p.num_channels, p.rho, rng)
        self.stations = [BaseStation(b, sc.serve_slots, sc.queue_slots,
                                     p.num_users, p.num_channels,
                                     sc.history_depth)
                         for b in range(p.num_base_stations)]
        self.arrivals = ArrivalProcess(p.num_users, sc.cooldown)
        self.next_id = 0
        self.denied_this_slot = 0

    def begin_slot(self, t: int) -> None:
        p = self.sc.radio
        self.field = evolve_fading(self.field, self.rng)
        self.geom.user_xy = move_users(self.geom.user_xy, self.geom.bs_xy,
                                       p.cell_radius_km, self.sc.step_km,
                                       self.rng)
        self.arrivals.tick()
        _, denied, self.next_id = assign_arrivals(
            self.arrivals.ready_users(), self.stations, self.geom.user_xy,
            self.geom.bs_xy, p.cell_radius_km, self.rng, self.next_id, t,
            self.arrivals)
        self.denied_this_slot = len(denied)

    def observations(self, layout: ObsLayout) -> list[BsObservation]:
        return [build_observation(bs, layout) for bs in self.stations]

    def inflight_ids(self) -> list[set[int]]:
        return [{r.id for r in bs.all_requests()} for bs in self.stations]

    def apply(self, actions: list[np.ndarray | None],
              jam_mask: np.ndarray | None) -> SlotResult:
        p = self.sc.radio
        n = p.num_channels
        tx_mask = np.zeros((p.num_base_stations, n), dtype=np.uint8)
        for b, act in enumerate(actions):
            bs = self.stations[b]
            if act is None:
                bs.record_action(None)
                continue
            validate_action(act, bs.n_serving, self.sc.ch_budget)
            if act.shape[0] != len(bs.serving):
                raise ConstraintViolation("action rows must match serving requests")
            tx_mask[b] = (act.sum(axis=0) > 0).astype(np.uint8)
            bs.record_action(act)
        sig = bs_user_power(p, self.geom, self.field)
        jam_pow = None
        if jam_mask is not None:
            if int(jam_mask.sum()) != self.sc.jam_cfg.n_jam:
                raise ConstraintViolation("jam mask must cover exactly n_jam channels")
            jam_pow = jam_user_power(p, self.geom, self.field)
        table = channel_rate_table(sig, tx_mask, jam_pow, jam_mask)
        rates_by_bs: list[dict[int, float]] = []
        used: list[list[tuple[int, int, float]]] = []
        for b, act in enumerate(actions):
            bs = self.stations[b]
            got: dict[int, float] = {}
            pairs: list[tuple[int, int, float]] = []
            if act is not None:
                for row, req in enumerate(bs.serving):
                    chans = np.flatnonzero(act[row])
                    total = 0.0
                    for c in chans:
                        r = float(table[b, req.user, c])
                        pairs.append((req.user, int(c), r))
                        total += r
                    got[req.id] = total
            else:
                for req in bs.serving:
                    got[req.id] = 0.0
            rates_by_bs.append(got)
            used.append(pairs)
        listen = listen_powers(p, self.geom, self.field, tx_mask)
        return SlotResult(rates_by_bs=rates_by_bs, used=used, listen=listen,
                          tx_mask=tx_mask)

    def peak_rate_oracle(self) -> np.ndarray:
        return peak_rates(bs_user_power(self.sc.radio, self.geom, self.field))

    def finish_slot(self, result: SlotResult) -> list[tuple]:
        """Request bookkeeping after rates: completions, promotion, history."""
        done = []
        for b, bs in enumerate(self.stations):
            for req, reward in bs.step_requests(result.rates_by_bs[b]):
                self.arrivals.mark_resolved(req.user)
                done.append((req, reward))
        for b, bs in enumerate(self.stations):
            for user, chan, rate in result.used[b]:
                bs.history.append(user, chan, rate)
        return done

    def check_invariants(self) -> None:
        for bs in self.stations:
            if len(bs.serving) > bs.n_serving:
                raise ConstraintViolation("serving slots over capacity")
            if len(bs.queue) > bs.n_queue:
                raise ConstraintViolation("queue over capacity")
            for req in bs.serving:
                if req.status is not RequestStatus.SERVING:
                    raise ConstraintViolation("non-serving request in serving list")
            for req in bs.queue:
                if req.status is not RequestStatus.QUEUED:
                    raise ConstraintViolation("non-queued request in queue")
            for req in bs.all_requests():
                if req.lifetime < 0 or req.payload < 0:
                    raise ConstraintViolation("negative lifetime or payload")


# --------------------------------------------------------------------------
# victim policies


class StaticVictim:
    """Non-learning baselines sharing the exploration-free act interface."""

    def __init__(self, kind: str, layout: ObsLayout, n_use: int,
                 rng: np.random.Generator):
        self.kind = kind
        self.layout = layout
        self.n_use = n_use
        self.rng = rng
        self.training = False

    def act(self, obs_list: list[BsObservation], t: int
            ) -> tuple[list[np.ndarray | None], list[list[tuple[int, int]]]]:
        actions: list[np.ndarray | None] = []
        pairs = []
        for obs in obs_list:
            if obs.n_r == 0:
                actions.append(None)
                pairs.append([])
                continue
            hist = obs.history[:obs.n_r]
            mins = obs.info_serving[:obs.n_r, 1]
            if self.kind == "random":
                act = random_action(obs.n_r, self.layout.n_channels, self.n_use,
                                    self.rng)
            elif self.kind == "fifo":
                act = fifo_action(hist, mins, self.n_use)
            elif self.kind == "hard_slicing":
                act = hard_slicing_action(hist, mins, self.n_use)
            else:
                act = max_rate_action(hist, self.n_use)
            actions.append(act)
            pairs.append(action_pairs(act))
        return actions, pairs

    def begin(self, obs, pairs, inflight) -> None:
        pass

    def complete(self, obs_next) -> None:
        pass

    def resolve(self, request_id: int, bs: int, reward: float) -> None:
        pass

    def post_slot(self, report) -> None:
        pass

    def train_tick(self, t: int, rng: np.random.Generator) -> None:
        pass

    def set_training(self, flag: bool) -> None:
        pass

    def save(self, path) -> None:
        pass


class LearnedVictim:
    """Single-policy actor-critic victim (centralised or independent critic)."""

    def __init__(self, layout: ObsLayout, n_bs: int, n_use: int,
                 cfg: TrainerConfig, schedule: ExplorationSchedule,
                 rng: np.random.Generator, mode: str):
        self.trainer = SliceTrainer(layout, n_bs, cfg, rng, mode=mode)
        self.schedule = schedule
        self.layout = layout
        self.n_use = n_use
        self.rng = rng
        self.training = True

    def act(self, obs_list, t):
        actions, pairs = [], []
        for obs in obs_list:
            if obs.n_r == 0:
                actions.append(None)
                pairs.append([])
                continue
            branch = self.schedule.choose(t, self.rng)
            if branch == "actor":
                act = self.trainer.actor.act(obs, self.n_use)
            elif branch == "max_rate":
                act = max_rate_action(obs.history[:obs.n_r], self.n_use)
            else:
                act = random_action(obs.n_r, self.layout.n_channels, self.n_use,
                                    self.rng)
            actions.append(act)
            pairs.append(action_pairs(act))
        return actions, pairs

    def begin(self, obs, pairs, inflight) -> None:
        if self.training:
            self.trainer.begin(obs, pairs, inflight)

    def complete(self, obs_next) -> None:
        self.trainer.complete(obs_next)

    def resolve(self, request_id: int, bs: int, reward: float) -> None:
        self.trainer.resolve(request_id, bs, reward)

    def post_slot(self, report) -> None:
        pass

    def train_tick(self, t: int, rng: np.random.Generator) -> None:
        if self.training:
            self.trainer.train_tick(t, rng)

    def set_training(self, flag: bool) -> None:
        self.training = flag

    def save(self, path) -> None:
        self.trainer.save(path)

    def load(self, path) -> None:
        self.trainer.load(path)


@dataclass
class SlotReport:
    """Post-slot feedback the ensemble layers key their bookkeeping on."""

    used_entries: list[list[np.ndarray]]
    used_rates: list[np.ndarray]
    bs_rewards: np.ndarray


class EnsembleVictim:
    """Policy-ensemble victim: maximin (nespe) or uniform (ape) selection.

    Shares one centralised critic; each member is a full pointer actor.  The
    nespe trainer updates every member on every replayed record with the
    correlation-penalised dual reward; ape keeps per-member buffers and raw
    rewards.
    """

    def __init__(self, layout: ObsLayout, n_bs: int, n_use: int,
                 cfg: TrainerConfig, ens: EnsembleConfig,
                 schedule: ExplorationSchedule, rng: np.random.Generator,
                 kind: str):
        self.layout = layout
        self.n_bs = n_bs
        self.n_use = n_use
        self.cfg = cfg
        self.ens = ens
        self.schedule = schedule
        self.rng = rng
        self.kind = kind
        e = ens.n_policies
        self.actors = [PointerActor(layout, cfg.actor_hidden, rng)
                       for _ in range(e)]
        self.opt_actors = [Adam(a.named_items(f"actor{i}."), cfg.lr_actor)
                           for i, a in enumerate(self.actors)]
        self.critic = Critic(n_bs * layout.per_bs_dim, cfg.critic_hidden, rng)
        self.opt_critic = Adam(self.critic.named_items(), cfg.lr_critic)
        if kind == "nespe":
            self.selector = NashEnsemble(e, ens.n_classes, ens.capacity,
                                         ens.zeta, ens.floor)
            self.buffers = [ReplayBuffer(cfg.replay_capacity)]
        else:
            self.selector = UniformEnsemble(e)
            self.buffers = [ReplayBuffer(cfg.replay_capacity) for _ in range(e)]
        self.current = 0
        self.training = True
        self._slot_mark = -1
        self._open: TrainSample | None = None

    # -- selection and acting -------------------------------------------

    def _maybe_select(self, t: int) -> None:
        if t == self._slot_mark:
            return
        self._slot_mark = t
        if self.kind == "nespe" and t % self.ens.refresh_period == 0:
            self.selector.refresh()
        self.current = self.selector.select(self.rng)

    def act(self, obs_list, t):
        self._maybe_select(t)
        actor = self.actors[self.current]
        actions, pairs = [], []
        for obs in obs_list:
            if obs.n_r == 0:
                actions.append(None)
                pairs.append([])
                continue
            branch = self.schedule.choose(t, self.rng)
            if branch == "actor":
                act = actor.act(obs, self.n_use)
            elif branch == "max_rate":
                act = max_rate_action(obs.history[:obs.n_r], self.n_use)
            else:
                act = random_action(obs.n_r, self.layout.n_channels, self.n_use,
                                    self.rng)
            actions.append(act)
            pairs.append(action_pairs(act))
        return actions, pairs

    def begin(self, obs, pairs, inflight) -> None:
        if not self.training:
            return
        union = set().union(*inflight) if inflight else set()
        self._open = TrainSample(
            obs_prev=obs, obs_next=None, flat_prev=global_flat(obs),
            flat_next=None, pairs=pairs, pending=union, policy=self.current,
            sigma=np.array(self.selector.sigma, dtype=float))

    def complete(self, obs_next) -> None:
        if self._open is None:
            return
        sample = self._open
        self._open = None
        sample.obs_next = obs_next
        sample.flat_next = global_flat(obs_next)
        if self.kind == "nespe":
            self.buffers[0].add(sample)
        else:
            self.buffers[sample.policy].add(sample)

    def resolve(self, request_id: int, bs: int, reward: float) -> None:
        if self._open is not None and request_id in self._open.pending:
            self._open.pending.discard(request_id)
            self._open.reward += reward
        for buf in self.buffers:
            buf.resolve(request_id, reward)

    def post_slot(self, report: SlotReport) -> None:
        for b in range(self.n_bs):
            label = classify_victim(report.used_entries[b], report.used_rates[b])
            self.selector.observe(self.current, label, float(report.bs_rewards[b]))

    # -- training ----------------------------------------------------------

    def train_tick(self, t: int, rng: np.random.Generator) -> None:
        if not self.training or t % self.cfg.period != 0:
            return
        if self.kind == "nespe":
            buf = self.buffers[0]
            if len(buf.ready) >= self.cfg.batch:
                self._train_nespe(buf.draw(self.cfg.batch, rng))
        else:
            for e, buf in enumerate(self.buffers):
                if len(buf.ready) >= self.cfg.batch:
                    self._train_ape(e, buf.draw(self.cfg.batch, rng))

    def _critic_pass(self, batch) -> list[tuple[float, float]]:
        self.critic.zero_grads()
        inv = 1.0 / len(batch)
        vals = []
        for s in batch:
            v_next = self.critic.value(s.flat_next)
            v_prev = self.critic.value(s.flat_prev)
            delta = (s.reward * self.cfg.reward_scale
                     + self.cfg.gamma * v_next - v_prev)
            self.critic.backward(-2.0 * delta * inv)
            vals.append((v_next, v_prev))
        self.opt_critic.step()
        return vals

    def _member_actions(self, sample) -> list[np.ndarray]:
        """Greedy flattened composite action of every member on the record."""
        flats = []
        for actor in self.actors:
            parts = []
            for obs in sample.obs_prev:
                if obs.n_r == 0:
                    continue
                parts.append(pointer_decode(actor.forward(obs), self.n_use).ravel())
            flats.append(np.concatenate(parts) if parts
                         else np.zeros(1, dtype=np.uint8))
        return flats

    def _train_nespe(self, batch) -> None:
        e_total = len(self.actors)
        inv = 1.0 / len(batch)
        vals = self._critic_pass(batch)
        for a in self.actors:
            a.zero_grads()
        for sample, (v_next, v_prev) in zip(batch, vals):
            flats = self._member_actions(sample)
            corr = np.zeros((e_total, e_total))
            for i in range(e_total):
                for j in range(i + 1, e_total):
                    corr[i, j] = corr[j, i] = correlation(flats[i], flats[j])
            sigma = sample.sigma
            for e in range(e_total):
                penalty = sum(sigma[o] * corr[e, o]
                              for o in range(e_total) if o != e)
                reward = sample.reward - self.ens.zeta * penalty
                delta = (reward * self.cfg.reward_scale
                         + self.cfg.gamma * v_next - v_prev)
                for b, obs in enumerate(sample.obs_prev):
                    if obs.n_r == 0 or not sample.pairs[b]:
                        continue
                    self.actors[e].forward(obs)
                    self.actors[e].backward_logprob(sample.pairs[b], -delta * inv)
        for opt in self.opt_actors:
            opt.step()

    def _train_ape(self, e: int, batch) -> None:
        inv = 1.0 / len(batch)
        vals = self._critic_pass(batch)
        actor = self.actors[e]
        actor.zero_grads()
        for sample, (v_next, v_prev) in zip(batch, vals):
            delta = (sample.reward * self.cfg.reward_scale
                     + self.cfg.gamma * v_next - v_prev)
            for b, obs in enumerate(sample.obs_prev):
                if obs.n_r == 0 or not sample.pairs[b]:
                    continue
                actor.forward(obs)
                actor.backward_logprob(sample.pairs[b], -delta * inv)
        self.opt_actors[e].step()

    # -- persistence ---------------------------------------------------------

    def set_training(self, flag: bool) -> None:
        self.training = flag

    def load_single(self, path) -> None:
        """Seed every member (and the critic) from a single-policy checkpoint."""
        loaded = load_params(path)
        for actor in self.actors:
            assign_params(actor.named_items(), loaded)
        assign_params(self.critic.named_items("critic0."), loaded)

    def save(self, path) -> None:
        items = {}
        for i, a in enumerate(self.actors):
            items.update({n: p for n, p, _ in a.named_items(f"actor{i}.")})
        items.update({n: p for n, p, _ in self.critic.named_items()})
        save_params(path, items)


# --------------------------------------------------------------------------
# jammer ensembles


class EnsembleJammer:
    """Nash or uniform ensemble over jamming actor networks."""

    def __init__(self, cfg: JammerConfig, ens: EnsembleConfig,
                 rng: np.random.Generator, kind: str):
        from .nn import FeedForward
        cfg.validate()
        self.cfg = cfg
        self.ens = ens
        self.rng = rng
        self.kind = kind
        in_dim = cfg.period * cfg.n_channels
        e = ens.jam_policies
        self.actors = [FeedForward([in_dim, cfg.hidden, cfg.n_channels], rng,
                                   out_activation="sigmoid") for _ in range(e)]
        self.opt_actors = [Adam(a.named_items(f"jactor{i}."), cfg.lr_actor)
                           for i, a in enumerate(self.actors)]
        self.critic = FeedForward([in_dim, cfg.hidden, 1], rng)
        self.opt_critic = Adam(self.critic.named_items("jcritic."), cfg.lr_critic)
        if kind == "nespe":
            self.selector = NashEnsemble(e, ens.jam_classes, ens.capacity,
                                         ens.zeta_jam, ens.floor)
            self.buffers: list[list] = [[]]
        else:
            self.selector = UniformEnsemble(e)
            self.buffers = [[] for _ in range(e)]
        self.classifier = ListenDiffClassifier(ens.capacity)
        self.helper = JammerAgent(cfg, rng, mode="ac")   # reuse window/beta plumbing
        self.training = True
        self.phases = 0
        self.current = 0
        self._pending: dict | None = None

    def observe_listen(self, t: int, listen: np.ndarray) -> None:
        self.helper.observe_listen(t, listen)

    def note_baseline_pair(self, t: int) -> None:
        self.helper.note_baseline_pair(t)

    def epsilon(self) -> float:
        cfg = self.cfg
        if not self.training or self.phases >= cfg.eps_horizon:
            return cfg.eps_end
        frac = self.phases / cfg.eps_horizon
        return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac

    def decide(self, t: int) -> np.ndarray:
        cfg = self.cfg
        if self.kind == "nespe":
            self.selector.refresh()
        self.current = self.selector.select(self.rng)
        obs = self.helper.build_observation(t)
        explore = self.rng.uniform() < self.epsilon()
        if obs is None or explore:
            chans = self.rng.choice(cfg.n_channels, size=cfg.n_jam, replace=False)
            mask = channel_mask(chans, cfg.n_channels)
        else:
            probs = self.actors[self.current].forward(obs)
            mask = channel_mask(top_k_channels(probs, cfg.n_jam), cfg.n_channels)
        self.helper.actions[t] = mask
        if obs is not None and self.helper.prev_obs is not None:
            self._pending = {"obs_prev": self.helper.prev_obs, "obs_cur": obs,
                             "action": mask, "policy": self.current,
                             "sigma": np.array(self.selector.sigma, dtype=float)}
        else:
            self._pending = None
        if obs is not None:
            self.helper.prev_obs = obs
        self.phases += 1
        return mask

    def finalize(self, t: int) -> float | None:
        from .jammer import interpolate_target, jam_reward
        jam_t = t - 1
        h = self.helper
        if jam_t not in h.actions:
            return None
        prev_l = h.listens.get(jam_t - 1)
        next_l = h.listens.get(jam_t + 1)
        if prev_l is None or next_l is None:
            return None
        h.beta_est.add_jam_diff(prev_l, next_l)
        target = interpolate_target(prev_l, next_l, h.beta_est.beta)
        reward = jam_reward(h.actions[jam_t], target)
        diff_sum = float(np.abs(next_l - prev_l).sum())
        label = self.classifier.classify(diff_sum)
        self.selector.observe(self.current, label, reward)
        if self._pending is not None:
            rec = dict(self._pending, reward=reward)
            pool = self.buffers[0] if self.kind == "nespe" else self.buffers[rec["policy"]]
            pool.append(rec)
            if len(pool) > self.cfg.replay_capacity:
                pool.pop(0)
            self._pending = None
            if self.training:
                self._train()
        return reward

    def _train(self) -> None:
        cfg = self.cfg
        pools = self.buffers if self.kind == "ape" else [self.buffers[0]]
        for pi, pool in enumerate(pools):
            if len(pool) < cfg.batch:
                continue
            idx = self.rng.integers(0, len(pool), size=cfg.batch)
            batch = [pool[i] for i in idx]
            inv = 1.0 / cfg.batch
            self.critic.zero_grads()
            vals = []
            for s in batch:
                v_next = float(self.critic.forward(s["obs_cur"])[0])
                v_prev = float(self.critic.forward(s["obs_prev"])[0])
                delta = (s["reward"] * cfg.reward_scale + cfg.gamma * v_next
                         - v_prev)
                self.critic.backward(np.array([-2.0 * delta * inv]))
                vals.append((v_next, v_prev))
            self.opt_critic.step()
            members = (range(len(self.actors)) if self.kind == "nespe"
                       else [pi])
            for a in self.actors:
                a.zero_grads()
            for s, (v_next, v_prev) in zip(batch, vals):
                masks = [channel_mask(
                    top_k_channels(a.forward(s["obs_cur"]), cfg.n_jam),
                    cfg.n_channels) for a in self.actors]
                for e in members:
                    if self.kind == "nespe":
                        penalty = sum(s["sigma"][o] * correlation(masks[e], masks[o])
                                      for o in range(len(self.actors)) if o != e)
                        reward = s["reward"] - self.ens.zeta_jam * penalty
                    else:
                        reward = s["reward"]
                    delta = (reward * cfg.reward_scale + cfg.gamma * v_next
                             - v_prev)
                    probs = self.actors[e].forward(s["obs_cur"])
                    chosen = s["action"].astype(bool)
                    dp = np.zeros_like(probs)
                    dp[chosen] = -delta * inv / np.maximum(probs[chosen], 1e-12)
                    self.actors[e].backward(dp)
            for e in members:
                self.opt_actors[e].step()


# --------------------------------------------------------------------------
# metrics


class MetricsRecorder:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.slot_rows: list[tuple] = []
        self.request_rows: list[tuple] = []

    def record_slot(self, t: int, phase: str, reward: float, succ: int,
                    fail: int, denied: int, jam: int) -> None:
        self.slot_rows.append((t, phase, reward, succ, fail, denied, jam))

    def record_request(self, t: int, bs: int, user: int, payload: float,
                       outcome: str) -> None:
        self.request_rows.append((t, bs, user, payload, outcome))

    def summary(self, test_start: int, wall_s: float) -> dict:
        rewards = [r[2] for r in self.slot_rows if r[0] >= test_start]
        succ = sum(1 for r in self.request_rows
                   if r[0] >= test_start and r[4] == "success")
        fail = sum(1 for r in self.request_rows
                   if r[0] >= test_start and r[4] == "failure")
        total = succ + fail
        return {
            "victim": self.sc.victim,
            "jammer": self.sc.jammer,
            "seed": self.sc.seed,
            "test_start": test_start,
            "test_slots": len(rewards),
            "avg_reward": float(np.mean(rewards)) if rewards else 0.0,
            "completion_ratio": succ / total if total else 0.0,
            "successes": succ,
            "failures": fail,
            "denials": sum(1 for r in self.request_rows
                           if r[0] >= test_start and r[4] == "denied"),
            "wall_s": wall_s,
        }

    def write(self, out_dir: str, summary: dict) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "slots.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "phase", "reward", "successes", "failures",
                        "denied", "jamming"])
            w.writerows(self.slot_rows)
        with open(os.path.join(out_dir, "requests.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "bs", "user", "payload", "outcome"])
            w.writerows(self.request_rows)
        with open(os.path.join(out_dir, "summary.json"), "w") as f:
            json.dump(summary, f, indent=2)


def moving_average(values, window: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size < window:
        return v.copy()
    kernel = np.ones(window) / window
    return np.convolve(v, kernel, mode="valid")


# --------------------------------------------------------------------------
# the experiment loop


def _make_victim(sc: Scenario, layout: ObsLayout, rng: np.random.Generator):
    n_use = min(sc.ch_budget, sc.radio.num_channels)
    # a loaded checkpoint skips the training phase, so exploration starts spent
    horizon = 0 if sc.victim_checkpoint else sc.t_train
    schedule = ExplorationSchedule(horizon=horizon)
    if sc.victim in ("random", "fifo", "hard_slicing", "max_rate"):
        return StaticVictim(sc.victim, layout, n_use, rng)
    if sc.victim in ("macc", "iac"):
        v = LearnedVictim(layout, sc.radio.num_base_stations, n_use, sc.trainer,
                          schedule, rng, mode=sc.victim)
        if sc.victim_checkpoint:
            v.load(sc.victim_checkpoint)
        return v
    v = EnsembleVictim(layout, sc.radio.num_base_stations, n_use, sc.trainer,
                       sc.ensemble, schedule, rng, kind=sc.victim)
    if sc.victim_checkpoint:
        v.load_single(sc.victim_checkpoint)
    return v


def _make_jammer(sc: Scenario, rng: np.random.Generator, env: SliceEnv):
    cfg = dataclasses.replace(sc.jam_cfg)
    if cfg.eps_horizon <= 0:
        cfg.eps_horizon = max(sc.t_jam_train // cfg.period, 1)
    if sc.jammer == "ac":
        return JammerAgent(cfg, rng, mode="ac")
    if sc.jammer == "next":
        return JammerAgent(cfg, rng, mode="next")
    if sc.jammer == "last":
        return LastInterferenceJammer(cfg, rng)
    if sc.jammer == "max_rate":
        return MaxRateJammer(cfg, rng, oracle=env.peak_rate_oracle)
    return EnsembleJammer(cfg, sc.ensemble, rng, kind=sc.jammer)


@dataclass
class PhasePlan:
    train_end: int
    warm_end: int
    jam_end: int
    total: int

    def of(self, t: int) -> str:
        if t < self.train_end:
            return "train"
        if t < self.warm_end:
            return "warmup"
        if t < self.jam_end:
            return "jam_train"
        return "test"


def plan_phases(sc: Scenario) -> PhasePlan:
    train = 0 if sc.victim_checkpoint else sc.t_train
    if sc.jammer is None:
        return PhasePlan(train, train, train, train + sc.t_test)
    warm = train + sc.jam_warmup
    jam = warm + sc.t_jam_train
    return PhasePlan(train, warm, jam, jam + sc.t_test)


def run_experiment(sc: Scenario, out_dir: str | None = None) -> dict:
    """Execute the full phase plan and return the summary dict.

    Writes slots.csv, requests.csv, summary.json and victim/jammer
    checkpoints under out_dir when given.
    """
    sc.validate()
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    ss = np.random.SeedSequence(sc.seed)
    env_ss, agent_ss = ss.spawn(2)
    rng_env = np.random.default_rng(env_ss)
    rng_agent = np.random.default_rng(agent_ss)
    jam_seed = sc.jammer_seed if sc.jammer_seed is not None else sc.seed + 100_003
    rng_jam = np.random.default_rng(np.random.SeedSequence(jam_seed))

    layout = ObsLayout(sc.serve_slots, sc.queue_slots, sc.radio.num_channels)
    env = SliceEnv(sc, rng_env)
    victim = _make_victim(sc, layout, rng_agent)
    jammer = _make_jammer(sc, rng_jam, env) if sc.jammer else None
    phases = plan_phases(sc)
    rec = MetricsRecorder(sc)

    for t in range(phases.total):
        phase = phases.of(t)
        if phase == "test":
            victim.set_training(False)
            if jammer is not None:
                jammer.training = False
        elif phase in ("warmup", "jam_train"):
            victim.set_training(sc.victim_adapt)

        env.begin_slot(t)
        obs = env.observations(layout)
        victim.complete(obs)
        actions, pairs = victim.act(obs, t)
        victim.begin(obs, pairs, env.inflight_ids())

        jam_mask = None
        jam_slot = False
        if jammer is not None and t >= phases.train_end:
            offset = t - phases.warm_end
            jam_slot = offset >= 0 and offset % sc.jam_cfg.period == sc.jam_cfg.period - 1
            if jam_slot:
                jam_mask = jammer.decide(t)

        result = env.apply(actions, jam_mask)

        if jammer is not None and t >= phases.train_end and not jam_slot:
            jammer.observe_listen(t, result.listen)
            jammer.finalize(t)
            if phase == "warmup":
                jammer.note_baseline_pair(t - 1)

        report_entries = []
        report_rates = []
        for b in range(sc.radio.num_base_stations):
            entries = [env.stations[b].history.entries(u, c)
                       for u, c, _ in result.used[b]]
            report_entries.append(entries)
            report_rates.append(np.array([r for _, _, r in result.used[b]]))

        done = env.finish_slot(result)
        bs_rewards = np.zeros(sc.radio.num_base_stations)
        succ = fail = 0
        slot_reward = 0.0
        for req, reward in done:
            slot_reward += reward
            bs_rewards[req.bs] += reward
            outcome = "success" if reward > 0 else "failure"
            if reward > 0:
                succ += 1
            else:
                fail += 1
            rec.record_request(t, req.bs, req.user, req.initial_payload, outcome)
            victim.resolve(req.id, req.bs, reward)
        for _ in range(env.denied_this_slot):
            rec.record_request(t, -1, -1, 0.0, "denied")

        victim.post_slot(SlotReport(report_entries, report_rates, bs_rewards))
        victim.train_tick(t, rng_agent)
        env.check_invariants()
        rec.record_slot(t, phase, slot_reward, succ, fail,
                        env.denied_this_slot, int(jam_slot))

        if out_dir and t + 1 == phases.train_end and hasattr(victim, "save"):
            victim.save(os.path.join(out_dir, "victim.npz"))

    wall = time.perf_counter() - t0
    summary = rec.summary(phases.jam_end, wall)
    summary["phases"] = dataclasses.asdict(phases)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        if hasattr(victim, "save") and not isinstance(victim, StaticVictim):
            victim.save(os.path.join(out_dir, "victim_final.npz"))
        rec.write(out_dir, summary)
    summary["_recorder"] = rec
    return summary


# --------------------------------------------------------------------------
# comparison tables


SLICING_REFERENCE = {
    # published per-slot sum rewards / completion ratios for the jammer sweep
    None: (19.47, 0.9333),
    "last": (14.82, 0.8236),
    "next": (11.67, 0.8134),
    "max_rate": (11.03, 0.7607),
    "ac": (9.16, 0.7389),
}

ENSEMBLE_REFERENCE = {
    # published victim rewards: single policy vs nespe victim under one jammer
    ("macc", "ac"): 10.09,
    ("nespe", "ac"): 14.96,
}


def compare_table(summaries: list[dict], table: str = "slicing") -> str:
    """Aligned text table of run summaries next to the published reference."""
    lines = []
    if table == "slicing":
        lines.append(f"{'jammer':<12}{'reward':>10}{'completion':>12}"
                     f"{'ref reward':>12}{'ref compl':>11}")
        for s in summaries:
            ref = SLICING_REFERENCE.get(s.get("jammer"))
            ref_r = f"{ref[0]:.2f}" if ref else "-"
            ref_c = f"{ref[1]:.2%}" if ref else "-"
            lines.append(f"{str(s.get('jammer')):<12}{s['avg_reward']:>10.2f}"
                         f"{s['completion_ratio']:>12.2%}{ref_r:>12}{ref_c:>11}")
    else:
        lines.append(f"{'victim':<10}{'jammer':<10}{'reward':>10}{'ref':>8}")
        for s in summaries:
            ref = ENSEMBLE_REFERENCE.get((s.get("victim"), s.get("jammer")))
            ref_s = f"{ref:.2f}" if ref else "-"
            lines.append(f"{s.get('victim'):<10}{str(s.get('jammer')):<10}"
                         f"{s['avg_reward']:>10.2f}{ref_s:>8}")
    return "\n".join(lines)
