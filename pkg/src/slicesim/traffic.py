"""Request lifecycle, per-cell queues, user mobility and rate history."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .radio import coverage_mask


class RequestStatus(Enum):
    QUEUED = "queued"
    SERVING = "serving"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass
class Request:
    """One user transmission request.

    payload/lifetime are the remaining amounts and shrink slot by slot;
    the reward on completion is +initial_payload, on failure -initial_payload.
    """

    id: int
    user: int
    payload: float
    min_rate: float
    lifetime: float
    initial_payload: float
    status: RequestStatus = RequestStatus.QUEUED
    bs: int = -1
    arrived_t: int = -1

    def info_row(self) -> np.ndarray:
        return np.array([self.payload, self.min_rate, self.lifetime,
                         self.initial_payload])


def draw_request(rng: np.random.Generator, user: int, req_id: int, t: int) -> Request:
    """New request: payload ~ U(1,2), min rate ~ U(0.8,1), lifetime = p/m + U(2,4)."""
    payload = rng.uniform(1.0, 2.0)
    min_rate = rng.uniform(0.8, 1.0)
    lifetime = payload / min_rate + rng.uniform(2.0, 4.0)
    return Request(id=req_id, user=user, payload=payload, min_rate=min_rate,
                   lifetime=lifetime, initial_payload=payload, arrived_t=t)


class RateHistory:
    """Bounded per-(user, channel) queues of experienced rates.

    ``values[u, c, -1]`` is the newest entry; unused slots stay 0 and
    ``counts`` tracks how many entries are real.
    """

    def __init__(self, n_users: int, n_channels: int, depth: int = 5):
        if depth < 1:
            raise ValueError("history depth must be >= 1")
        self.depth = depth
        self.values = np.zeros((n_users, n_channels, depth))
        self.counts = np.zeros((n_users, n_channels), dtype=int)

    def append(self, user: int, channel: int, rate: float) -> None:
        q = self.values[user, channel]
        q[:-1] = q[1:]
        q[-1] = rate
        self.counts[user, channel] = min(self.counts[user, channel] + 1, self.depth)

    def latest(self) -> np.ndarray:
        """Newest rate per (user, channel); 0 where nothing was recorded."""
        return self.values[:, :, -1].copy()

    def entries(self, user: int, channel: int) -> np.ndarray:
        """Valid entries, oldest to newest."""
        n = self.counts[user, channel]
        if n == 0:
            return np.empty(0)
        return self.values[user, channel, self.depth - n:].copy()


class BaseStation:
    """Serving slots (up to n_serving) and a FIFO queue (up to n_queue)."""

    def __init__(self, index: int, n_serving: int, n_queue: int,
                 n_users: int, n_channels: int, history_depth: int = 5):
        self.index = index
        self.n_serving = n_serving
        self.n_queue = n_queue
        self.serving: list[Request] = []
        self.queue: list[Request] = []
        self.history = RateHistory(n_users, n_channels, history_depth)
        # channels each serving request got last slot, by request id
        self.last_channels: dict[int, np.ndarray] = {}
        self.n_channels = n_channels

    def has_room(self) -> bool:
        return len(self.serving) < self.n_serving or len(self.queue) < self.n_queue

    def admit(self, req: Request) -> None:
        if len(self.serving) < self.n_serving:
            req.status = RequestStatus.SERVING
            self.serving.append(req)
        elif len(self.queue) < self.n_queue:
            req.status = RequestStatus.QUEUED
            self.queue.append(req)
        else:
            raise ValueError("admit called on a full base station")
        req.bs = self.index

    def step_requests(self, rates: dict[int, float]) -> list[tuple[Request, float]]:
        """Advance one slot given the realised per-request rates.

        A serving request fails when its rate falls below the minimum or its
        lifetime is exhausted, succeeds when the payload empties within the
        lifetime; queued requests can only time out.  Completions free slots
        that queued requests then fill in FIFO order.
        """
        done: list[tuple[Request, float]] = []
        keep: list[Request] = []
        for req in self.serving:
            r = rates.get(req.id, 0.0)
            if r < req.min_rate or req.lifetime <= 0.0:
                req.status = RequestStatus.FAILED
                done.append((req, -req.initial_payload))
                continue
            req.lifetime = max(req.lifetime - 1.0, 0.0)
            req.payload = max(req.payload - r, 0.0)
            if req.payload == 0.0:
                req.status = RequestStatus.SUCCEEDED
                done.append((req, req.initial_payload))
            else:
                keep.append(req)
        self.serving = keep
        kept_q: list[Request] = []
        for req in self.queue:
            if req.lifetime <= 0.0:
                req.status = RequestStatus.FAILED
                done.append((req, -req.initial_payload))
            else:
                req.lifetime = max(req.lifetime - 1.0, 0.0)
                kept_q.append(req)
        self.queue = kept_q
        while len(self.serving) < self.n_serving and self.queue:
            nxt = self.queue.pop(0)
            nxt.status = RequestStatus.SERVING
            self.serving.append(nxt)
        for req, _ in done:
            self.last_channels.pop(req.id, None)
        return done

    def record_action(self, action: np.ndarray | None) -> None:
        """Remember which channels each serving request just received."""
        if action is None:
            for req in self.serving:
                self.last_channels[req.id] = np.zeros(self.n_channels, dtype=np.uint8)
            return
        for row, req in enumerate(self.serving):
            self.last_channels[req.id] = action[row].astype(np.uint8)

    def all_requests(self) -> list[Request]:
        return list(self.serving) + list(self.queue)


class ConstraintViolation(AssertionError):
    """A structural invariant of the slicing system was broken."""


def validate_action(action: np.ndarray, n_serving: int, n_ch_budget: int) -> None:
    """Assert the structural action constraints.

    Rows index serving requests, columns channels.  Entries are 0/1, each
    channel serves at most one request, and the number of used channels stays
    within the per-cell budget.  Violations raise ConstraintViolation.
    """
    if action.ndim != 2:
        raise ConstraintViolation("action must be a 2-D matrix")
    if action.shape[0] > n_serving:
        raise ConstraintViolation("more action rows than serving slots")
    if not ((action == 0) | (action == 1)).all():
        raise ConstraintViolation("action entries must be 0/1")
    per_channel = action.sum(axis=0)
    if np.any(per_channel > 1):
        raise ConstraintViolation("a channel was assigned to two requests")
    if int(per_channel.sum()) > n_ch_budget:
        raise ConstraintViolation("channel budget exceeded")


def move_users(user_xy: np.ndarray, bs_xy: np.ndarray, radius_km: float,
               step_km: float, rng: np.random.Generator,
               max_tries: int = 64) -> np.ndarray:
    """Random-walk every user by a uniform-in-disk step, staying in coverage.

    Steps leaving the service area are rejected and resampled; after
    ``max_tries`` rejections the user stays put for the slot.
    """
    out = user_xy.copy()
    pending = np.arange(user_xy.shape[0])
    for _ in range(max_tries):
        if pending.size == 0:
            break
        radius = step_km * np.sqrt(rng.uniform(size=pending.size))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=pending.size)
        cand = user_xy[pending] + np.column_stack([radius * np.cos(theta),
                                                   radius * np.sin(theta)])
        ok = coverage_mask(bs_xy, radius_km, cand)
        out[pending[ok]] = cand[ok]
        pending = pending[~ok]
    return out


def draw_positions_in_coverage(n: int, bs_xy: np.ndarray, radius_km: float,
                               rng: np.random.Generator) -> np.ndarray:
    """Uniform points over the union of the cell disks (rejection sampling)."""
    lo = bs_xy.min(axis=0) - radius_km
    hi = bs_xy.max(axis=0) + radius_km
    pts = np.empty((n, 2))
    got = 0
    while got < n:
        cand = rng.uniform(lo, hi, size=(max(2 * (n - got), 8), 2))
        ok = cand[coverage_mask(bs_xy, radius_km, cand)]
        take = min(n - got, ok.shape[0])
        pts[got:got + take] = ok[:take]
        got += take
    return pts


class ArrivalProcess:
    """Per-user request generation with a cooldown between consecutive requests.

    A user carries at most one live request; ``cooldown_slots`` slots must
    pass after it resolves (or is denied) before the next one is issued.
    """

    def __init__(self, n_users: int, cooldown_slots: int):
        self.cooldown_slots = cooldown_slots
        self.cooldown = np.zeros(n_users, dtype=int)
        self.busy = np.zeros(n_users, dtype=bool)

    def tick(self) -> None:
        self.cooldown = np.maximum(self.cooldown - 1, 0)

    def ready_users(self) -> np.ndarray:
        return np.flatnonzero(~self.busy & (self.cooldown == 0))

    def mark_issued(self, user: int) -> None:
        self.busy[user] = True

    def mark_resolved(self, user: int) -> None:
        self.busy[user] = False
        self.cooldown[user] = self.cooldown_slots

    def mark_denied(self, user: int) -> None:
        self.busy[user] = False
        self.cooldown[user] = self.cooldown_slots


def assign_arrivals(ready: np.ndarray, stations: list[BaseStation],
                    user_xy: np.ndarray, bs_xy: np.ndarray, radius_km: float,
                    rng: np.random.Generator, next_id: int, t: int,
                    arrivals: ArrivalProcess) -> tuple[list[Request], list[int], int]:
    """Issue one request per ready user to the nearest covering cell with room.

    Users whose covering cells are all full are denied (no reward, cooldown
    restarts).  Returns (admitted requests, denied users, next free id).
    """
    admitted: list[Request] = []
    denied: list[int] = []
    for user in ready:
        d = np.sqrt(((bs_xy - user_xy[user]) ** 2).sum(axis=1))
        order = np.argsort(d, kind="stable")
        target = -1
        for b in order:
            if d[b] > radius_km:
                break
            if stations[b].has_room():
                target = int(b)
                break
        if target < 0:
            denied.append(int(user))
            arrivals.mark_denied(int(user))
            continue
        req = draw_request(rng, int(user), next_id, t)
        next_id += 1
        stations[target].admit(req)
        arrivals.mark_issued(int(user))
        admitted.append(req)
    return admitted, denied, next_id
