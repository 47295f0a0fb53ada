"""Two-step demand-side management: offer a flexibility window, serve a request.

The building side runs economic MPC until an assessment trigger fires.  It
then computes how long the heat pump can stay off, offers that window to the
grid, and if the grid replies with a request inside the window, serves it by
keeping the heat pump off on every requested step.  When the request period
has passed, control returns to economic MPC.

Step indices in messages are absolute control-step numbers,
``int(timestamp // step)``, so they stay meaningful across solves.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

ECONOMIC = "Economic"
ASSESSING = "Assessing"
SERVING = "Serving"

ACCEPT = "accept"
STALE = "stale"
INFEASIBLE = "infeasible"
EMPTY = "empty"
BUSY = "busy"

# Allowed mode changes (Economic -> Serving must pass through an accepted request).
TRANSITIONS = {(ECONOMIC, ECONOMIC), (ECONOMIC, ASSESSING), (ASSESSING, SERVING),
               (ASSESSING, ECONOMIC), (SERVING, SERVING), (SERVING, ECONOMIC)}


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class OfferMessage:
    window_id: str
    indices: tuple[int, ...]
    valid_until: float
    timestamp: float

    kind = "offer"

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, **asdict(self), "indices": list(self.indices)})

    @classmethod
    def from_json(cls, text: str) -> "OfferMessage":
        d = json.loads(text)
        return cls(d["window_id"], tuple(int(i) for i in d["indices"]),
                   float(d["valid_until"]), float(d["timestamp"]))


@dataclass(frozen=True)
class RequestMessage:
    window_id: str
    indices: tuple[int, ...]
    timestamp: float

    kind = "request"

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, **asdict(self), "indices": list(self.indices)})

    @classmethod
    def from_json(cls, text: str) -> "RequestMessage":
        d = json.loads(text)
        return cls(d["window_id"], tuple(int(i) for i in d["indices"]), float(d["timestamp"]))


@dataclass(frozen=True)
class Decision:
    accepted: bool
    reason: str = ACCEPT


def validate_request(offer: OfferMessage | None, request: RequestMessage,
                     now: float | None = None) -> Decision:
    """Accept iff the request names the live offer, arrives in time and stays inside F."""
    if offer is None or request.window_id != offer.window_id:
        return Decision(False, STALE)
    t = request.timestamp if now is None else now
    if t > offer.valid_until:
        return Decision(False, STALE)
    if not request.indices:
        return Decision(False, EMPTY)
    if not set(request.indices) <= set(offer.indices):
        return Decision(False, INFEASIBLE)
    return Decision(True, ACCEPT)


@dataclass
class Action:
    """What the controller must solve on this tick."""

    kind: str                     # "economic" | "assess" | "exploit"
    request: tuple[int, ...] = ()


@dataclass
class DsmState:
    mode: str = ECONOMIC
    offer: OfferMessage | None = None
    request: RequestMessage | None = None
    triggers: list[float] = field(default_factory=list)
    step: float = 300.0
    day: int = 0
    counter: int = 0
    history: list[tuple[float, str]] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    served: list[RequestMessage] = field(default_factory=list)

    def __post_init__(self):
        self.triggers = sorted(float(t) for t in self.triggers)
        if self.mode == SERVING and (self.request is None or not self.request.indices):
            raise ProtocolError("serving mode needs a non-empty request")

    def _move(self, mode: str, clock: float) -> None:
        if (self.mode, mode) not in TRANSITIONS:
            raise ProtocolError(f"illegal transition {self.mode} -> {mode}")
        if mode != self.mode:
            self.history.append((clock, mode))
        self.mode = mode

    def step_index(self, clock: float) -> int:
        return int(np.floor(clock / self.step + 1e-9))

    def _record(self, kind: str, window_id: str, indices, clock: float, decision: str) -> None:
        self.log.append({"kind": kind, "window_id": window_id, "indices": [int(i) for i in indices],
                         "timestamp": float(clock), "decision": decision})

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.log:
                fh.write(json.dumps(entry) + "\n")


def assessment_triggers(opening: float, closing: float, period: float = 3 * 3600.0,
                        day_start: float = 0.0) -> list[float]:
    """Trigger times every ``period`` from opening while a whole period still fits the day."""
    out = []
    t = day_start + opening
    while t + period <= day_start + closing + 1e-9:
        out.append(t)
        t += period
    return out


def tick(state: DsmState, clock: float) -> Action:
    """Advance the mode machine to ``clock`` and say which problem to solve.

    A served request ends once its last step has passed.  Due triggers are
    consumed together (overlapping triggers give one assessment); a trigger
    that falls while a request is being served is dropped.
    """
    k = state.step_index(clock)
    if state.mode == SERVING and state.request is not None and k > max(state.request.indices):
        state.served.append(state.request)
        state.request = None
        state.offer = None
        state._move(ECONOMIC, clock)
    if state.mode == ASSESSING:
        # an offer whose reply never came
        if state.offer is None or clock > state.offer.valid_until:
            state.offer = None
            state._move(ECONOMIC, clock)
    due = [t for t in state.triggers if t <= clock + 1e-9]
    if due:
        state.triggers = [t for t in state.triggers if t > clock + 1e-9]
        if state.mode == ECONOMIC:
            state._move(ASSESSING, clock)
            return Action("assess")
    if state.mode == SERVING:
        remaining = tuple(i for i in state.request.indices if i >= k)
        return Action("exploit", remaining)
    return Action("economic")


def make_offer(state: DsmState, offered_steps: Iterable[int], clock: float,
               validity: float | None = None) -> OfferMessage | None:
    """Publish the assessed window (absolute step indices); empty windows end the exchange."""
    if state.mode != ASSESSING:
        raise ProtocolError(f"cannot offer while in {state.mode} mode")
    indices = tuple(sorted(int(i) for i in offered_steps))
    state.counter += 1
    window_id = f"d{state.day}-w{state.counter}"
    valid_until = clock + (state.step if validity is None else validity)
    if not indices:
        state._record("offer", window_id, (), clock, EMPTY)
        state._move(ECONOMIC, clock)
        state.offer = None
        return None
    offer = OfferMessage(window_id, indices, valid_until, clock)
    state.offer = offer
    state._record("offer", window_id, indices, clock, "sent")
    return offer


def receive_request(state: DsmState, request: RequestMessage, clock: float) -> Decision:
    """Validate an incoming request and switch to serving when it is accepted."""
    if state.mode == SERVING:
        decision = Decision(False, BUSY)
    else:
        decision = validate_request(state.offer, request, clock)
    state._record("request", request.window_id, request.indices, clock, decision.reason)
    if decision.accepted:
        state.request = request
        state._move(SERVING, clock)
    elif state.mode == ASSESSING:
        state.offer = None
        state._move(ECONOMIC, clock)
    return decision


FULL = "full"
RANDOM = "random"
NONE = "empty"


@dataclass
class SyntheticGrid:
    """Grid operator stand-in that answers every offer according to ``policy``.

    ``full`` requests the whole window, ``random`` a random contiguous
    sub-window (seeded), ``empty`` never requests anything.
    """

    policy: str = FULL
    seed: int = 0
    period: float = 3 * 3600.0

    def __post_init__(self):
        if self.policy not in (FULL, RANDOM, NONE):
            raise ValueError(f"unknown grid policy {self.policy!r}")
        self._rng = np.random.default_rng(self.seed)

    def respond(self, offer: OfferMessage | None, clock: float | None = None) -> RequestMessage | None:
        if offer is None or self.policy == NONE:
            return None
        t = offer.timestamp if clock is None else clock
        idx = offer.indices
        if self.policy == FULL:
            return RequestMessage(offer.window_id, tuple(idx), t)
        n = len(idx)
        a = int(self._rng.integers(0, n))
        b = int(self._rng.integers(a, n))
        return RequestMessage(offer.window_id, tuple(idx[a:b + 1]), t)

    def stream(self, offers: Iterable[OfferMessage | None]):
        for offer in offers:
            req = self.respond(offer)
            if req is not None:
                yield req


def synthetic_grid(period: float = 3 * 3600.0, policy: str = FULL, seed: int = 0) -> SyntheticGrid:
    return SyntheticGrid(policy, seed, period)
