"""Event-driven execution of one protocol instance.

Subsystems A and B are move-only resources: each has one owner and one
position, and an operation is legal only for the owner standing exactly at
that position.  Classical messages are copyable but reach only the future
cones of their targets.  Every recorded event lists the events it depends
on, so a transcript can be re-checked without re-running anything.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Sequence, Union

import numpy as np

from . import strategies
from .geometry import GeometryConfig, SpacetimePoint, causally_precedes
from .qudit import (
    BellLabel,
    State,
    bell_outcome_distribution,
    bell_state,
    check_dimension,
    computational_distribution,
    project_computational,
    sample_index,
    state_from_json,
    state_to_json,
)
from .strategies import StrategySpec

SCHEMA = "lodt.transcript/1"
EVENT_KINDS = ("Prepare", "Handoff", "Transmit", "LocalOp", "Broadcast", "Output")
ACTORS = ("alice", "bob")
MAX_CALLBACKS = 1000
_BRANCH_EPS = 1e-12

Datum = Union[int, str]


class ProtocolViolation(Exception):
    """A strategy tried something physics forbids.  The run is aborted.

    ``transcript`` holds the diagnostic transcript up to the refused action.
    """

    kind = "ProtocolViolation"

    def __init__(self, message: str, location: SpacetimePoint | None = None):
        super().__init__(message)
        self.location = location
        self.transcript: Transcript | None = None


class CustodyViolation(ProtocolViolation):
    kind = "CustodyViolation"


class CausalityViolation(ProtocolViolation):
    kind = "CausalityViolation"


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class Event:
    kind: str
    actor: str
    location: SpacetimePoint
    payload: dict
    deps: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "actor": self.actor,
            "location": self.location.as_list(),
            "payload": self.payload,
            "deps": list(self.deps),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Event":
        return cls(doc["kind"], doc["actor"], SpacetimePoint.from_list(doc["location"]),
                   doc["payload"], tuple(doc["deps"]))


@dataclass(frozen=True)
class ProtocolConfig:
    d: int = 2
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    alice: StrategySpec = field(default_factory=lambda: strategies.honest("alice"))
    bob: StrategySpec = field(default_factory=lambda: strategies.honest("bob"))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "d", check_dimension(self.d))
        if self.alice.party != "alice" or self.bob.party != "bob":
            raise ValueError("alice and bob specs must carry their own party tags")
        for spec in (self.alice, self.bob):
            if spec.id not in _UNBUILT_IDS:
                strategies.build(spec)
        object.__setattr__(self, "seed", int(self.seed))

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "geometry": self.geometry.to_json(),
            "alice": self.alice.to_json(),
            "bob": self.bob.to_json(),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ProtocolConfig":
        return cls(
            d=doc["d"],
            geometry=GeometryConfig.from_json(doc["geometry"]),
            alice=StrategySpec.from_json("alice", doc["alice"]),
            bob=StrategySpec.from_json("bob", doc["bob"]),
            seed=doc["seed"],
        )


# Alice ids that only exist inside dedicated variants (see lab.classical_xor_run).
_UNBUILT_IDS = {"xor_bits"}


@dataclass
class Transcript:
    config: ProtocolConfig
    events: list[Event]
    final_state: State | None
    seed: int
    datum: int | None
    variant: str = "quantum"
    violation: dict | None = None

    @property
    def aborted(self) -> bool:
        return self.violation is not None

    def alice_j(self) -> int | None:
        if self.variant == "classical_xor":
            return self.config.alice.params["j"]
        for ev in self.events:
            if ev.actor == "alice" and ev.kind == "LocalOp" and ev.payload.get("op") == "choose_j":
                return ev.payload["j"]
        return None

    def bob_coins(self) -> tuple[int, ...]:
        return tuple(ev.payload["value"] for ev in self.events
                     if ev.actor == "bob" and ev.kind == "LocalOp" and ev.payload.get("op") == "coin")

    def outputs(self) -> list[tuple[int, Event]]:
        return [(n, ev) for n, ev in enumerate(self.events) if ev.kind == "Output"]

    def answer(self) -> Event | None:
        """Bob's earliest output (by time, then record order)."""
        outs = self.outputs()
        if not outs:
            return None
        return min(outs, key=lambda item: (item[1].location.t, item[0]))[1]

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "variant": self.variant,
            "config": self.config.to_json(),
            "seed": self.seed,
            "datum": self.datum,
            "events": [ev.to_json() for ev in self.events],
            "final_state": state_to_json(self.final_state),
            "violation": self.violation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "Transcript":
        if "transcript" in doc and "schema" not in doc:
            doc = doc["transcript"]
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported transcript schema {doc.get('schema')!r}")
        return cls(
            config=ProtocolConfig.from_json(doc["config"]),
            events=[Event.from_json(ev) for ev in doc["events"]],
            final_state=state_from_json(doc["final_state"]),
            seed=doc["seed"],
            datum=doc["datum"],
            variant=doc["variant"],
            violation=doc["violation"],
        )

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class LearningCertificate:
    certified: bool
    learning_location: SpacetimePoint | None
    identification_probability: float
    certified_components: tuple[str, ...] = ()

    def __post_init__(self):
        if self.certified and self.identification_probability != 1.0:
            raise ValueError("a certified strategy identifies the datum with probability 1")


# --------------------------------------------------------------------------- #
#                          randomness for one run                             #
# --------------------------------------------------------------------------- #


class _SampledOutcomes:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def pick(self, probs: np.ndarray) -> int:
        return sample_index(probs, self.rng)


class _ReplayOutcomes:
    """Follows a forced outcome prefix, then the first supported outcome.

    Unexplored alternatives are recorded so the caller can enumerate the
    whole measurement tree depth-first.
    """

    def __init__(self, prefix: Sequence[int]):
        self.prefix = tuple(prefix)
        self.taken: list[int] = []
        self.pending: list[tuple[int, list[int]]] = []
        self.weight = 1.0

    def pick(self, probs: np.ndarray) -> int:
        pos = len(self.taken)
        if pos < len(self.prefix):
            idx = self.prefix[pos]
        else:
            support = [n for n, p in enumerate(probs) if p > _BRANCH_EPS]
            idx = support[0]
            if len(support) > 1:
                self.pending.append((pos, support[1:]))
        self.weight *= float(probs[idx])
        self.taken.append(idx)
        return idx

    def children(self) -> list[tuple[int, ...]]:
        return [tuple(self.taken[:pos]) + (alt,) for pos, alts in self.pending for alt in alts]


class _SampledCoins:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def next(self) -> int:
        return int(self.rng.integers(2))


class _FixedCoins:
    def __init__(self, path: Sequence[int]):
        self.path = list(path)

    def next(self) -> int:
        if not self.path:
            raise EngineError("strategy flipped more coins than the fixed coin path provides")
        return int(self.path.pop(0))


# --------------------------------------------------------------------------- #
#                                execution                                    #
# --------------------------------------------------------------------------- #


@dataclass
class _Subsystem:
    owner: str
    position: SpacetimePoint
    last_event: int


@dataclass
class _Message:
    event: int
    key: str
    value: Any
    targets: tuple[SpacetimePoint, ...]


class Execution:
    """Mutable state of one run: the event log, custody table and callback queue.

    Variants of the protocol drive it by scheduling Alice actions (plain
    callables) and Bob callbacks (which receive a :class:`BobContext`).
    """

    def __init__(self, cfg: ProtocolConfig, bob, outcomes, coins, variant: str = "quantum"):
        self.cfg = cfg
        self.bob = bob
        self.outcomes = outcomes
        self.coins = coins
        self.variant = variant
        self.events: list[Event] = []
        self.subsystems: dict[str, _Subsystem] = {}
        self.messages: list[_Message] = []
        self.state: State | None = None
        self.datum: int | None = None
        self._queue: list = []
        self._seq = itertools.count()
        self._callbacks = 0

    def record(self, kind: str, actor: str, location: SpacetimePoint, payload: dict,
               deps: Iterable[int] = ()) -> int:
        self.events.append(Event(kind, actor, location, payload, tuple(sorted(set(deps)))))
        return len(self.events) - 1

    def add_message(self, event: int, key: str, value, targets: Sequence[SpacetimePoint]) -> None:
        self.messages.append(_Message(event, key, value, tuple(targets)))

    def schedule(self, point: SpacetimePoint, fn: Callable, actor: str,
                 deps: Iterable[int] = ()) -> None:
        heapq.heappush(self._queue, (point.t, next(self._seq), point, fn, actor, frozenset(deps)))

    def run(self) -> None:
        while self._queue:
            _, _, point, fn, actor, deps = heapq.heappop(self._queue)
            if actor == "alice":
                fn()
                continue
            self._callbacks += 1
            if self._callbacks > MAX_CALLBACKS:
                raise EngineError(f"more than {MAX_CALLBACKS} Bob callbacks in one run")
            fn(BobContext(self, point, deps))

    def transcript(self, violation: ProtocolViolation | None = None) -> Transcript:
        record = None
        if violation is not None:
            record = {
                "type": violation.kind,
                "message": str(violation),
                "location": violation.location.as_list() if violation.location else None,
            }
        return Transcript(self.cfg, list(self.events), self.state, self.cfg.seed,
                          self.datum, self.variant, record)

    def execute(self) -> Transcript:
        try:
            self.run()
        except ProtocolViolation as exc:
            exc.transcript = self.transcript(exc)
            raise
        return self.transcript()


class BobContext:
    """What Bob's laboratory sees at one spacetime point."""

    def __init__(self, ex: Execution, location: SpacetimePoint, deps: Iterable[int] = ()):
        self._ex = ex
        self.location = location
        self._deps = set(deps)

    @property
    def d(self) -> int:
        return self._ex.cfg.d

    @property
    def geometry(self) -> GeometryConfig:
        return self._ex.cfg.geometry

    def _emit(self, kind: str, payload: dict, deps: Iterable[int] = (),
              location: SpacetimePoint | None = None) -> int:
        self._deps.update(deps)
        idx = self._ex.record(kind, "bob", location or self.location, payload, self._deps)
        self._deps.add(idx)
        return idx

    def holds(self, name: str) -> bool:
        sub = self._ex.subsystems.get(name)
        return sub is not None and sub.owner == "bob" and sub.position.isclose(self.location)

    def _require(self, name: str) -> _Subsystem:
        if not self.holds(name):
            raise CustodyViolation(f"subsystem {name} is not in Bob's custody at {self.location}",
                                   self.location)
        sub = self._ex.subsystems[name]
        self._deps.add(sub.last_event)
        return sub

    def _require_future(self, point: SpacetimePoint, what: str) -> None:
        if not causally_precedes(self.location, point):
            raise CausalityViolation(f"{what} at {point} is outside the future cone of {self.location}",
                                     self.location)

    def coin(self) -> int:
        value = self._ex.coins.next()
        self._emit("LocalOp", {"op": "coin", "value": value})
        return value

    def measure(self, name: str) -> int:
        """Computational-basis measurement of one locally held subsystem."""
        sub = self._require(name)
        ex = self._ex
        outcome = ex.outcomes.pick(computational_distribution(ex.state, name))
        ex.state = project_computational(ex.state, name, outcome)
        sub.last_event = self._emit("LocalOp", {"op": "measure", "subsystems": [name],
                                                "outcome": outcome})
        return outcome

    def measure_bell(self) -> BellLabel:
        a_sub, b_sub = self._require("A"), self._require("B")
        ex = self._ex
        idx = ex.outcomes.pick(bell_outcome_distribution(ex.state))
        label = BellLabel(*divmod(idx, ex.cfg.d))
        ex.state = bell_state(ex.cfg.d, label)
        ev = self._emit("LocalOp", {"op": "bell_measure", "subsystems": ["A", "B"],
                                    "outcome": [label.a, label.b]})
        a_sub.last_event = b_sub.last_event = ev
        return label

    def send(self, name: str, to: SpacetimePoint) -> None:
        sub = self._require(name)
        self._require_future(to, f"transmission of {name}")
        sub.last_event = self._emit("Transmit", {"subsystems": [name], "to": to.as_list()})
        sub.position = to

    def broadcast(self, key: str, value, targets: Sequence[SpacetimePoint]) -> None:
        """Send a classical copy of ``value`` to every target point."""
        targets = list(targets)
        for target in targets:
            self._require_future(target, f"broadcast of {key!r}")
        json.dumps(value)  # classical payloads must be JSON-native
        ev = self._emit("Broadcast", {"key": key, "value": value,
                                      "targets": [p.as_list() for p in targets]})
        self._ex.add_message(ev, key, value, targets)

    def note(self, key: str, value) -> None:
        """Keep a classical record here, readable anywhere in this point's future."""
        self.broadcast(key, value, [self.location])

    def recall(self, key: str, default=None):
        """Most recent message under ``key`` that has reached this point."""
        for msg in reversed(self._ex.messages):
            if msg.key == key and any(causally_precedes(t, self.location) for t in msg.targets):
                self._deps.add(msg.event)
                return msg.value
        return default

    def schedule(self, point: SpacetimePoint, callback: Callable) -> None:
        self._require_future(point, "scheduled callback")
        self._ex.schedule(point, callback, "bob", self._deps)

    def output(self, label: BellLabel | None = None, *, datum: int | None = None,
               known: Sequence[str] | None = None, at: SpacetimePoint | None = None) -> None:
        """Announce Bob's claimed datum, optionally at a later point ``at``."""
        if at is not None:
            self._require_future(at, "output")
        if label is not None:
            label = BellLabel(*label)
            datum = label.datum(self.d)
            known = ("a", "b") if known is None else tuple(known)
        elif datum is None:
            raise ValueError("output needs a label or a datum")
        payload = {
            "datum": int(datum),
            "label": [label.a, label.b] if label is not None else None,
            "known": list(known or ()),
        }
        self._emit("Output", payload, location=at)


def prepare_point(geometry: GeometryConfig) -> SpacetimePoint:
    """Where Alice prepares the pair: on the time axis, ``T`` before ``P``."""
    p = geometry.origin
    return SpacetimePoint(p.x, p.y, p.z, p.t - geometry.T)


def _execute(cfg: ProtocolConfig, i: int, *, rng: np.random.Generator | None,
             j: int | None = None, outcomes=None, coins=None, alice=None) -> Transcript:
    d, geo = cfg.d, cfg.geometry
    alice = alice or strategies.build(cfg.alice)
    bob = strategies.build(cfg.bob)
    ex = Execution(cfg, bob, outcomes or _SampledOutcomes(rng), coins or _SampledCoins(rng))
    ex.datum = i
    P = geo.origin

    prep = ex.record("Prepare", "alice", prepare_point(geo),
                     {"subsystems": ["A", "B"], "datum": i})
    ex.state = alice.prepare(d, BellLabel.from_datum(i, d))
    ex.subsystems["A"] = _Subsystem("alice", prepare_point(geo), prep)
    ex.subsystems["B"] = _Subsystem("alice", prepare_point(geo), prep)

    hand_b = ex.record("Handoff", "alice", P, {"subsystems": ["B"], "to_actor": "bob"}, [prep])
    ex.subsystems["B"] = _Subsystem("bob", P, hand_b)

    if j is None:
        j = alice.choose_j(rng)
    coin = ex.record("LocalOp", "alice", P, {"op": "choose_j", "j": j})
    q_j = geo.q_point(j)
    tx = ex.record("Transmit", "alice", P, {"subsystems": ["A"], "to": q_j.as_list()}, [prep, coin])
    ex.subsystems["A"] = _Subsystem("alice", q_j, tx)

    def hand_over_a():
        sub = ex.subsystems["A"]
        ev = ex.record("Handoff", "alice", q_j, {"subsystems": ["A"], "to_actor": "bob"},
                       [sub.last_event])
        ex.subsystems["A"] = _Subsystem("bob", q_j, ev)

    ex.schedule(q_j, hand_over_a, "alice")
    ex.schedule(P, bob.at_P, "bob")
    for index in (0, 1):
        ex.schedule(geo.q_point(index), lambda ctx, index=index: bob.at_Q(ctx, index), "bob")
    return ex.execute()


def run_protocol(cfg: ProtocolConfig, i: Datum = "random") -> Transcript:
    """Run one instance; deterministic given ``cfg.seed``.

    Raises :class:`CustodyViolation` or :class:`CausalityViolation` (with the
    diagnostic transcript attached) if Bob's strategy breaks physics.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.d * cfg.d
    if i == "random":
        i = int(rng.integers(1, n + 1))
    elif isinstance(i, bool) or not isinstance(i, (int, np.integer)) or not 1 <= i <= n:
        raise ValueError(f"datum must be an integer in [1, {n}] or 'random', got {i!r}")
    return _execute(cfg, int(i), rng=rng)


# --------------------------------------------------------------------------- #
#                               validation                                    #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Violation:
    kind: str  # structure | causality | no_cloning | custody | broadcast
    event: int
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def add(self, kind: str, event: int, message: str) -> None:
        self.violations.append(Violation(kind, event, message))


def validate_transcript(tr: Transcript) -> ValidationReport:
    """Re-check dependencies, worldlines, custody and broadcast speeds."""
    report = ValidationReport()
    owners: dict[str, str] = {}
    positions: dict[str, SpacetimePoint] = {}
    for n, ev in enumerate(tr.events):
        if ev.kind not in EVENT_KINDS or ev.actor not in ACTORS:
            report.add("structure", n, f"unknown kind/actor {ev.kind!r}/{ev.actor!r}")
            continue
        for dep in ev.deps:
            if not 0 <= dep < n:
                report.add("structure", n, f"dependency {dep} does not precede event {n}")
            elif not causally_precedes(tr.events[dep].location, ev.location):
                report.add("causality", n, f"event {n} at {ev.location} is outside the future "
                                           f"cone of its dependency {dep} at {tr.events[dep].location}")
        subs = ev.payload.get("subsystems", []) if ev.kind != "Output" else []
        for name in subs:
            if ev.kind == "Prepare":
                if name in owners:
                    report.add("no_cloning", n, f"subsystem {name} prepared twice")
                owners[name], positions[name] = ev.actor, ev.location
                continue
            if name not in owners:
                report.add("structure", n, f"subsystem {name} used before preparation")
                continue
            if owners[name] != ev.actor:
                report.add("custody", n, f"{ev.actor} acts on {name} held by {owners[name]}")
            if not causally_precedes(positions[name], ev.location):
                report.add("no_cloning", n, f"subsystem {name} appears at {ev.location}, not on a "
                                            f"causal path from {positions[name]}")
            positions[name] = ev.location
            if ev.kind == "Handoff":
                owners[name] = ev.payload["to_actor"]
            elif ev.kind == "Transmit":
                to = SpacetimePoint.from_list(ev.payload["to"])
                if not causally_precedes(ev.location, to):
                    report.add("causality", n, f"{name} sent faster than light to {to}")
                positions[name] = to
        if ev.kind == "Broadcast":
            for target in ev.payload.get("targets", []):
                target = SpacetimePoint.from_list(target)
                if not causally_precedes(ev.location, target):
                    report.add("broadcast", n, f"broadcast from {ev.location} reaches {target} "
                                               "faster than light")
    return report


# --------------------------------------------------------------------------- #
#                              certification                                  #
# --------------------------------------------------------------------------- #


def enumerate_branches(run: Callable[[_ReplayOutcomes], Transcript]):
    """Yield ``(weight, transcript)`` for every measurement branch of ``run``."""
    stack: list[tuple[int, ...]] = [()]
    while stack:
        replay = _ReplayOutcomes(stack.pop())
        tr = run(replay)
        stack.extend(reversed(replay.children()))
        yield replay.weight, tr


def certify_learning(cfg: ProtocolConfig, bob_strategy: StrategySpec | None = None,
                     j: int = 0, k_path: Sequence[int] = ()) -> LearningCertificate:
    """Decide whether Bob learns the datum, with Alice's and Bob's coins fixed.

    Alice is taken to prepare the basis state of every datum in turn; every
    measurement branch is enumerated exactly.  Bob is certified only if his
    earliest output is correct in every case and always at the same place.
    """
    if j not in (0, 1):
        raise ValueError(f"j must be 0 or 1, got {j!r}")
    run_cfg = replace(cfg, bob=bob_strategy or cfg.bob)
    honest_alice = strategies.HonestAlice()
    d = cfg.d
    certified = True
    locations: list[SpacetimePoint] = []
    components = {"a": True, "b": True}
    total = 0.0
    for i in range(1, d * d + 1):
        truth = BellLabel.from_datum(i, d)
        for weight, tr in enumerate_branches(
                lambda replay: _execute(run_cfg, i, rng=None, j=j, outcomes=replay,
                                        coins=_FixedCoins(k_path), alice=honest_alice)):
            ans = tr.answer()
            if ans is None or ans.payload["datum"] != i:
                certified = False
            else:
                total += weight
                if not any(ans.location.isclose(p) for p in locations):
                    locations.append(ans.location)
            for comp, value in (("a", truth.a), ("b", truth.b)):
                label = ans.payload.get("label") if ans is not None else None
                if (ans is None or label is None or comp not in ans.payload["known"]
                        or label["ab".index(comp)] != value):
                    components[comp] = False
    if certified and len(locations) != 1:
        certified = False
    prob = 1.0 if certified else total / (d * d)
    return LearningCertificate(
        certified=certified,
        learning_location=locations[0] if certified else None,
        identification_probability=prob,
        certified_components=tuple(c for c, ok in components.items() if ok),
    )
