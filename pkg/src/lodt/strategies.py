"""Alice and Bob strategy catalogue.

A Bob strategy is a set of callbacks that the engine fires at spacetime
points: ``at_P`` when subsystem B is handed over, ``at_Q(index)`` at each
transfer point, plus whatever the strategy schedules itself.  Every callback
receives a context bound to one location; it can only see subsystems and
classical messages that are physically present there.

Strategies must be stateless.  Anything a callback wants to remember has to
travel through the context (``note``/``broadcast``/``schedule``) so the engine
can check it moves no faster than light.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .geometry import SpacetimePoint, line_point
from .qudit import (
    BellLabel,
    DensityOperator,
    PureState,
    bell_state,
    maximally_mixed,
    product_state,
    state_from_json,
    state_to_json,
)

PARTIES = ("alice", "bob")


@dataclass(frozen=True)
class StrategySpec:
    """Serializable strategy choice: party, catalogue id and JSON-native params."""

    party: str
    id: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.party not in PARTIES:
            raise ValueError(f"party must be one of {PARTIES}, got {self.party!r}")
        object.__setattr__(self, "id", self.id.replace("-", "_"))
        object.__setattr__(self, "params", dict(self.params))

    def to_json(self) -> dict:
        return {"id": self.id, "params": self.params}

    @classmethod
    def from_json(cls, party: str, doc: dict) -> "StrategySpec":
        return cls(party, doc["id"], doc.get("params", {}))

    def label(self) -> str:
        if not self.params:
            return self.id
        if self.id == "arbitrary_state":
            return f"{self.id}:{self.params['state']['form']}"
        return self.id + ":" + ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))


# --------------------------------------------------------------------------- #
#                                   Alice                                     #
# --------------------------------------------------------------------------- #


class AliceStrategy:
    """Chooses the prepared state and the direction bit ``j``."""

    def prepare(self, d: int, label: BellLabel):
        return bell_state(d, label)

    def choose_j(self, rng: np.random.Generator) -> int:
        return int(rng.integers(2))


class HonestAlice(AliceStrategy):
    pass


class BiasedAlice(AliceStrategy):
    """Sends along ``v_0`` with probability ``p`` instead of 1/2."""

    def __init__(self, p: float):
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bias p must lie in [0, 1], got {p}")
        self.p = p

    def choose_j(self, rng):
        return 0 if rng.random() < self.p else 1


class ArbitraryStateAlice(AliceStrategy):
    """Hands over a fixed joint state, ignoring the datum."""

    def __init__(self, state):
        self.state = state_from_json(state) if isinstance(state, dict) else state
        if not isinstance(self.state, (PureState, DensityOperator)):
            raise ValueError("arbitrary_state needs a pure state or density operator")

    def prepare(self, d, label):
        if self.state.d != d:
            raise ValueError(f"supplied state has d={self.state.d}, protocol uses d={d}")
        return self.state


# --------------------------------------------------------------------------- #
#                                    Bob                                      #
# --------------------------------------------------------------------------- #


class BobStrategy:
    """Base class; every callback defaults to doing nothing."""

    def at_P(self, ctx) -> None:
        pass

    def at_Q(self, ctx, index: int) -> None:
        pass


class HonestBob(BobStrategy):
    """Send B along a random direction, then measure wherever A and B meet.

    If B went the same way as A the Bell measurement happens at that ``Q``;
    otherwise both halves are forwarded to the earliest common future point.
    """

    def direction(self, ctx) -> int:
        return ctx.coin()

    def at_P(self, ctx):
        ctx.send("B", ctx.geometry.q_point(self.direction(ctx)))

    def at_Q(self, ctx, index):
        if ctx.holds("A") and ctx.holds("B"):
            ctx.output(ctx.measure_bell())
            return
        y = ctx.geometry.y_point()
        if ctx.holds("B"):
            ctx.send("B", y)
            ctx.schedule(y, self.at_Y)
        elif ctx.holds("A"):
            ctx.send("A", y)

    def at_Y(self, ctx):
        if ctx.holds("A") and ctx.holds("B"):
            ctx.output(ctx.measure_bell())


class FixedDirectionBob(HonestBob):
    def __init__(self, k: int):
        if k not in (0, 1):
            raise ValueError(f"direction k must be 0 or 1, got {k!r}")
        self.k = int(k)

    def direction(self, ctx):
        return self.k


class MeasureAndResendBob(BobStrategy):
    """Measure B locally at P and copy the classical outcome to both Q points.

    At ``Q_j`` a local measurement of A then fixes the shift ``a`` of the Bell
    label exactly; the phase ``b`` is unrecoverable and guessed as 0.
    """

    def at_P(self, ctx):
        outcome = ctx.measure("B")
        geo = ctx.geometry
        ctx.broadcast("b_outcome", outcome, [geo.q_point(0), geo.q_point(1)])
        ctx.send("B", geo.q_point(0))

    def at_Q(self, ctx, index):
        if not ctx.holds("A"):
            return
        k = ctx.measure("A")
        l = ctx.recall("b_outcome")
        ctx.output(BellLabel((l - k) % ctx.d, 0), known=("a",))


class ClassicalBroadcastBob(BobStrategy):
    """Copy the bit received at P to both transfer points and XOR there."""

    def at_P(self, ctx):
        b0 = ctx.recall("b0")
        if b0 is None:
            return
        geo = ctx.geometry
        ctx.broadcast("b0", b0, [geo.q_point(0), geo.q_point(1)])

    def at_Q(self, ctx, index):
        b0, b1 = ctx.recall("b0"), ctx.recall("b1")
        if b0 is None or b1 is None:
            return
        ctx.output(datum=b0 ^ b1)


class EarlyAccessBob(BobStrategy):
    """Tries a Bell measurement at P, before A is ever in Bob's hands."""

    def at_P(self, ctx):
        ctx.output(ctx.measure_bell())


ATTACKS = ("measure_at_P", "probe_point", "intercept_line", "both_q", "relay_back")
_OPS = ("measure", "bell", "send")
_EXITS = ("schedule", "broadcast", "output", "send")


class AdversarialBob(BobStrategy):
    """Parameterised attempts to get at subsystem A outside ``L(Q_j)``.

    ``attack`` selects the shape of the attempt:

    * ``measure_at_P``: operate on A at P.
    * ``probe_point``: schedule a callback at ``(x, 0, 0, t)`` with ``t < T``.
    * ``intercept_line``: schedule a callback on ``L_line`` at parameter ``s < T``.
    * ``both_q``: operate on A at both transfer points.
    * ``relay_back``: take A at ``Q_j`` legitimately, then push something derived
      from it to ``target`` (``other_q`` or an early point) via ``exit``.
    """

    def __init__(self, attack: str, op: str = "measure", x: float = 0.0, t: float = 0.0,
                 line: int = 0, s: float = 0.0, exit: str = "output", target: str = "other_q"):
        if attack not in ATTACKS:
            raise ValueError(f"unknown attack {attack!r}")
        if op not in _OPS or exit not in _EXITS or target not in ("other_q", "early"):
            raise ValueError("invalid adversary parameters")
        self.attack, self.op, self.exit, self.target = attack, op, exit, target
        self.x, self.t, self.line, self.s = float(x), float(t), int(line), float(s)

    def _touch_A(self, ctx):
        if self.op == "measure":
            ctx.output(BellLabel(ctx.measure("A"), 0), known=("a",))
        elif self.op == "bell":
            ctx.output(ctx.measure_bell())
        else:
            ctx.send("A", ctx.geometry.y_point())

    def at_P(self, ctx):
        if self.attack == "measure_at_P":
            self._touch_A(ctx)
        elif self.attack == "probe_point":
            ctx.schedule(SpacetimePoint(self.x, 0.0, 0.0, self.t), self._touch_A)
        elif self.attack == "intercept_line":
            ctx.schedule(line_point(self.line, self.s, ctx.geometry), self._touch_A)

    def at_Q(self, ctx, index):
        if self.attack == "both_q":
            ctx.measure("A")
        elif self.attack == "relay_back" and ctx.holds("A"):
            self._relay(ctx, index)

    def _relay(self, ctx, index):
        value = ctx.measure("A")
        if self.target == "other_q":
            where = ctx.geometry.q_point(1 - index)
        else:
            where = SpacetimePoint(self.x, 0.0, 0.0, self.t)
        if self.exit == "schedule":
            ctx.schedule(where, lambda c: c.output(BellLabel(value, 0), known=("a",)))
        elif self.exit == "broadcast":
            ctx.broadcast("a_outcome", value, [where])
        elif self.exit == "output":
            ctx.output(BellLabel(value, 0), known=("a",), at=where)
        else:
            ctx.send("A", where)


def random_adversary(rng: np.random.Generator, T: float) -> StrategySpec:
    """Draw one adversarial Bob spec; every draw attempts early access to A."""
    attack = ATTACKS[int(rng.integers(len(ATTACKS)))]
    t = float(rng.uniform(0.0, T))
    x = float(rng.uniform(-t, t))
    params: dict[str, Any] = {"attack": attack, "op": _OPS[int(rng.integers(len(_OPS)))]}
    if attack == "probe_point":
        params.update(x=x, t=t)
    elif attack == "intercept_line":
        params.update(line=int(rng.integers(2)), s=float(rng.uniform(0.0, T)))
    elif attack == "relay_back":
        params.update(exit=_EXITS[int(rng.integers(len(_EXITS)))],
                      target=("other_q", "early")[int(rng.integers(2))], x=x, t=t)
    return StrategySpec("bob", "adversarial", params)


ALICE_STRATEGIES: dict[str, Callable[..., AliceStrategy]] = {
    "honest": HonestAlice,
    "biased_j": BiasedAlice,
    "arbitrary_state": ArbitraryStateAlice,
}

BOB_STRATEGIES: dict[str, Callable[..., BobStrategy]] = {
    "honest": HonestBob,
    "fixed_direction": FixedDirectionBob,
    "measure_and_resend": MeasureAndResendBob,
    "classical_broadcast": ClassicalBroadcastBob,
    "early_access": EarlyAccessBob,
    "adversarial": AdversarialBob,
}


def build(spec: StrategySpec):
    registry = ALICE_STRATEGIES if spec.party == "alice" else BOB_STRATEGIES
    try:
        factory = registry[spec.id]
    except KeyError:
        raise ValueError(f"unknown {spec.party} strategy {spec.id!r}; "
                         f"choose from {sorted(registry)}") from None
    try:
        return factory(**spec.params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {spec.party} strategy {spec.id!r}: {exc}") from None


def honest(party: str) -> StrategySpec:
    return StrategySpec(party, "honest")


def fixed_direction(k: int) -> StrategySpec:
    return StrategySpec("bob", "fixed_direction", {"k": k})


def biased_j(p: float) -> StrategySpec:
    return StrategySpec("alice", "biased_j", {"p": p})


def arbitrary_state(state) -> StrategySpec:
    return StrategySpec("alice", "arbitrary_state", {"state": state_to_json(state)})


def parse_strategy(party: str, text: str, d: int = 2) -> StrategySpec:
    """Parse the command-line form ``id[:arg[:arg...]]``.

    >>> parse_strategy("bob", "fixed-direction:1").params
    {'k': 1}
    """
    name, *args = text.split(":")
    name = name.replace("-", "_")
    if name == "fixed_direction":
        if len(args) != 1:
            raise ValueError("fixed-direction takes one argument, the direction bit")
        return fixed_direction(int(args[0]))
    if name == "biased_j":
        if len(args) != 1:
            raise ValueError("biased-j takes one argument, the probability of j=0")
        return biased_j(float(args[0]))
    if name == "arbitrary_state":
        return arbitrary_state(_named_state(args, d))
    if args:
        raise ValueError(f"strategy {name!r} takes no arguments")
    spec = StrategySpec(party, name)
    build(spec)
    return spec


def _named_state(args: list[str], d: int):
    kind, rest = (args[0], args[1:]) if args else ("product", [])
    if kind == "product":
        k, l = (int(v) for v in rest) if rest else (0, 0)
        return product_state(d, k, l)
    if kind == "mixed":
        return maximally_mixed(d)
    if kind == "bell":
        a, b = (int(v) for v in rest)
        return bell_state(d, BellLabel(a, b))
    if kind == "uniform":
        # equal superposition over the whole product basis
        return PureState(np.full(d * d, 1 / math.sqrt(d * d), dtype=complex), d)
    raise ValueError(f"unknown named state {kind!r}; use product, mixed, bell or uniform")
