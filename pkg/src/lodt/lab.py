"""Monte Carlo harness and empirical checks of the security claims."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .engine import (
    Execution,
    LearningCertificate,
    ProtocolConfig,
    ProtocolViolation,
    Transcript,
    certify_learning,
    run_protocol,
)
from .geometry import GeometryConfig, SpacetimePoint, causally_precedes
from .qudit import State, bell_outcome_distribution
from .strategies import StrategySpec, build

STATS_SCHEMA = "lodt.stats/1"
BUCKETS = ("Q_0", "Q_1", "Y", "other")
CLAIM_SIGMAS = 3.0


def trial_seed(master_seed: int, index: int) -> int:
    """Per-trial seed derived from ``(master_seed, index)`` only."""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def wilson_interval(count: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = binomtest(count, n).proportion_ci(confidence_level=confidence, method="wilson")
    return (float(ci.low), float(ci.high))


def location_bucket(point: SpacetimePoint, geometry: GeometryConfig) -> str:
    for name, ref in (("Q_0", geometry.q_point(0)), ("Q_1", geometry.q_point(1)),
                      ("Y", geometry.y_point())):
        if point.isclose(ref):
            return name
    return "other"


def in_cone_intersection(point: SpacetimePoint, geometry: GeometryConfig) -> bool:
    return causally_precedes(geometry.q_point(0), point) and causally_precedes(geometry.q_point(1), point)


def a_dependent_outputs_outside(tr: Transcript) -> list[int]:
    """Indices of outputs that depend on Bob's access to A yet lie outside ``L(Q_j)``."""
    j = tr.alice_j()
    if j is None:
        return []
    q_j = tr.config.geometry.q_point(j)
    tainted = [False] * len(tr.events)
    bad = []
    for n, ev in enumerate(tr.events):
        touches_a = "A" in ev.payload.get("subsystems", ()) and (
            ev.actor == "bob" or (ev.kind == "Handoff" and ev.payload.get("to_actor") == "bob"))
        tainted[n] = touches_a or any(tainted[dep] for dep in ev.deps)
        if ev.kind == "Output" and tainted[n] and not causally_precedes(q_j, ev.location):
            bad.append(n)
    return bad


@dataclass
class SummaryStats:
    config: ProtocolConfig
    trials: int
    master_seed: int
    location_counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(BUCKETS, 0))
    identified: int = 0
    a_certified: int = 0
    engine_violations: int = 0
    claim_i_violations: int = 0
    outside_intersection: int = 0
    outcome_counts: dict[int, int] = field(default_factory=dict)

    def frequency(self, bucket: str) -> float:
        return self.location_counts[bucket] / self.trials

    @property
    def q_point_frequency(self) -> float:
        """Fraction of trials where Bob learns at the transfer point ``Q_j``."""
        return (self.location_counts["Q_0"] + self.location_counts["Q_1"]) / self.trials

    @property
    def learned_frequency(self) -> float:
        return sum(self.location_counts.values()) / self.trials

    @property
    def identification_rate(self) -> float:
        return self.identified / self.trials

    @property
    def outside_fraction(self) -> float:
        return self.outside_intersection / self.trials

    @property
    def claim_radius(self) -> float:
        return CLAIM_SIGMAS * math.sqrt(0.25 / self.trials)

    @property
    def claim_ii_exceeded(self) -> bool:
        return self.outside_fraction > 0.5 + self.claim_radius

    def to_json(self) -> dict:
        def entry(count):
            lo, hi = wilson_interval(count, self.trials)
            return {"count": count, "frequency": count / self.trials, "ci_low": lo, "ci_high": hi}

        return {
            "schema": STATS_SCHEMA,
            "config": self.config.to_json(),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "locations": {name: entry(self.location_counts[name]) for name in BUCKETS},
            "identification": entry(self.identified),
            "a_certified": entry(self.a_certified),
            "outside_intersection": entry(self.outside_intersection),
            "claim_radius": self.claim_radius,
            "claim_ii_exceeded": self.claim_ii_exceeded,
            "engine_violations": self.engine_violations,
            "claim_i_violations": self.claim_i_violations,
            "outcome_counts": {str(k): v for k, v in sorted(self.outcome_counts.items())},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SummaryStats":
        if doc.get("schema") != STATS_SCHEMA:
            raise ValueError(f"unsupported stats schema {doc.get('schema')!r}")
        return cls(
            config=ProtocolConfig.from_json(doc["config"]),
            trials=doc["trials"],
            master_seed=doc["master_seed"],
            location_counts={name: doc["locations"][name]["count"] for name in BUCKETS},
            identified=doc["identification"]["count"],
            a_certified=doc["a_certified"]["count"],
            engine_violations=doc["engine_violations"],
            claim_i_violations=doc["claim_i_violations"],
            outside_intersection=doc["outside_intersection"]["count"],
            outcome_counts={int(k): v for k, v in doc["outcome_counts"].items()},
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["location", "count", "frequency", "ci_low", "ci_high"])
        for name in BUCKETS:
            count = self.location_counts[name]
            lo, hi = wilson_interval(count, self.trials)
            writer.writerow([name, count, repr(count / self.trials), repr(lo), repr(hi)])
        return buf.getvalue()


def _run_trials(cfg: ProtocolConfig, master_seed: int, start: int, stop: int) -> list[tuple]:
    out = []
    for index in range(start, stop):
        trial_cfg = replace(cfg, seed=trial_seed(master_seed, index))
        try:
            tr = run_protocol(trial_cfg, "random")
        except ProtocolViolation as exc:
            out.append((exc.kind, None, (), None, None, 0))
            continue
        ans = tr.answer()
        out.append((None, tr.alice_j(), tr.bob_coins(), tr.datum,
                    None if ans is None else ans.payload["datum"],
                    len(a_dependent_outputs_outside(tr))))
    return out


def monte_carlo(cfg: ProtocolConfig, trials: int, master_seed: int | None = None,
                workers: int = 1) -> SummaryStats:
    """Run ``trials`` independent instances with uniformly drawn data.

    Learning locations come from exact certification of the realised coin
    values ``(j, Bob's coins)``; results do not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError(f"trial count must be at least 1, got {trials}")
    master_seed = cfg.seed if master_seed is None else int(master_seed)
    if workers > 1:
        bounds = np.linspace(0, trials, workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = pool.map(_run_trials, [cfg] * workers, [master_seed] * workers,
                              bounds[:-1].tolist(), bounds[1:].tolist())
            results = [row for chunk in chunks for row in chunk]
    else:
        results = _run_trials(cfg, master_seed, 0, trials)

    stats = SummaryStats(cfg, trials, master_seed)
    geometry = cfg.geometry
    certificates: dict[tuple, LearningCertificate] = {}
    for violation, j, coins, datum, answer, tainted in results:
        if violation is not None:
            stats.engine_violations += 1
            continue
        stats.claim_i_violations += tainted
        cert = certificates.get((j, coins))
        if cert is None:
            cert = certificates[(j, coins)] = certify_learning(cfg, cfg.bob, j, coins)
        if answer is not None:
            stats.outcome_counts[answer] = stats.outcome_counts.get(answer, 0) + 1
            stats.identified += answer == datum
        if "a" in cert.certified_components:
            stats.a_certified += 1
        if cert.certified:
            loc = cert.learning_location
            stats.location_counts[location_bucket(loc, geometry)] += 1
            if not causally_precedes(geometry.q_point(j), loc):
                stats.claim_i_violations += 1
            if not in_cone_intersection(loc, geometry):
                stats.outside_intersection += 1
    return stats


@dataclass(frozen=True)
class ClaimReport:
    claim: str
    passed: bool
    value: float
    bound: float
    detail: str

    def to_json(self) -> dict:
        return {"claim": self.claim, "passed": self.passed, "value": self.value,
                "bound": self.bound, "detail": self.detail}


def verify_claim_i(stats: SummaryStats) -> ClaimReport:
    """No certified learning, and no A-dependent output, outside ``L(Q_j)``."""
    n = stats.claim_i_violations
    return ClaimReport("i", n == 0, float(n), 0.0,
                       f"{n} learning events outside the future cone of Q_j")


def verify_claim_ii(stats: SummaryStats) -> ClaimReport:
    """Certified learning outside ``L(Q_0) ∩ L(Q_1)`` happens at most half the time."""
    frac, bound = stats.outside_fraction, 0.5 + stats.claim_radius
    return ClaimReport("ii", frac <= bound, frac, bound,
                       f"certified learning outside L(Q_0)∩L(Q_1) in {stats.outside_intersection}"
                       f"/{stats.trials} trials")


# --------------------------------------------------------------------------- #
#                          classical XOR variant                              #
# --------------------------------------------------------------------------- #


def classical_xor_run(j: int, b0: int, b1: int,
                      geometry: GeometryConfig | None = None) -> Transcript:
    """Alice splits ``b = b0 ^ b1`` into a bit at P and a bit at ``Q_j``.

    Bob copies ``b0`` to both transfer points, so he can combine it with
    ``b1`` wherever Alice turns up.
    """
    if j not in (0, 1) or b0 not in (0, 1) or b1 not in (0, 1):
        raise ValueError("j, b0 and b1 must be bits")
    geometry = geometry or GeometryConfig()
    cfg = ProtocolConfig(d=2, geometry=geometry,
                         alice=StrategySpec("alice", "xor_bits", {"j": j, "b0": b0, "b1": b1}),
                         bob=StrategySpec("bob", "classical_broadcast"), seed=0)
    bob = build(cfg.bob)
    ex = Execution(cfg, bob, outcomes=None, coins=None, variant="classical_xor")
    ex.datum = b0 ^ b1
    P, q_j = geometry.origin, geometry.q_point(j)

    def give(key, value, point):
        ev = ex.record("Broadcast", "alice", point, {"key": key, "value": value,
                                                     "targets": [point.as_list()]})
        ex.add_message(ev, key, value, [point])

    give("b0", b0, P)
    ex.schedule(q_j, lambda: give("b1", b1, q_j), "alice")
    ex.schedule(P, bob.at_P, "bob")
    for index in (0, 1):
        ex.schedule(geometry.q_point(index), lambda ctx, index=index: bob.at_Q(ctx, index), "bob")
    return ex.execute()


def certify_classical(j: int, geometry: GeometryConfig | None = None) -> LearningCertificate:
    """Certify the broadcast attack over all four ``(b0, b1)`` splits."""
    locations: list[SpacetimePoint] = []
    hits = 0
    for b0 in (0, 1):
        for b1 in (0, 1):
            ans = classical_xor_run(j, b0, b1, geometry).answer()
            if ans is not None and ans.payload["datum"] == b0 ^ b1:
                hits += 1
                if not any(ans.location.isclose(p) for p in locations):
                    locations.append(ans.location)
    certified = hits == 4 and len(locations) == 1
    return LearningCertificate(certified, locations[0] if certified else None,
                               1.0 if certified else hits / 4)


def alice_cheat_distribution(state: State, d: int) -> np.ndarray:
    """Distribution of the datum Bob reads out when Alice hands over ``state``."""
    if state.d != d:
        raise ValueError(f"state has d={state.d}, expected d={d}")
    probs = bell_outcome_distribution(state)
    assert abs(probs.sum() - 1.0) < 1e-10
    return probs


def shipped_bob_specs(d: int = 2) -> list[StrategySpec]:
    """Every non-violating Bob strategy in the quantum-protocol catalogue."""
    return [StrategySpec("bob", "honest"),
            StrategySpec("bob", "fixed_direction", {"k": 0}),
            StrategySpec("bob", "fixed_direction", {"k": 1}),
            StrategySpec("bob", "measure_and_resend"),
            StrategySpec("bob", "classical_broadcast")]


def summarize(stats: SummaryStats, claims: Sequence[ClaimReport]) -> str:
    lines = [f"trials={stats.trials} d={stats.config.d} alice={stats.config.alice.label()} "
             f"bob={stats.config.bob.label()} master_seed={stats.master_seed}"]
    for name in BUCKETS:
        lo, hi = wilson_interval(stats.location_counts[name], stats.trials)
        lines.append(f"  learn at {name:<5} {stats.frequency(name):.4f}  [{lo:.4f}, {hi:.4f}]")
    lines.append(f"  identification rate {stats.identification_rate:.4f}")
    lines.append(f"  engine violations {stats.engine_violations}")
    for claim in claims:
        status = "PASS" if claim.passed else "FAIL"
        lines.append(f"  claim ({claim.claim}) {status}: {claim.detail} "
                     f"(value {claim.value:.4f}, bound {claim.bound:.4f})")
    return "\n".join(lines)
