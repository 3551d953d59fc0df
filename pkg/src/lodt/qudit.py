"""Dense linear algebra for a pair of qudits ``C^d_A ⊗ C^d_B``.

Amplitudes are ordered over the product basis ``|k>_A |l>_B`` with flat index
``k * d + l``.  The agreed entangled basis is the generalized (Weyl) Bell
basis::

    |psi_(a,b)> = d**-0.5 * sum_k  omega**(b*k) |k>_A |k + a mod d>_B

with ``omega = exp(2 pi i / d)``.  Datum ``i`` and label ``(a, b)`` are related
by ``i = a*d + b + 1``.
"""

from __future__ import annotations

import functools
from typing import NamedTuple, Union

import numpy as np

MIN_D = 2
MAX_D = 16

SUBSYSTEMS = ("A", "B")


class DimensionError(ValueError):
    pass


def check_dimension(d: int) -> int:
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)):
        raise DimensionError(f"dimension must be an integer, got {d!r}")
    if not MIN_D <= d <= MAX_D:
        raise DimensionError(f"dimension must lie in [{MIN_D}, {MAX_D}], got {d}")
    return int(d)


class BellLabel(NamedTuple):
    a: int
    b: int

    def datum(self, d: int) -> int:
        self.check(d)
        return self.a * d + self.b + 1

    @classmethod
    def from_datum(cls, i: int, d: int) -> "BellLabel":
        if not 1 <= i <= d * d:
            raise ValueError(f"datum must lie in [1, {d * d}], got {i}")
        a, b = divmod(i - 1, d)
        return cls(a, b)

    def check(self, d: int) -> None:
        if not (0 <= self.a < d and 0 <= self.b < d):
            raise ValueError(f"label {tuple(self)} out of range for d={d}")


class PureState:
    """Unit vector on the bipartite space (or on one qudit when ``parties=1``)."""

    __slots__ = ("d", "amplitudes")

    def __init__(self, amplitudes, d: int | None = None, parties: int = 2):
        vec = np.array(amplitudes, dtype=complex).reshape(-1)
        if d is None:
            d = int(round(vec.size ** (1 / parties)))
        d = check_dimension(d)
        if vec.size != d**parties:
            raise DimensionError(f"expected {d ** parties} amplitudes, got {vec.size}")
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state must have unit norm, got {norm!r}")
        vec.flags.writeable = False
        self.d = d
        self.amplitudes = vec

    def __repr__(self):
        return f"PureState(d={self.d}, amplitudes={self.amplitudes!r})"


class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite matrix."""

    __slots__ = ("d", "matrix")

    def __init__(self, matrix, d: int | None = None, parties: int = 2):
        rho = np.array(matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DimensionError(f"density operator must be square, got shape {rho.shape}")
        if d is None:
            d = int(round(rho.shape[0] ** (1 / parties)))
        d = check_dimension(d)
        if rho.shape[0] != d**parties:
            raise DimensionError(f"expected a {d ** parties}-dimensional operator, got {rho.shape[0]}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValueError("density operator must be Hermitian")
        if abs(np.trace(rho) - 1.0) > 1e-12:
            raise ValueError(f"density operator must have unit trace, got {np.trace(rho)!r}")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
            raise ValueError("density operator must be positive semidefinite")
        rho.flags.writeable = False
        self.d = d
        self.matrix = rho

    def __repr__(self):
        return f"DensityOperator(d={self.d}, shape={self.matrix.shape})"


State = Union[PureState, DensityOperator]


def _trusted_pure(vec: np.ndarray, d: int) -> PureState:
    # Skips validation for vectors produced by exact projections.
    state = PureState.__new__(PureState)
    vec = np.asarray(vec, dtype=complex)
    vec.flags.writeable = False
    state.d = d
    state.amplitudes = vec
    return state


def _trusted_density(rho: np.ndarray, d: int) -> DensityOperator:
    state = DensityOperator.__new__(DensityOperator)
    rho = np.asarray(rho, dtype=complex)
    rho.flags.writeable = False
    state.d = d
    state.matrix = rho
    return state


def maximally_mixed(d: int) -> DensityOperator:
    d = check_dimension(d)
    return DensityOperator(np.eye(d * d) / (d * d), d)


def product_state(d: int, k: int, l: int) -> PureState:
    """Computational basis state ``|k>_A |l>_B``."""
    d = check_dimension(d)
    if not (0 <= k < d and 0 <= l < d):
        raise ValueError(f"basis indices ({k}, {l}) out of range for d={d}")
    vec = np.zeros(d * d, dtype=complex)
    vec[k * d + l] = 1.0
    return PureState(vec, d)


def as_density(state: State) -> DensityOperator:
    if isinstance(state, DensityOperator):
        return state
    vec = state.amplitudes
    return _trusted_density(np.outer(vec, vec.conj()), state.d)


@functools.lru_cache(maxsize=None)
def bell_basis(d: int) -> np.ndarray:
    """Unitary whose column ``i - 1`` is the Bell state for datum ``i``."""
    d = check_dimension(d)
    omega = np.exp(2j * np.pi / d)
    basis = np.zeros((d * d, d * d), dtype=complex)
    ks = np.arange(d)
    for a in range(d):
        for b in range(d):
            col = a * d + b
            basis[ks * d + (ks + a) % d, col] = omega ** ((b * ks) % d) / np.sqrt(d)
    basis.flags.writeable = False
    return basis


def bell_state(d: int, label: BellLabel | tuple[int, int]) -> PureState:
    d = check_dimension(d)
    label = BellLabel(*label)
    label.check(d)
    return _trusted_pure(bell_basis(d)[:, label.a * d + label.b].copy(), d)


def _normalize_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of one index from a normalized probability vector."""
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    idx = min(idx, probs.size - 1)
    while probs[idx] <= 0:  # never land on a zero-probability outcome
        idx -= 1
    return idx


def bell_outcome_distribution(state: State) -> np.ndarray:
    """Born-rule probabilities over the d² Bell labels, indexed by ``datum - 1``."""
    if not isinstance(state, (PureState, DensityOperator)):
        raise TypeError(f"expected a PureState or DensityOperator, got {type(state).__name__}")
    basis = bell_basis(state.d)
    if isinstance(state, PureState):
        if state.amplitudes.size != state.d**2:
            raise DimensionError("Bell measurement needs a bipartite state")
        probs = np.abs(basis.conj().T @ state.amplitudes) ** 2
    else:
        if state.matrix.shape[0] != state.d**2:
            raise DimensionError("Bell measurement needs a bipartite state")
        probs = np.einsum("ji,jk,ki->i", basis.conj(), state.matrix, basis).real
    return _normalize_probs(probs)


def bell_measure(state: State, rng: np.random.Generator) -> tuple[BellLabel, PureState]:
    probs = bell_outcome_distribution(state)
    idx = sample_index(probs, rng)
    label = BellLabel(*divmod(idx, state.d))
    return label, bell_state(state.d, label)


def _subsystem_axis(subsystem: str) -> int:
    if subsystem not in SUBSYSTEMS:
        raise ValueError(f"subsystem must be 'A' or 'B', got {subsystem!r}")
    return SUBSYSTEMS.index(subsystem)


def computational_distribution(state: State, subsystem: str) -> np.ndarray:
    """Probabilities of the local computational-basis outcomes on one qudit."""
    return _normalize_probs(np.diag(reduced_density(state, subsystem).matrix).real.copy())


def project_computational(state: State, subsystem: str, outcome: int) -> State:
    """Normalized post-measurement state for a given local outcome."""
    axis = _subsystem_axis(subsystem)
    d = state.d
    if not 0 <= outcome < d:
        raise ValueError(f"outcome {outcome} out of range for d={d}")
    if isinstance(state, PureState):
        psi = np.array(state.amplitudes).reshape(d, d)
        keep = np.zeros_like(psi)
        if axis == 0:
            keep[outcome, :] = psi[outcome, :]
        else:
            keep[:, outcome] = psi[:, outcome]
        norm = np.linalg.norm(keep)
        if norm == 0:
            raise ValueError(f"outcome {outcome} has zero probability")
        return _trusted_pure((keep / norm).reshape(-1), d)
    rho = np.array(state.matrix).reshape(d, d, d, d)
    mask = np.zeros((d, d))
    if axis == 0:
        mask[outcome, :] = 1.0
    else:
        mask[:, outcome] = 1.0
    mask = mask.reshape(-1)
    flat = rho.reshape(d * d, d * d) * np.outer(mask, mask)
    p = np.trace(flat).real
    if p <= 0:
        raise ValueError(f"outcome {outcome} has zero probability")
    return _trusted_density(flat / p, d)


def computational_measure(state: State, subsystem: str, rng: np.random.Generator) -> tuple[int, State]:
    probs = computational_distribution(state, subsystem)
    outcome = sample_index(probs, rng)
    return outcome, project_computational(state, subsystem, outcome)


def reduced_density(state: State, subsystem: str) -> DensityOperator:
    """Partial trace over the complementary qudit."""
    axis = _subsystem_axis(subsystem)
    d = state.d
    if isinstance(state, PureState):
        if state.amplitudes.size != d * d:
            raise DimensionError("partial trace needs a bipartite state")
        psi = state.amplitudes.reshape(d, d)
        if axis == 1:
            psi = psi.T
        rho = psi @ psi.conj().T
    else:
        if state.matrix.shape[0] != d * d:
            raise DimensionError("partial trace needs a bipartite state")
        r = state.matrix.reshape(d, d, d, d)
        rho = np.einsum("ijkj->ik", r) if axis == 0 else np.einsum("jijk->ik", r)
    return _trusted_density(rho, d)


def state_to_json(state: State | None):
    if state is None:
        return None
    if isinstance(state, PureState):
        return {
            "form": "pure",
            "d": state.d,
            "amplitudes": [[float(c.real), float(c.imag)] for c in state.amplitudes],
        }
    return {
        "form": "density",
        "d": state.d,
        "matrix": [[[float(c.real), float(c.imag)] for c in row] for row in state.matrix],
    }


def state_from_json(doc) -> State | None:
    if doc is None:
        return None
    d = doc["d"]
    if doc["form"] == "pure":
        vec = np.array([complex(re, im) for re, im in doc["amplitudes"]])
        return PureState(vec, d)
    if doc["form"] == "density":
        rho = np.array([[complex(re, im) for re, im in row] for row in doc["matrix"]])
        return DensityOperator(rho, d)
    raise ValueError(f"unknown state form {doc['form']!r}")
