"""Reproduction numbers at entity, cluster, and network scale.

Entity-level quantities, for a network with transmission matrix ``b`` and
recovery rates ``gamma`` at a state ``(s, x)``:

    basic(i, j)            = b[i, j] / gamma[i]
    pseudo_effective(i, j) = s[i] * b[i, j] / gamma[i]
    effective(i, j)        = pseudo_effective(i, j) * x[j] / x[i]
    lern(i)                = sum_j effective(i, j)

The three full matrices are related by ``pseudo = diag(s) @ basic`` and
``effective = diag(x)^-1 @ pseudo @ diag(x)``; the similarity keeps their
spectra equal, so either yields the network-level effective reproduction
number through its spectral radius.

Cluster-level quantities average entity values with weights
``gamma[i] * x[i]`` over the members of each cluster of a partition; row
sums of the cluster matrix recover the cluster effective reproduction
numbers, and coarser partitions can be aggregated from finer ones without
revisiting entity data.

Infected fractions are floored (default ``1e-9``, standing in for "at least
one infected individual" when populations are unknown) before any effective
quantity is computed, since the definitions require strictly positive
infection everywhere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import ConfigError, ConvergenceError, UndefinedRatioError
from .model import EpidemicState, TransmissionNetwork

__all__ = [
    "DEFAULT_INFECTION_FLOOR",
    "DEFAULT_CLAMP",
    "MatrixKind",
    "LocalRnMatrix",
    "Partition",
    "ClusterRnMatrix",
    "floored_infections",
    "local_distributed_ern",
    "effective_row",
    "lern",
    "lern_vector",
    "lbrn",
    "build_matrix",
    "spectral_radius",
    "network_reproduction",
    "cern",
    "cern_vector",
    "cluster_matrix",
    "coarsen",
]

DEFAULT_INFECTION_FLOOR = 1e-9
DEFAULT_CLAMP = (0.0, 14.0)


class MatrixKind(enum.Enum):
    BASIC = "basic"
    PSEUDO_EFFECTIVE = "pseudo_effective"
    EFFECTIVE = "effective"


@dataclass(frozen=True, eq=False)
class LocalRnMatrix:
    """n-by-n entity-level reproduction number matrix of one kind."""

    kind: MatrixKind
    values: np.ndarray
    t: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ConfigError("reproduction matrix entries must be finite and >= 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint, exhaustive assignment of the n entities to m clusters.

    ``assignment[i]`` is the 0-based cluster index of entity i.  Every
    cluster must be non-empty; a single whole-network cluster is allowed.
    """

    m: int
    assignment: np.ndarray

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=int)
        if assignment.ndim != 1 or assignment.size == 0:
            raise ConfigError("partition assignment must be a non-empty 1-d sequence")
        if self.m < 1 or self.m > assignment.size:
            raise ConfigError(f"cluster count {self.m} invalid for {assignment.size} entities")
        if np.any(assignment < 0) or np.any(assignment >= self.m):
            raise ConfigError("cluster indices must lie in [0, m)")
        present = np.unique(assignment)
        if present.size != self.m:
            missing = sorted(set(range(self.m)) - set(present.tolist()))
            raise ConfigError(f"empty clusters in partition: {missing}")
        assignment = assignment.copy()
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    @property
    def n(self) -> int:
        return self.assignment.size

    def members(self, q: int) -> np.ndarray:
        if not 0 <= q < self.m:
            raise ConfigError(f"cluster index {q} out of range [0, {self.m})")
        return np.nonzero(self.assignment == q)[0]

    @classmethod
    def from_blocks(cls, blocks: Sequence[Iterable[int]], n: int | None = None) -> "Partition":
        """Build from explicit member lists, e.g. ``[[0, 1], [2, 3, 4]]``."""
        seen: dict[int, int] = {}
        for q, block in enumerate(blocks):
            block = list(block)
            if not block:
                raise ConfigError(f"cluster {q} is empty")
            for i in block:
                if i in seen:
                    raise ConfigError(f"entity {i} appears in clusters {seen[i]} and {q}")
                seen[i] = q
        if n is None:
            n = len(seen)
        missing = sorted(set(range(n)) - set(seen))
        if missing or len(seen) != n:
            raise ConfigError(f"clusters must cover entities 0..{n - 1} exactly (missing {missing})")
        assignment = np.empty(n, dtype=int)
        for i, q in seen.items():
            if not 0 <= i < n:
                raise ConfigError(f"entity index {i} out of range for n={n}")
            assignment[i] = q
        return cls(m=len(blocks), assignment=assignment)

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(m=n, assignment=np.arange(n))

    @classmethod
    def whole(cls, n: int) -> "Partition":
        return cls(m=1, assignment=np.zeros(n, dtype=int))


@dataclass(frozen=True, eq=False)
class ClusterRnMatrix:
    """m-by-m cluster-level effective reproduction number matrix."""

    values: np.ndarray
    t: float | None = None
    private: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ConfigError("cluster matrix entries must be finite and >= 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]


def floored_infections(x: np.ndarray, floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR) -> np.ndarray:
    """Infected fractions with the positivity floor applied.

    ``floor`` may be a scalar or a per-entity vector (one infected individual
    over each entity's population).  ``floor=0`` disables flooring, in which
    case any exact zero later trips an undefined-ratio error.
    """
    floor_arr = np.asarray(floor, dtype=float)
    if np.any(floor_arr < 0.0):
        raise ConfigError("infection floor must be >= 0")
    return np.maximum(np.asarray(x, dtype=float), floor_arr)


def _check_positive_infection(x_f: np.ndarray, i: int | None = None) -> None:
    if i is not None:
        if x_f[i] <= 0.0:
            raise UndefinedRatioError(
                f"x[{i}] is zero with flooring disabled; effective RN undefined"
            )
        return
    if np.any(x_f <= 0.0):
        bad = int(np.argmin(x_f))
        raise UndefinedRatioError(
            f"x[{bad}] is zero with flooring disabled; effective RN undefined"
        )


def effective_row(
    b_row: np.ndarray,
    gamma_i: float,
    s_i: float,
    x_f: np.ndarray,
    i: int,
    clamp: tuple[float, float] | None = None,
) -> np.ndarray:
    """Row i of the effective matrix from row i of B and public vectors.

    This is the single source of truth for entity-level effective values:
    entity sums, full matrices, and the aggregation pipeline all call it, so
    their floating-point results agree bit for bit.  The signature is the
    locality statement: row i depends only on that transmission row, the
    entity's own recovery and susceptible values, and the shared infection
    vector, so rows can be evaluated independently (entity-by-entity).
    """
    _check_positive_infection(x_f, i)
    row = (s_i / gamma_i) * b_row * x_f / x_f[i]
    if clamp is not None:
        row = np.clip(row, clamp[0], clamp[1])
    return row


def local_distributed_ern(
    net: TransmissionNetwork,
    state: EpidemicState,
    i: int,
    j: int,
    floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR,
) -> float:
    """Effective reproduction number contributed by entity j to entity i."""
    x_f = floored_infections(state.x, floor)
    _check_positive_infection(x_f, i)
    return float((state.s[i] / net.gamma[i]) * net.b[i, j] * x_f[j] / x_f[i])


def lern(
    net: TransmissionNetwork,
    state: EpidemicState,
    i: int,
    floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR,
) -> float:
    """Local effective reproduction number of entity i (row sum)."""
    x_f = floored_infections(state.x, floor)
    return float(np.sum(effective_row(net.b[i], net.gamma[i], state.s[i], x_f, i)))


def lbrn(net: TransmissionNetwork, i: int) -> float:
    """Local basic reproduction number of entity i."""
    return float(np.sum(net.b[i] / net.gamma[i]))


def lern_vector(
    net: TransmissionNetwork,
    state: EpidemicState,
    floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR,
) -> np.ndarray:
    """All local effective reproduction numbers at once.

    Fast path for trajectory scans; equals ``lern`` entrywise up to
    summation-order round-off.
    """
    x_f = floored_infections(state.x, floor)
    _check_positive_infection(x_f)
    return state.s * (net.b @ x_f) / (net.gamma * x_f)


def build_matrix(
    net: TransmissionNetwork,
    state: EpidemicState | None,
    kind: MatrixKind,
    floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR,
    clamp: tuple[float, float] | None = None,
) -> LocalRnMatrix:
    """Entity-level reproduction matrix of the requested kind.

    ``clamp=(lo, hi)`` projects entries into the given range (the reporting
    pipeline uses ``DEFAULT_CLAMP``); it is off by default for library use.
    """
    if kind is MatrixKind.BASIC:
        values = net.b / net.gamma[:, None]
        if clamp is not None:
            values = np.clip(values, clamp[0], clamp[1])
        return LocalRnMatrix(kind=kind, values=values, t=None)
    if state is None:
        raise ConfigError(f"{kind.value} matrix requires a state")
    if state.n != net.n:
        raise ConfigError(f"state has {state.n} entities, network has {net.n}")
    if kind is MatrixKind.PSEUDO_EFFECTIVE:
        values = state.s[:, None] * net.b / net.gamma[:, None]
        if clamp is not None:
            values = np.clip(values, clamp[0], clamp[1])
        return LocalRnMatrix(kind=kind, values=values, t=state.t)
    x_f = floored_infections(state.x, floor)
    rows = [
        effective_row(net.b[i], net.gamma[i], state.s[i], x_f, i, clamp=clamp)
        for i in range(net.n)
    ]
    return LocalRnMatrix(kind=kind, values=np.stack(rows), t=state.t)


def spectral_radius(matrix: np.ndarray, rtol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Perron root of a finite non-negative square matrix by power iteration.

    Iterates on ``M + I`` (the unit shift makes irreducible matrices
    primitive, so periodic structure cannot stall convergence) from the
    all-ones vector and returns the shifted dominant eigenvalue minus one.
    """
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"matrix must be square, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)) or np.any(mat < 0.0):
        raise ConfigError("spectral radius requires a finite non-negative matrix")
    n = mat.shape[0]
    if n == 1:
        return float(mat[0, 0])

    shifted = mat + np.eye(n)
    vec = np.full(n, 1.0 / np.sqrt(n))
    estimate = None
    for _ in range(max_iter):
        nxt = shifted @ vec
        norm = float(np.linalg.norm(nxt))
        if norm == 0.0:  # only possible for the zero matrix
            return 0.0
        vec = nxt / norm
        new_estimate = float(vec @ (shifted @ vec))
        if estimate is not None and abs(new_estimate - estimate) <= rtol * abs(new_estimate):
            return max(new_estimate - 1.0, 0.0)
        estimate = new_estimate
    raise ConvergenceError(
        f"power iteration did not converge within {max_iter} iterations"
    )


def network_reproduction(net: TransmissionNetwork, state: EpidemicState | None = None) -> float:
    """Network-level reproduction number: basic if no state, else effective."""
    basic = net.b / net.gamma[:, None]
    if state is None:
        return spectral_radius(basic)
    if state.n != net.n:
        raise ConfigError(f"state has {state.n} entities, network has {net.n}")
    return spectral_radius(state.s[:, None] * basic)


def _cluster_weights(gamma: np.ndarray, x_f: np.ndarray, members: np.ndarray) -> np.ndarray:
    return gamma[members] * x_f[members]


def cern(
    net: TransmissionNetwork,
    state: EpidemicState,
    partition: Partition,
    q: int,
    floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR,
) -> float:
    """Cluster effective reproduction number of cluster q.

    Weighted average of the members' entity-level values with weights
    ``gamma[i] * x[i]``.
    """
    members = partition.members(q)
    x_f = floored_infections(state.x, floor)
    _check_positive_infection(x_f)
    weights = _cluster_weights(net.gamma, x_f, members)
    values = np.array(
        [float(np.sum(effective_row(net.b[i], net.gamma[i], state.s[i], x_f, i))) for i in members]
    )
    return float(np.sum(weights * values) / np.sum(weights))


def cern_vector(
    net: TransmissionNetwork,
    state: EpidemicState,
    partition: Partition,
    floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR,
) -> np.ndarray:
    return np.array([cern(net, state, partition, q, floor) for q in range(partition.m)])


def _member_contribution(
    b_row: np.ndarray,
    gamma_i: float,
    s_i: float,
    x_f: np.ndarray,
    i: int,
    members_r: np.ndarray,
    clamp: tuple[float, float] | None,
) -> float:
    """gamma_i x_i times entity i's effective values summed over cluster r."""
    row = effective_row(b_row, gamma_i, s_i, x_f, i, clamp=clamp)
    return (gamma_i * x_f[i]) * float(np.sum(row[members_r]))


def cluster_matrix(
    net: TransmissionNetwork,
    state: EpidemicState,
    partition: Partition,
    floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR,
    clamp: tuple[float, float] | None = None,
) -> ClusterRnMatrix:
    """Cluster-level effective reproduction matrix over a partition.

    Entry (q, r) averages, with weights ``gamma[i] * x[i]`` over members i of
    cluster q, the effective values from members of cluster r.  Member
    contributions are summed in ascending value order, matching the
    aggregation pipeline so the privacy-off pipeline output is bit-identical.
    """
    x_f = floored_infections(state.x, floor)
    _check_positive_infection(x_f)
    m = partition.m
    member_lists = [partition.members(q) for q in range(m)]
    values = np.empty((m, m))
    for q in range(m):
        members_q = member_lists[q]
        denom = float(np.sum(_cluster_weights(net.gamma, x_f, members_q)))
        for r in range(m):
            members_r = member_lists[r]
            contribs = np.array(
                [
                    _member_contribution(
                        net.b[i], net.gamma[i], state.s[i], x_f, i, members_r, clamp
                    )
                    for i in members_q
                ]
            )
            values[q, r] = float(np.sum(np.sort(contribs)) / denom)
    return ClusterRnMatrix(values=values, t=state.t, private=False)


def coarsen(
    net: TransmissionNetwork,
    state: EpidemicState,
    fine: Partition,
    mapping: Mapping[int, int] | Sequence[int],
    floor: float | np.ndarray = DEFAULT_INFECTION_FLOOR,
) -> np.ndarray:
    """Coarse-cluster effective reproduction numbers from fine-cluster ones.

    ``mapping`` sends each fine cluster index to a coarse cluster index and
    must cover every fine cluster; every coarse index must be hit.  The
    result equals a direct computation on the merged clusters: coarse values
    are weight-averaged fine values with weights ``sum(gamma[i] * x[i])``
    over each fine cluster.
    """
    if isinstance(mapping, Mapping):
        missing = sorted(set(range(fine.m)) - set(mapping))
        if missing:
            raise ConfigError(f"mapping does not cover fine clusters {missing}")
        target = np.array([int(mapping[q]) for q in range(fine.m)])
    else:
        target = np.asarray(mapping, dtype=int)
        if target.shape != (fine.m,):
            raise ConfigError(
                f"mapping must assign all {fine.m} fine clusters, got shape {target.shape}"
            )
    if np.any(target < 0):
        raise ConfigError("coarse cluster indices must be >= 0")
    m_coarse = int(target.max()) + 1
    if set(target.tolist()) != set(range(m_coarse)):
        raise ConfigError("mapping must be surjective onto 0..max coarse index")

    x_f = floored_infections(state.x, floor)
    fine_cerns = cern_vector(net, state, fine, floor)
    fine_weights = np.array(
        [float(np.sum(_cluster_weights(net.gamma, x_f, fine.members(q)))) for q in range(fine.m)]
    )
    coarse = np.zeros(m_coarse)
    for o in range(m_coarse):
        sel = target == o
        coarse[o] = float(np.sum(fine_weights[sel] * fine_cerns[sel]) / np.sum(fine_weights[sel]))
    return coarse
