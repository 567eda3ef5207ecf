"""Scenario configuration: YAML schema, validation, and object builders.

A scenario file is a YAML (or JSON) mapping; unknown keys are rejected and
validation errors name the offending field path.  The full schema with
defaults is documented in the README.  Numeric defaults follow the
reporting pipeline's presets: clamp range [0, 14], adjacency radius 1e-5,
delta 0.01, dt 0.1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from .csvio import read_matrix_csv
from .exceptions import ConfigError
from .model import EpidemicState, ModelKind, TransmissionNetwork
from .privacy import PrivacySpec, amplified_epsilon
from .reproduction import Partition
from .seeding import StreamRole, stream

__all__ = [
    "RandomNetworkConfig",
    "NetworkConfig",
    "InitialStateConfig",
    "PrivacyConfig",
    "Scenario",
    "load_scenario",
    "save_scenario",
    "build_network",
    "build_initial_state",
    "build_partition",
    "build_privacy_spec",
]

_MAX_GENERATOR_ATTEMPTS = 100


def _require_mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(node) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown} (allowed: {sorted(allowed)})")


def _get_number(node: dict, key: str, path: str, default=None):
    value = node.get(key, default)
    if value is None:
        raise ConfigError(f"{path}.{key}: required value missing")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    return float(value)


def _get_int(node: dict, key: str, path: str, default=None) -> int:
    value = node.get(key, default)
    if value is None:
        raise ConfigError(f"{path}.{key}: required value missing")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    return value


def _number_list(value, path: str) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{path}: expected a list of numbers, got {value!r}")
    out = []
    for idx, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{path}[{idx}]: expected a number, got {item!r}")
        out.append(float(item))
    return tuple(out)


def _pair(value, path: str) -> tuple[float, float]:
    pair = _number_list(value, path)
    if len(pair) != 2:
        raise ConfigError(f"{path}: expected exactly two numbers, got {len(pair)}")
    return pair  # type: ignore[return-value]


@dataclass(frozen=True)
class RandomNetworkConfig:
    n: int
    edge_density: float = 0.5
    beta_range: tuple[float, float] = (0.05, 0.3)
    gamma_range: tuple[float, float] = (0.1, 0.5)
    seed: int | None = None


@dataclass(frozen=True)
class NetworkConfig:
    """Exactly one source: inline matrices, CSV paths, or a generator."""

    matrix: tuple | None = None
    gamma: tuple | None = None
    matrix_csv: str | None = None
    gamma_csv: str | None = None
    random: RandomNetworkConfig | None = None


@dataclass(frozen=True)
class InitialStateConfig:
    x: tuple | float = 0.01
    r: tuple | float = 0.0
    s: tuple | None = None  # defaults to 1 - x - r


@dataclass(frozen=True)
class PrivacyConfig:
    enabled: bool = False
    epsilon0: float | None = None
    target_epsilon: float | None = None
    delta: float = 0.01
    k: float = 1e-5
    bounds: tuple[float, float] = (0.0, 14.0)
    clamp: tuple[float, float] | None = (0.0, 14.0)


@dataclass(frozen=True)
class Scenario:
    network: NetworkConfig
    initial: InitialStateConfig = InitialStateConfig()
    model: str = "sir"
    dt: float = 0.1
    steps: int = 100
    rn_interval: int = 1
    partition: tuple = ()  # empty means one whole-network cluster
    privacy: PrivacyConfig = PrivacyConfig()
    infection_floor: float = 1e-9
    output_dir: str = "out"
    seed: int = 0

    @property
    def model_kind(self) -> ModelKind:
        return ModelKind(self.model)

    def sampled_epochs(self) -> list[int]:
        return list(range(0, self.steps + 1, self.rn_interval))

    def to_dict(self) -> dict:
        raw = asdict(self)

        def clean(node):
            if isinstance(node, dict):
                return {k: clean(v) for k, v in node.items() if v is not None}
            if isinstance(node, tuple):
                return [clean(v) for v in node]
            return node

        out = clean(raw)
        # A disabled clamp is meaningful and must survive a round trip.
        if self.privacy.clamp is None:
            out["privacy"]["clamp"] = None
        return out


def _parse_network(node, path: str) -> NetworkConfig:
    node = _require_mapping(node, path)
    _reject_unknown(node, {"matrix", "gamma", "matrix_csv", "gamma_csv", "random"}, path)
    sources = [key for key in ("matrix", "matrix_csv", "random") if key in node]
    if len(sources) != 1:
        raise ConfigError(f"{path}: specify exactly one of matrix, matrix_csv, random")
    if "random" in node:
        rnd = _require_mapping(node["random"], f"{path}.random")
        _reject_unknown(rnd, {"n", "edge_density", "beta_range", "gamma_range", "seed"}, f"{path}.random")
        n = _get_int(rnd, "n", f"{path}.random")
        if n < 2:
            raise ConfigError(f"{path}.random.n: need at least 2 entities, got {n}")
        density = _get_number(rnd, "edge_density", f"{path}.random", 0.5)
        if not 0.0 < density <= 1.0:
            raise ConfigError(f"{path}.random.edge_density: must lie in (0, 1], got {density}")
        beta_range = _pair(rnd.get("beta_range", [0.05, 0.3]), f"{path}.random.beta_range")
        gamma_range = _pair(rnd.get("gamma_range", [0.1, 0.5]), f"{path}.random.gamma_range")
        seed = rnd.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError(f"{path}.random.seed: expected an integer, got {seed!r}")
        return NetworkConfig(
            random=RandomNetworkConfig(
                n=n, edge_density=density, beta_range=beta_range, gamma_range=gamma_range, seed=seed
            )
        )
    if "matrix_csv" in node:
        matrix_csv = node["matrix_csv"]
        gamma_csv = node.get("gamma_csv")
        if not isinstance(matrix_csv, str) or (gamma_csv is not None and not isinstance(gamma_csv, str)):
            raise ConfigError(f"{path}: matrix_csv and gamma_csv must be file paths")
        if gamma_csv is None:
            raise ConfigError(f"{path}.gamma_csv: required when loading the matrix from CSV")
        return NetworkConfig(matrix_csv=matrix_csv, gamma_csv=gamma_csv)
    matrix = node["matrix"]
    if not isinstance(matrix, list) or not matrix:
        raise ConfigError(f"{path}.matrix: expected a non-empty list of rows")
    rows = tuple(_number_list(row, f"{path}.matrix[{idx}]") for idx, row in enumerate(matrix))
    if any(len(row) != len(rows) for row in rows):
        raise ConfigError(f"{path}.matrix: must be square ({len(rows)} rows)")
    gamma = node.get("gamma")
    if gamma is None:
        gamma_tuple = tuple(0.5 for _ in rows)
    elif isinstance(gamma, (int, float)) and not isinstance(gamma, bool):
        gamma_tuple = tuple(float(gamma) for _ in rows)
    else:
        gamma_tuple = _number_list(gamma, f"{path}.gamma")
    return NetworkConfig(matrix=rows, gamma=gamma_tuple)


def _parse_initial(node, path: str) -> InitialStateConfig:
    if node is None:
        return InitialStateConfig()
    node = _require_mapping(node, path)
    _reject_unknown(node, {"x", "r", "s"}, path)

    def fraction_field(key: str, default):
        if key not in node:
            return default
        value = node[key]
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        return _number_list(value, f"{path}.{key}")

    s_value = fraction_field("s", None)
    if isinstance(s_value, float):
        raise ConfigError(f"{path}.s: must be a per-entity list when given")
    return InitialStateConfig(
        x=fraction_field("x", 0.01), r=fraction_field("r", 0.0), s=s_value
    )


def _parse_privacy(node, path: str) -> PrivacyConfig:
    if node is None:
        return PrivacyConfig()
    node = _require_mapping(node, path)
    _reject_unknown(
        node,
        {"enabled", "epsilon0", "target_epsilon", "delta", "k", "bounds", "clamp"},
        path,
    )
    enabled = node.get("enabled", False)
    if not isinstance(enabled, bool):
        raise ConfigError(f"{path}.enabled: expected true/false, got {enabled!r}")
    epsilon0 = node.get("epsilon0")
    target = node.get("target_epsilon")
    if epsilon0 is not None and target is not None:
        raise ConfigError(f"{path}: give epsilon0 or target_epsilon, not both")
    if enabled and epsilon0 is None and target is None:
        epsilon0 = 1.0  # reporting-pipeline preset
    for key, value in (("epsilon0", epsilon0), ("target_epsilon", target)):
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    clamp = node.get("clamp", [0.0, 14.0])
    return PrivacyConfig(
        enabled=enabled,
        epsilon0=None if epsilon0 is None else float(epsilon0),
        target_epsilon=None if target is None else float(target),
        delta=_get_number(node, "delta", path, 0.01),
        k=_get_number(node, "k", path, 1e-5),
        bounds=_pair(node.get("bounds", [0.0, 14.0]), f"{path}.bounds"),
        clamp=None if clamp is None else _pair(clamp, f"{path}.clamp"),
    )


def scenario_from_dict(raw: dict, path: str = "scenario") -> Scenario:
    raw = _require_mapping(raw, path)
    _reject_unknown(
        raw,
        {
            "network",
            "initial",
            "model",
            "dt",
            "steps",
            "rn_interval",
            "partition",
            "privacy",
            "infection_floor",
            "output_dir",
            "seed",
        },
        path,
    )
    if "network" not in raw:
        raise ConfigError(f"{path}.network: required section missing")
    model = raw.get("model", "sir")
    if model not in ("sis", "sir"):
        raise ConfigError(f"{path}.model: expected 'sis' or 'sir', got {model!r}")
    dt = _get_number(raw, "dt", path, 0.1)
    if dt <= 0:
        raise ConfigError(f"{path}.dt: must be positive, got {dt}")
    steps = _get_int(raw, "steps", path, 100)
    if steps < 0:
        raise ConfigError(f"{path}.steps: must be >= 0, got {steps}")
    rn_interval = _get_int(raw, "rn_interval", path, 1)
    if rn_interval < 1:
        raise ConfigError(f"{path}.rn_interval: must be >= 1, got {rn_interval}")
    partition_node = raw.get("partition", [])
    if not isinstance(partition_node, list) or any(
        not isinstance(block, list) for block in partition_node
    ):
        raise ConfigError(f"{path}.partition: expected a list of entity-index lists")
    partition = tuple(
        tuple(_require_index(v, f"{path}.partition[{q}][{idx}]") for idx, v in enumerate(block))
        for q, block in enumerate(partition_node)
    )
    floor = _get_number(raw, "infection_floor", path, 1e-9)
    if floor < 0:
        raise ConfigError(f"{path}.infection_floor: must be >= 0, got {floor}")
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ConfigError(f"{path}.output_dir: expected a path string")
    seed = _get_int(raw, "seed", path, 0)
    if seed < 0:
        raise ConfigError(f"{path}.seed: must be >= 0, got {seed}")
    scenario = Scenario(
        network=_parse_network(raw["network"], f"{path}.network"),
        initial=_parse_initial(raw.get("initial"), f"{path}.initial"),
        model=model,
        dt=dt,
        steps=steps,
        rn_interval=rn_interval,
        partition=partition,
        privacy=_parse_privacy(raw.get("privacy"), f"{path}.privacy"),
        infection_floor=floor,
        output_dir=output_dir,
        seed=seed,
    )
    # Fail fast on an inconsistent cluster layout (overlaps, gaps).
    if scenario.partition:
        n_hint = _partition_entity_count(scenario.partition)
        Partition.from_blocks(scenario.partition, n_hint)
    return scenario


def _require_index(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"{path}: expected a non-negative entity index, got {value!r}")
    return value


def _partition_entity_count(blocks) -> int:
    flat = [i for block in blocks for i in block]
    return max(flat) + 1 if flat else 0


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return scenario_from_dict(raw if raw is not None else {}, path="scenario")


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario.to_dict(), sort_keys=False))


def build_network(scenario: Scenario, base_dir=None) -> TransmissionNetwork:
    cfg = scenario.network
    if cfg.random is not None:
        return _generate_network(cfg.random, scenario.seed)
    if cfg.matrix_csv is not None:
        base = Path(base_dir) if base_dir is not None else Path(".")
        b = read_matrix_csv(base / cfg.matrix_csv)
        gamma = read_matrix_csv(base / cfg.gamma_csv).ravel()
        return TransmissionNetwork(b=b, gamma=gamma)
    return TransmissionNetwork(b=np.array(cfg.matrix), gamma=np.array(cfg.gamma))


def _generate_network(cfg: RandomNetworkConfig, scenario_seed: int) -> TransmissionNetwork:
    base_seed = cfg.seed if cfg.seed is not None else scenario_seed
    lo_b, hi_b = cfg.beta_range
    lo_g, hi_g = cfg.gamma_range
    if not (0.0 <= lo_b <= hi_b <= 1.0):
        raise ConfigError(f"beta_range must satisfy 0 <= lo <= hi <= 1, got {cfg.beta_range}")
    if not (0.0 < lo_g <= hi_g <= 1.0):
        raise ConfigError(f"gamma_range must satisfy 0 < lo <= hi <= 1, got {cfg.gamma_range}")
    for attempt in range(_MAX_GENERATOR_ATTEMPTS):
        rng = stream(base_seed, StreamRole.SCENARIO, ident=attempt)
        mask = rng.random((cfg.n, cfg.n)) < cfg.edge_density
        b = np.where(mask, rng.uniform(lo_b, hi_b, (cfg.n, cfg.n)), 0.0)
        gamma = rng.uniform(lo_g, hi_g, cfg.n)
        try:
            return TransmissionNetwork(b=b, gamma=gamma)
        except ConfigError:
            continue
    raise ConfigError(
        f"could not generate a strongly connected network in "
        f"{_MAX_GENERATOR_ATTEMPTS} attempts; raise edge_density"
    )


def build_initial_state(scenario: Scenario, net: TransmissionNetwork) -> EpidemicState:
    cfg = scenario.initial
    n = net.n

    def expand(value, name: str) -> np.ndarray:
        if isinstance(value, float):
            return np.full(n, value)
        arr = np.array(value, dtype=float)
        if arr.shape != (n,):
            raise ConfigError(f"initial.{name}: expected {n} entries, got {arr.size}")
        return arr

    x = expand(cfg.x, "x")
    r = expand(cfg.r, "r")
    s = 1.0 - x - r if cfg.s is None else expand(cfg.s, "s")
    try:
        return EpidemicState(t=0.0, s=s, x=x, r=r)
    except ConfigError as exc:
        raise ConfigError(f"initial state invalid: {exc}") from None


def build_partition(scenario: Scenario, net: TransmissionNetwork) -> Partition:
    if not scenario.partition:
        return Partition.whole(net.n)
    return Partition.from_blocks(scenario.partition, net.n)


def build_privacy_spec(scenario: Scenario, partition: Partition) -> PrivacySpec | None:
    """Privacy spec for the scenario, or None when privacy is off.

    A ``target_epsilon`` is translated into the largest per-authority
    epsilon0 whose shuffle-amplified level stays at or below the target for
    the smallest cluster.
    """
    cfg = scenario.privacy
    if not cfg.enabled:
        return None
    if cfg.epsilon0 is not None:
        epsilon0 = cfg.epsilon0
    else:
        sizes = [int(np.sum(partition.assignment == q)) for q in range(partition.m)]
        epsilon0 = _invert_amplification(cfg.target_epsilon, cfg.delta, min(sizes))
    return PrivacySpec(epsilon0=epsilon0, delta=cfg.delta, k=cfg.k, bounds=cfg.bounds)


def _invert_amplification(target: float, delta: float, cluster_size: int) -> float:
    if target <= 0:
        raise ConfigError(f"target_epsilon must be positive, got {target}")
    headroom = cluster_size / (8.0 * math.log(2.0 / delta)) - 1.0
    if headroom <= 0:
        raise ConfigError(
            f"clusters of size {cluster_size} are too small for shuffle "
            f"amplification at delta={delta}"
        )
    hi = math.log(headroom)
    if amplified_epsilon(hi, delta, cluster_size) <= target:
        return hi
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if amplified_epsilon(mid, delta, cluster_size) <= target:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise ConfigError(
            f"no positive epsilon0 reaches target epsilon {target} for "
            f"cluster size {cluster_size}"
        )
    return lo
