import numpy as np
import pytest
import yaml

import repronet as rn
from repronet import scenario as sc
from repronet.exceptions import ConfigError


def write_config(tmp_path, text):
    path = tmp_path / "scenario.yaml"
    path.write_text(text)
    return path


MINIMAL = """
network:
  matrix:
    - [0.1, 0.2]
    - [0.3, 0.1]
"""


def test_minimal_config_fills_defaults(tmp_path):
    scenario = sc.load_scenario(write_config(tmp_path, MINIMAL))
    assert scenario.dt == 0.1
    assert scenario.privacy.k == 1e-5
    assert scenario.privacy.delta == 0.01
    assert scenario.privacy.clamp == (0.0, 14.0)
    assert scenario.model == "sir"
    net = sc.build_network(scenario)
    assert net.n == 2
    np.testing.assert_array_equal(net.gamma, [0.5, 0.5])
    state = sc.build_initial_state(scenario, net)
    np.testing.assert_allclose(state.x, 0.01)
    partition = sc.build_partition(scenario, net)
    assert partition.m == 1


def test_round_trip_preserves_scenario(tmp_path):
    config = """
network:
  matrix: [[0.1, 0.2], [0.3, 0.1]]
  gamma: [0.4, 0.5]
initial:
  x: [0.02, 0.05]
model: sis
dt: 0.05
steps: 42
rn_interval: 7
partition: [[0], [1]]
privacy:
  enabled: true
  epsilon0: 2.0
  clamp: null
seed: 9
"""
    scenario = sc.load_scenario(write_config(tmp_path, config))
    assert scenario.privacy.clamp is None
    out = tmp_path / "resaved.yaml"
    sc.save_scenario(scenario, out)
    again = sc.load_scenario(out)
    assert again == scenario


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown keys"):
        sc.load_scenario(write_config(tmp_path, MINIMAL + "typo_key: 1\n"))
    nested = MINIMAL + "privacy:\n  enabled: false\n  sigma: 1.0\n"
    with pytest.raises(ConfigError, match="scenario.privacy"):
        sc.load_scenario(write_config(tmp_path, nested))


def test_missing_file_and_bad_yaml(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        sc.load_scenario(tmp_path / "nope.yaml")
    with pytest.raises(ConfigError, match="invalid YAML"):
        sc.load_scenario(write_config(tmp_path, "network: [unbalanced\n"))


def test_overlapping_clusters_rejected(tmp_path):
    config = MINIMAL + "partition: [[0, 1], [1]]\n"
    with pytest.raises(ConfigError, match="clusters"):
        sc.load_scenario(write_config(tmp_path, config))


def test_invalid_initial_state(tmp_path):
    config = MINIMAL + "initial:\n  x: 0.8\n  r: 0.4\n"
    scenario = sc.load_scenario(write_config(tmp_path, config))
    net = sc.build_network(scenario)
    with pytest.raises(ConfigError, match="initial state"):
        sc.build_initial_state(scenario, net)


def test_non_square_matrix_rejected(tmp_path):
    config = """
network:
  matrix: [[0.1, 0.2, 0.3], [0.3, 0.1, 0.0]]
"""
    with pytest.raises(ConfigError, match="square"):
        sc.load_scenario(write_config(tmp_path, config))


def test_random_network_generation_deterministic(tmp_path):
    config = """
network:
  random:
    n: 8
    edge_density: 0.4
    beta_range: [0.05, 0.3]
    gamma_range: [0.1, 0.4]
seed: 5
"""
    scenario = sc.load_scenario(write_config(tmp_path, config))
    net_a = sc.build_network(scenario)
    net_b = sc.build_network(scenario)
    np.testing.assert_array_equal(net_a.b, net_b.b)
    np.testing.assert_array_equal(net_a.gamma, net_b.gamma)
    assert net_a.n == 8


def test_random_network_generation_gives_up(tmp_path):
    config = """
network:
  random:
    n: 6
    edge_density: 0.000000001
"""
    scenario = sc.load_scenario(write_config(tmp_path, config))
    with pytest.raises(ConfigError, match="attempts"):
        sc.build_network(scenario)


def test_csv_network_source(tmp_path):
    from repronet import csvio

    b = np.array([[0.1, 0.2], [0.3, 0.05]])
    csvio.write_matrix_csv(tmp_path / "b.csv", b)
    csvio.write_matrix_csv(tmp_path / "gamma.csv", np.array([[0.2, 0.4]]))
    config = """
network:
  matrix_csv: b.csv
  gamma_csv: gamma.csv
"""
    scenario = sc.load_scenario(write_config(tmp_path, config))
    net = sc.build_network(scenario, base_dir=tmp_path)
    np.testing.assert_array_equal(net.b, b)
    np.testing.assert_array_equal(net.gamma, [0.2, 0.4])


def test_csv_network_zero_row_rejected_downstream(tmp_path):
    from repronet import csvio

    csvio.write_matrix_csv(tmp_path / "b.csv", np.array([[0.0, 0.0], [0.3, 0.1]]))
    csvio.write_matrix_csv(tmp_path / "gamma.csv", np.array([[0.2, 0.4]]))
    config = """
network:
  matrix_csv: b.csv
  gamma_csv: gamma.csv
"""
    scenario = sc.load_scenario(write_config(tmp_path, config))
    with pytest.raises(ConfigError, match="strongly connected"):
        sc.build_network(scenario, base_dir=tmp_path)


def test_privacy_spec_with_epsilon0(tmp_path):
    config = MINIMAL + "partition: [[0], [1]]\nprivacy:\n  enabled: true\n  epsilon0: 1.5\n"
    scenario = sc.load_scenario(write_config(tmp_path, config))
    net = sc.build_network(scenario)
    spec = sc.build_privacy_spec(scenario, sc.build_partition(scenario, net))
    assert spec.epsilon0 == 1.5


def test_privacy_budget_defaults_to_one(tmp_path):
    config = MINIMAL + "privacy:\n  enabled: true\n"
    scenario = sc.load_scenario(write_config(tmp_path, config))
    assert scenario.privacy.epsilon0 == 1.0


def test_privacy_spec_with_target_epsilon():
    blocks = [list(range(0, 600)), list(range(600, 1200))]
    partition = rn.Partition.from_blocks(blocks)
    scenario = sc.Scenario(
        network=sc.NetworkConfig(matrix=((0.1,),), gamma=(0.5,)),
        privacy=sc.PrivacyConfig(enabled=True, target_epsilon=0.3, delta=0.01),
    )
    spec = sc.build_privacy_spec(scenario, partition)
    amplified = rn.amplified_epsilon(spec.epsilon0, 0.01, 600)
    assert amplified <= 0.3
    assert amplified > 0.25  # close to the target, not wildly conservative


def test_privacy_spec_target_epsilon_small_clusters():
    partition = rn.Partition.from_blocks([[0, 1], [2, 3]])
    scenario = sc.Scenario(
        network=sc.NetworkConfig(matrix=((0.1,),), gamma=(0.5,)),
        privacy=sc.PrivacyConfig(enabled=True, target_epsilon=0.5),
    )
    with pytest.raises(ConfigError, match="too small"):
        sc.build_privacy_spec(scenario, partition)


def test_privacy_disabled_returns_none(tmp_path):
    scenario = sc.load_scenario(write_config(tmp_path, MINIMAL))
    net = sc.build_network(scenario)
    assert sc.build_privacy_spec(scenario, sc.build_partition(scenario, net)) is None


def test_sampled_epochs():
    scenario = sc.Scenario(
        network=sc.NetworkConfig(matrix=((0.1,),), gamma=(0.5,)), steps=10, rn_interval=4
    )
    assert scenario.sampled_epochs() == [0, 4, 8]


def test_yaml_dump_is_plain_types(tmp_path):
    scenario = sc.load_scenario(write_config(tmp_path, MINIMAL))
    dumped = yaml.safe_dump(scenario.to_dict())
    assert "!!python" not in dumped
