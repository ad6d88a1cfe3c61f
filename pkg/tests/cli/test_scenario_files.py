import dataclasses
import pathlib

import pytest

from scale_aware_sharding.cli import load_scenario, read_jsonl, run_scenario
from tests.helpers import check_records_equal

scenario_files = sorted(pathlib.Path("scenarios").glob("*.toml"))
baseline_path = pathlib.Path("tests", "cli", "baselines")


@pytest.mark.parametrize("path", scenario_files, ids=lambda p: p.stem)
def test_partitioned_strategy_is_faster(path):
    zero3, candidate = run_scenario(load_scenario(path))
    assert zero3["strategy"] == "zero3"
    assert candidate["speedup"] > 1
    assert candidate["peak_model_state_bytes_per_device"] > zero3[
        "peak_model_state_bytes_per_device"
    ]


def test_speedup_grows_with_cluster_size():
    config = load_scenario(pathlib.Path("scenarios", "p3dn_like.toml"))
    records = []
    for num_nodes in (2, 4, 8, 16):
        scaled = dataclasses.replace(
            config, cluster=dataclasses.replace(config.cluster, num_nodes=num_nodes)
        )
        records.extend(run_scenario(scaled))

    speedups = [r["speedup"] for r in records if r["strategy"] == "mics"]
    assert all(s > 1 for s in speedups)
    assert speedups == sorted(speedups)
    with open(baseline_path / "p3dn_like_scaling.jsonl") as baseline:
        expected = read_jsonl(baseline)

    check_records_equal(expected, records, keep_cols=("name", "n"), rel=1e-9)


@pytest.mark.parametrize("path", scenario_files, ids=lambda p: p.stem)
def test_matches_committed_baseline(path):
    with open(baseline_path / f"{path.stem}.jsonl") as baseline:
        expected = read_jsonl(baseline)

    actual = run_scenario(load_scenario(path))
    check_records_equal(expected, actual, keep_cols=("scenario", "name"), rel=1e-9)
