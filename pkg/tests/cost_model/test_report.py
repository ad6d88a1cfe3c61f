import pytest

from scale_aware_sharding.cost_model import CostEntry, CostReport


def _report():
    return (
        CostReport("gather")
        .add("flat", 0.5, "seconds", "allgather_cost_flat")
        .add("ratio", 2.0, "ratio", "allgather_cost_ratio")
    )


def test_lookup_by_name():
    report = _report()
    assert report["flat"] == 0.5
    with pytest.raises(KeyError):
        report["missing"]


def test_entries_keep_insertion_order():
    assert list(_report().as_dict()) == ["flat", "ratio"]


def test_extend_with_prefix():
    report = CostReport()
    report.extend(_report(), prefix="mics")
    report.extend(_report())
    assert list(report.as_dict()) == ["mics.flat", "mics.ratio", "flat", "ratio"]
    assert report.entries[0] == CostEntry(
        "mics.flat", 0.5, "seconds", "allgather_cost_flat"
    )


def test_text_lines():
    assert _report().to_text() == (
        "flat=0.5 seconds [allgather_cost_flat]\n"
        "ratio=2.0 ratio [allgather_cost_ratio]\n"
    )


def test_entry_record():
    assert _report().entries[1].as_record() == {
        "name": "ratio",
        "value": 2.0,
        "unit": "ratio",
        "formula": "allgather_cost_ratio",
    }
