import math

import numpy as np
from pytest import fail


def check_buffers_equal(expected, actual, exact=True, rtol=1e-5):
    """
    Fail with the differing ranks when two rank to buffer mappings disagree.

    Exact comparisons are bitwise, so float buffers must match bit for bit.
    """
    msg = []
    expected_ranks = set(expected)
    actual_ranks = set(actual)
    if expected_ranks - actual_ranks:
        msg.append(f"ranks missing from actual: {sorted(expected_ranks - actual_ranks)}")

    if actual_ranks - expected_ranks:
        msg.append(f"extra ranks in actual: {sorted(actual_ranks - expected_ranks)}")

    if msg:
        fail("\n".join(msg))

    for rank in sorted(expected):
        want = np.asarray(expected[rank])
        got = np.asarray(actual[rank])
        if exact:
            equal = want.dtype == got.dtype and want.tobytes() == got.tobytes()
        else:
            equal = want.shape == got.shape and np.allclose(got, want, rtol=rtol, atol=0)

        if not equal:
            msg.append(f"rank {rank}: expected {want!r}, actual {got!r}")

    if msg:
        fail("Mismatching buffers (showing up to 10):\n\n" + "\n".join(msg[:10]))


def check_records_equal(expected, actual, keep_cols=(), rel=1e-9):
    "Fail with the differing fields when two lists of records disagree."
    if len(expected) != len(actual):
        fail(f"expected {len(expected)} records, got {len(actual)}")

    msg = []
    for index, (want, got) in enumerate(zip(expected, actual)):
        if set(want) != set(got):
            msg.append(f"record {index}: fields differ {sorted(set(want) ^ set(got))}")
            continue

        diff = {}
        for name in want:
            a, b = want[name], got[name]
            if isinstance(a, float) or isinstance(b, float):
                same = math.isclose(a, b, rel_tol=rel) or a == b
            else:
                same = a == b

            if not same:
                diff[name] = {"expected": a, "actual": b}

        if diff:
            diff.update({name: {"value": want[name]} for name in keep_cols})
            msg.append(f"record {index}: {diff}")

    if msg:
        fail("Mismatching records:\n\n" + "\n".join(msg))
