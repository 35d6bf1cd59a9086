import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from l2d import checkpoint
from l2d.checkpoint import MAGIC, CheckpointError
from l2d.model import TaskModel


def test_layout_is_documented_little_endian():
    payload = checkpoint.dumps({"ab": np.array([[1.0, 2.0, 3.0]])})
    expected = MAGIC + struct.pack("<I", 1) + struct.pack("<I", 2) + b"ab" + struct.pack("<I", 2)
    expected += struct.pack("<2Q", 1, 3) + struct.pack("<3d", 1.0, 2.0, 3.0)
    assert payload == expected


@settings(max_examples=50, deadline=None)
@given(
    st.dictionaries(
        st.text(min_size=1, max_size=12),
        hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4),
                   elements=st.floats(allow_nan=False, allow_infinity=False)),
        max_size=4,
    )
)
def test_round_trip(arrays):
    back = checkpoint.loads(checkpoint.dumps(arrays))
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape
        assert back[k].tobytes() == arrays[k].tobytes()


def test_rejects_bad_magic_truncation_and_trailing_bytes():
    payload = checkpoint.dumps({"w": np.ones(4)})
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.loads(b"NOTCKPT1" + payload[8:])
    for cut in (3, 10, len(payload) - 1):
        with pytest.raises(CheckpointError, match="truncated"):
            checkpoint.loads(payload[:cut])
    with pytest.raises(CheckpointError, match="trailing"):
        checkpoint.loads(payload + b"\0")


def test_missing_file_and_incompatible_model(tmp_path):
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "absent.l2d")
    checkpoint.save(tmp_path / "partial.l2d", {"H.bias": np.zeros(10)})
    with pytest.raises(CheckpointError, match="missing"):
        TaskModel.load(tmp_path / "partial.l2d")


def test_save_is_atomic_and_leaves_no_temp_files(tmp_path):
    target = tmp_path / "c.l2d"
    checkpoint.save(target, {"a": np.zeros(2)})
    checkpoint.save(target, {"a": np.ones(2)})
    assert [p.name for p in tmp_path.iterdir()] == ["c.l2d"]
    np.testing.assert_array_equal(checkpoint.load(target)["a"], [1.0, 1.0])
