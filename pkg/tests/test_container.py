import struct

import numpy as np
import pytest

from stapbench.container import MAGIC, read_array, write_array


def test_complex_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    mat = rng.standard_normal((64, 30)) + 1j * rng.standard_normal((64, 30))
    path = tmp_path / "snap.stap"
    write_array(path, mat)
    np.testing.assert_array_equal(read_array(path), mat)


def test_real_tensor_roundtrip(tmp_path):
    tensor = np.random.default_rng(1).uniform(0, 5, (5, 26, 21))
    path = tmp_path / "tensor.stap"
    write_array(path, tensor)
    back = read_array(path)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, tensor)


def test_rank4_roundtrip(tmp_path):
    arr = (np.random.default_rng(2).standard_normal((2, 3, 4, 5))
           + 1j * np.random.default_rng(3).standard_normal((2, 3, 4, 5)))
    path = tmp_path / "stack.stap"
    write_array(path, arr)
    np.testing.assert_array_equal(read_array(path), arr)


def test_layout_golden_bytes(tmp_path):
    # hand-packed oracle for a 2x2 complex matrix in column-major order
    mat = np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j]])
    path = tmp_path / "gold.stap"
    write_array(path, mat)
    blob = path.read_bytes()
    expected = MAGIC + struct.pack("<HHH", 1, 1, 2) + struct.pack("<2I", 2, 2)
    expected += struct.pack("<8d", 1, 2, 5, 6, 3, 4, 7, 8)   # col-major, re/im
    assert blob == expected


def test_bad_magic_and_truncation_rejected(tmp_path):
    path = tmp_path / "bad.stap"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        read_array(path)

    good = tmp_path / "good.stap"
    write_array(good, np.ones((4, 4)))
    clipped = tmp_path / "clipped.stap"
    clipped.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_array(clipped)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "ver.stap"
    path.write_bytes(MAGIC + struct.pack("<HHH", 9, 0, 1)
                     + struct.pack("<1I", 1) + struct.pack("<d", 0.0))
    with pytest.raises(ValueError, match="version"):
        read_array(path)
