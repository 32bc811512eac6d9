import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from renyikd.errors import CorruptionError, DegenerateInputError, FormatError, ShapeError, UnsupportedDtypeError
from renyikd.tensor import Dims, as_tensor, flatten_batch, l2_normalize_rows, load_tensor, save_tensor

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def _write_raw(path, descr, shape, payload: bytes):
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape!r}, }}"
    pad = 64 - (10 + len(header) + 1) % 64
    header = header + " " * pad + "\n"
    with open(path, "wb") as fh:
        fh.write(b"\x93NUMPY\x01\x00" + struct.pack("<H", len(header)) + header.encode("latin1") + payload)


def test_load_hand_written_file(tmp_path):
    p = tmp_path / "a.npy"
    _write_raw(p, "<f8", (2, 3), np.arange(6, dtype="<f8").tobytes())
    t = load_tensor(p)
    assert t.shape == (2, 3)
    assert t.ravel().tolist() == [0, 1, 2, 3, 4, 5]


def test_float32_is_widened(tmp_path):
    p = tmp_path / "a.npy"
    _write_raw(p, "<f4", (3,), np.array([0.5, 1.5, -2.0], dtype="<f4").tobytes())
    t = load_tensor(p)
    assert t.dtype == np.float64
    assert t.tolist() == [0.5, 1.5, -2.0]


def test_truncated_payload_is_corruption(tmp_path):
    p = tmp_path / "a.npy"
    _write_raw(p, "<f8", (2, 3), np.arange(5, dtype="<f8").tobytes())
    with pytest.raises(CorruptionError):
        load_tensor(p)


def test_bad_magic(tmp_path):
    p = tmp_path / "a.npy"
    p.write_bytes(b"NOTNPY" + b"\x00" * 120)
    with pytest.raises(FormatError):
        load_tensor(p)


@pytest.mark.parametrize("descr", ["<i8", ">f8", "<f2"])
def test_unsupported_dtype(tmp_path, descr):
    p = tmp_path / "a.npy"
    _write_raw(p, descr, (1,), b"\x00" * np.dtype(descr).itemsize)
    with pytest.raises(UnsupportedDtypeError):
        load_tensor(p)


def test_scalar_file_layout(tmp_path):
    p = tmp_path / "a.npy"
    save_tensor(np.array([3.5]), p)
    raw = p.read_bytes()
    assert len(raw) == 128 + 8
    assert raw[:8] == b"\x93NUMPY\x01\x00"
    header_len = struct.unpack("<H", raw[8:10])[0]
    assert (10 + header_len) % 64 == 0 and raw[10 + header_len - 1 : 10 + header_len] == b"\n"
    assert struct.unpack("<d", raw[128:])[0] == 3.5
    # the reference reader agrees
    assert np.load(p).tolist() == [3.5]


def test_empty_extent(tmp_path):
    p = tmp_path / "a.npy"
    save_tensor(np.zeros((0, 4)), p)
    t = load_tensor(p)
    assert t.shape == (0, 4)
    assert p.stat().st_size == 128


def test_identity_round_trip(tmp_path):
    p = tmp_path / "eye.npy"
    save_tensor(np.eye(3), p)
    np.testing.assert_array_equal(load_tensor(p), np.eye(3))


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_tensor(np.ones(2), tmp_path / "missing" / "dir" / "x.npy")


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=finite))
def test_round_trip_is_bit_exact(tmp_path_factory, arr):
    p = tmp_path_factory.mktemp("rt") / "x.npy"
    save_tensor(arr, p)
    back = load_tensor(p)
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_random_4x7_round_trip(tmp_path, rng):
    arr = rng.standard_normal((4, 7))
    save_tensor(arr, tmp_path / "x.npy")
    assert load_tensor(tmp_path / "x.npy").tobytes() == arr.tobytes()


def test_as_tensor_rejects_nan():
    with pytest.raises(DegenerateInputError):
        as_tensor([1.0, float("nan")])


def test_flatten_batch():
    out = flatten_batch(np.arange(8.0).reshape(2, 2, 2))
    assert out.tolist() == [[0, 1, 2, 3], [4, 5, 6, 7]]
    m = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(flatten_batch(m), m)
    with pytest.raises(ShapeError):
        flatten_batch(np.ones(3))


def test_l2_normalize_rows_examples():
    np.testing.assert_allclose(l2_normalize_rows(np.array([[3.0, 4.0]])), [[0.6, 0.8]], atol=1e-15)
    u = np.array([[0.6, 0.8], [1.0, 0.0]])
    np.testing.assert_allclose(l2_normalize_rows(u), u, atol=1e-15)
    with pytest.raises(DegenerateInputError):
        l2_normalize_rows(np.array([[0.0, 0.0]]))


rows = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-100, 100)).filter(
    lambda a: np.all(np.linalg.norm(a, axis=1) > 1e-3)
)


@given(rows)
def test_l2_normalize_unit_and_idempotent(m):
    once = l2_normalize_rows(m)
    np.testing.assert_allclose(np.linalg.norm(once, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(l2_normalize_rows(once), once, atol=1e-14)


@given(rows, st.floats(1e-3, 1e3))
def test_l2_normalize_scale_invariant(m, c):
    np.testing.assert_allclose(l2_normalize_rows(c * m), l2_normalize_rows(m), atol=1e-12)


def test_dims_validation():
    Dims(1, 1, 1, 1)
    with pytest.raises(ShapeError):
        Dims(0, 1, 1, 1)
