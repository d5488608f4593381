import numpy as np
import pytest

from percdiff.tensorio import load_tensor, save_tensor


def test_round_trip_dtypes(tmp_path):
    rng = np.random.default_rng(0)
    for arr in (rng.standard_normal((3, 4, 5)),
                rng.integers(0, 100, (7,), dtype=np.int64),
                (rng.random((6, 6)) > 0.5),
                np.float32(rng.standard_normal((2, 2)))):
        p = tmp_path / "t.bin"
        save_tensor(p, arr)
        back = load_tensor(p)
        assert back.dtype == arr.dtype
        assert np.array_equal(back, arr)


def test_non_contiguous_input(tmp_path):
    arr = np.arange(24).reshape(4, 6)[:, ::2]
    p = tmp_path / "t.bin"
    save_tensor(p, arr)
    assert np.array_equal(load_tensor(p), arr)


def test_bad_magic(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(ValueError):
        load_tensor(p)
