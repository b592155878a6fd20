import numpy as np
import pytest

from bss_attack.errors import FormatError
from bss_attack.imageio import read_image, read_raw, to_bytes, write_png, write_ppm, write_raw


def test_round_half_up():
    img = np.array([[[0.0, 1.0, 0.5 / 255, 254.5 / 255, 1.7, -0.2]]])
    assert to_bytes(img).ravel().tolist() == [0, 255, 1, 255, 255, 0]


@pytest.mark.parametrize("channels", [1, 3])
@pytest.mark.parametrize("writer,suffix", [(write_png, ".png"), (write_ppm, ".ppm")])
def test_byte_images_round_trip(tmp_path, channels, writer, suffix):
    rng = np.random.default_rng(3)
    data = rng.integers(0, 256, size=(channels, 5, 7)).astype(np.float64) / 255
    path = writer(data, tmp_path / f"img{suffix}")
    back = read_image(path)
    expected = data if (channels == 3 or writer is write_png) else np.repeat(data, 3, axis=0)
    np.testing.assert_array_equal(to_bytes(back), to_bytes(expected))


def test_ppm_header(tmp_path):
    path = write_ppm(np.zeros((3, 2, 4)), tmp_path / "x.ppm")
    assert path.read_bytes().startswith(b"P6\n4 2\n255\n")


def test_raw_round_trip_is_exact(tmp_path):
    delta = np.random.default_rng(0).normal(size=(3, 8, 8)).astype(np.float32)
    back = read_raw(write_raw(delta, tmp_path / "d.f32"))
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, delta)


def test_raw_bad_magic(tmp_path):
    p = tmp_path / "bad.f32"
    p.write_bytes(b"XXXX\x00\x00\x00\x00")
    with pytest.raises(FormatError):
        read_raw(p)


def test_undecodable_image(tmp_path):
    p = tmp_path / "junk.png"
    p.write_bytes(b"not an image")
    with pytest.raises(FormatError):
        read_image(p)
