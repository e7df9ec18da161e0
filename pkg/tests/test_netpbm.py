import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kpacdeblur.errors import MalformedHeaderError, NetpbmError, TruncatedPayloadError, UnsupportedMagicError
from kpacdeblur.image import Image
from kpacdeblur.netpbm import decode_netpbm, encode_netpbm, load_netpbm, save_netpbm


class TestDecode:
    def test_p5_8bit(self):
        im = decode_netpbm(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
        assert im.shape == (2, 2, 1)
        np.testing.assert_array_equal(im.data.ravel(), [0.0, 128 / 255, 1.0, 64 / 255])

    def test_p6_single_pixel(self):
        im = decode_netpbm(b"P6 1 1 255\n" + bytes([255, 0, 0]))
        assert im.shape == (1, 1, 3)
        np.testing.assert_array_equal(im.data.ravel(), [1.0, 0.0, 0.0])

    def test_p5_16bit_big_endian(self):
        im = decode_netpbm(b"P5\n2 1\n65535\n" + bytes([0x80, 0x00, 0x00, 0x01]))
        assert im.data[0, 0, 0] == 32768 / 65535
        assert im.data[0, 1, 0] == 1 / 65535
        assert im.data[0, 0, 0] == pytest.approx(0.50000763, abs=1e-8)

    def test_comments_and_whitespace(self):
        im = decode_netpbm(b"P5 # comment\n# another\n 3\t1 # w h\n255\n" + bytes([1, 2, 3]))
        np.testing.assert_array_equal(im.data.ravel() * 255, [1, 2, 3])

    def test_row_major_order(self):
        im = decode_netpbm(b"P5\n3 2\n255\n" + bytes(range(6)))
        np.testing.assert_array_equal(im.data[:, :, 0] * 255, [[0, 1, 2], [3, 4, 5]])

    def test_trailing_bytes_ignored(self):
        im = decode_netpbm(b"P5\n1 1\n255\n" + bytes([7, 8, 9]))
        assert im.data.ravel()[0] * 255 == 7

    @pytest.mark.parametrize("magic", [b"P1", b"P2", b"P3", b"P4", b"P7"])
    def test_unsupported_magic(self, magic):
        with pytest.raises(UnsupportedMagicError):
            decode_netpbm(magic + b"\n1 1\n255\n\x00")

    @pytest.mark.parametrize("blob", [b"", b"X5\n1 1\n255\n\x00", b"P5\n1\n", b"P5\n1 x\n255\n\x00",
                                      b"P5\n0 1\n255\n", b"P5\n1 1\n70000\n\x00\x00", b"P5\n1 1\n255"])
    def test_malformed(self, blob):
        with pytest.raises(MalformedHeaderError):
            decode_netpbm(blob)

    @pytest.mark.parametrize("blob", [b"P5\n2 2\n255\n\x00\x00\x00", b"P6\n1 1\n255\n\x00\x00",
                                      b"P5\n1 1\n65535\n\x00"])
    def test_truncated(self, blob):
        with pytest.raises(TruncatedPayloadError):
            decode_netpbm(blob)

    def test_errors_share_base(self):
        with pytest.raises(NetpbmError):
            decode_netpbm(b"P3\n1 1\n255\n0 0 0")


class TestEncode:
    def test_extremes(self):
        assert encode_netpbm(Image(np.array([[0.0, 1.0]]))).endswith(bytes([0, 255]))

    def test_half_rounds_up(self):
        assert encode_netpbm(Image(np.array([[0.5]]))).endswith(bytes([128]))

    def test_clamps(self):
        assert encode_netpbm(Image(np.array([[-0.2, 1.7]]))).endswith(bytes([0, 255]))

    def test_16bit_big_endian(self):
        blob = encode_netpbm(Image(np.array([[1.0, 1 / 65535]])), 16)
        assert blob == b"P5\n2 1\n65535\n" + bytes([0xFF, 0xFF, 0x00, 0x01])

    def test_color_header(self):
        assert encode_netpbm(Image(np.zeros((2, 3, 3)))).startswith(b"P6\n3 2\n255\n")

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            encode_netpbm(Image(np.zeros((1, 1))), 12)


shapes = st.tuples(st.integers(1, 5), st.integers(1, 5), st.sampled_from([1, 3]))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, shapes, elements=st.floats(-0.5, 1.5)), st.sampled_from([8, 16]))
def test_quantized_round_trip_is_byte_stable(data, depth):
    first = encode_netpbm(Image(data), depth)
    again = encode_netpbm(decode_netpbm(first), depth)
    assert again == first


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, shapes))
def test_8bit_samples_exact(q):
    im = Image(q / 255.0)
    back = decode_netpbm(encode_netpbm(im))
    np.testing.assert_array_equal(np.rint(back.data * 255).astype(np.uint8), q)


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    im = Image(rng.random((4, 6, 3)))
    p = tmp_path / "x.ppm"
    save_netpbm(im, p, 16)
    first = p.read_bytes()
    save_netpbm(load_netpbm(p), p, 16)
    assert p.read_bytes() == first
    assert not (tmp_path / "x.ppm.tmp").exists()
    np.testing.assert_allclose(load_netpbm(p).data, im.data, atol=0.5 / 65535 + 1e-15)
