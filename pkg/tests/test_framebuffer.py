"""Framebuffer model and observation pipeline tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbenv.errors import UnsupportedFormatError, UpdateRejectedError
from fbenv.framebuffer import (
    Framebuffer,
    GrayFrame,
    apply_rectangle,
    apply_update,
    crop,
    downsample,
    pack_rgb,
    pixel_rgb,
    to_grayscale,
    write_pgm,
)
from fbenv.wire import RGBX32, FramebufferUpdate, PixelFormat, Rectangle

from helpers import oracle_downsample, oracle_gray

RGB565 = PixelFormat(16, 16, False, True, 31, 63, 31, 11, 5, 0)
BGRX32_BE = PixelFormat(32, 24, True, True, 255, 255, 255, 0, 8, 16)


def gray(values) -> GrayFrame:
    array = np.asarray(values, dtype=np.uint8)
    return GrayFrame(array.shape[1], array.shape[0], array)


def solid(width, height, rgb, fmt=RGBX32) -> Framebuffer:
    block = np.zeros((height, width, 3), dtype=np.uint8)
    block[:, :] = rgb
    return Framebuffer(width, height, fmt, bytearray(pack_rgb(block, fmt)))


# -- apply_rectangle ---------------------------------------------------------


def test_full_screen_overwrite():
    fb = Framebuffer.blank(4, 4, RGBX32)
    apply_rectangle(fb, Rectangle(0, 0, 4, 4), b"\xff" * 64)
    assert bytes(fb.pixels) == b"\xff" * 64


def test_single_pixel_touches_exact_offset():
    fb = Framebuffer.blank(4, 4, RGBX32)
    apply_rectangle(fb, Rectangle(3, 3, 1, 1), b"\xaa" * 4)
    offset = (3 * 4 + 3) * 4
    expected = bytearray(64)
    expected[offset : offset + 4] = b"\xaa" * 4
    assert fb.pixels == expected


def test_out_of_bounds_rejected_and_untouched():
    fb = Framebuffer.blank(4, 4, RGBX32)
    before = bytes(fb.pixels)
    with pytest.raises(UpdateRejectedError):
        apply_rectangle(fb, Rectangle(3, 3, 2, 2), b"\x11" * 16)
    assert bytes(fb.pixels) == before


def test_wrong_payload_length_rejected():
    fb = Framebuffer.blank(4, 4, RGBX32)
    with pytest.raises(UpdateRejectedError):
        apply_rectangle(fb, Rectangle(0, 0, 2, 2), b"\x11" * 15)


@settings(max_examples=60, deadline=None)
@given(
    x=st.integers(0, 7),
    y=st.integers(0, 7),
    w=st.integers(1, 8),
    h=st.integers(1, 8),
    probe_x=st.integers(0, 7),
    probe_y=st.integers(0, 7),
    fill=st.integers(0, 255),
)
def test_apply_rectangle_is_local(x, y, w, h, probe_x, probe_y, fill):
    if x + w > 8 or y + h > 8:
        return
    fb = Framebuffer(8, 8, RGBX32, bytearray(np.random.default_rng(1).bytes(8 * 8 * 4)))
    before = bytes(fb.pixels)
    apply_rectangle(fb, Rectangle(x, y, w, h), bytes([fill]) * (w * h * 4))
    inside = x <= probe_x < x + w and y <= probe_y < y + h
    offset = (probe_y * 8 + probe_x) * 4
    if not inside:
        assert fb.pixels[offset : offset + 4] == before[offset : offset + 4]


def test_apply_update_bumps_generation_per_message():
    fb = Framebuffer.blank(4, 4, RGBX32)
    apply_update(fb, FramebufferUpdate(((Rectangle(0, 0, 1, 1), b"\x01" * 4),)))
    assert fb.generation == 1
    apply_update(fb, FramebufferUpdate(()))  # empty update still counts
    assert fb.generation == 2


def test_apply_update_is_atomic():
    fb = Framebuffer.blank(4, 4, RGBX32)
    bad = FramebufferUpdate(
        (
            (Rectangle(0, 0, 1, 1), b"\x01" * 4),
            (Rectangle(3, 3, 2, 2), b"\x02" * 16),
        )
    )
    with pytest.raises(UpdateRejectedError):
        apply_update(fb, bad)
    assert bytes(fb.pixels) == bytes(64)
    assert fb.generation == 0


# -- grayscale ---------------------------------------------------------------


def test_grayscale_primaries():
    assert to_grayscale(solid(1, 1, (255, 0, 0))).values[0, 0] == 76
    assert to_grayscale(solid(1, 1, (0, 255, 0))).values[0, 0] == 150
    assert to_grayscale(solid(1, 1, (255, 255, 255))).values[0, 0] == 255
    assert to_grayscale(solid(1, 1, (0, 0, 0))).values[0, 0] == 0


def test_grayscale_rejects_palette_format():
    palette = PixelFormat(8, 8, False, False, 0, 0, 0, 0, 0, 0)
    fb = Framebuffer.blank(2, 2, palette)
    with pytest.raises(UnsupportedFormatError):
        to_grayscale(fb)


def test_grayscale_equal_pixels_equal_values():
    fb = solid(3, 2, (12, 200, 56))
    values = to_grayscale(fb).values
    assert np.all(values == values[0, 0])


@settings(max_examples=40, deadline=None)
@given(
    r=st.integers(0, 255),
    g=st.integers(0, 255),
    b=st.integers(0, 255),
    bump=st.integers(1, 40),
)
def test_grayscale_monotone_per_channel(r, g, b, bump):
    base = to_grayscale(solid(1, 1, (r, g, b))).values[0, 0]
    for brighter in ((min(255, r + bump), g, b), (r, min(255, g + bump), b), (r, g, min(255, b + bump))):
        assert to_grayscale(solid(1, 1, brighter)).values[0, 0] >= base


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_grayscale_matches_oracle_on_random_pixels(seed):
    rng = np.random.default_rng(seed)
    rgb = rng.integers(0, 256, size=(3, 5, 3), dtype=np.uint8)
    fb = Framebuffer(5, 3, RGBX32, bytearray(pack_rgb(rgb, RGBX32)))
    values = to_grayscale(fb).values
    for y in range(3):
        for x in range(5):
            assert values[y, x] == oracle_gray(*(int(c) for c in rgb[y, x]))


def test_grayscale_565_format_rescales_channels():
    # pure red in 5-6-5: raw 31 -> rescaled 255 -> gray 76
    word = 31 << 11
    fb = Framebuffer(1, 1, RGB565, bytearray(word.to_bytes(2, "little")))
    assert to_grayscale(fb).values[0, 0] == 76
    # raw green 63 -> 255 -> 150
    fb = Framebuffer(1, 1, RGB565, bytearray((63 << 5).to_bytes(2, "little")))
    assert to_grayscale(fb).values[0, 0] == 150


def test_grayscale_big_endian_format():
    fb = solid(2, 2, (255, 0, 0), fmt=BGRX32_BE)
    assert to_grayscale(fb).values[0, 0] == 76


# -- pixel_rgb / pack_rgb ----------------------------------------------------


def test_pack_rgb_canonical_byte_order():
    block = np.array([[[1, 2, 3]]], dtype=np.uint8)
    assert pack_rgb(block, RGBX32) == bytes([3, 2, 1, 0])


def test_pixel_rgb_reads_back_packed_values():
    fb = solid(2, 2, (10, 20, 30))
    assert pixel_rgb(fb, 1, 1) == (10, 20, 30)
    fb565 = Framebuffer(1, 1, RGB565, bytearray(((31 << 11) | 63 << 5 | 31).to_bytes(2, "little")))
    assert pixel_rgb(fb565, 0, 0) == (255, 255, 255)


def test_pixel_rgb_bounds():
    fb = solid(2, 2, (0, 0, 0))
    with pytest.raises(ValueError):
        pixel_rgb(fb, 2, 0)


# -- downsample --------------------------------------------------------------


def test_downsample_mean_rounds_half_up():
    frame = gray([[0, 0], [255, 255]])
    assert downsample(frame, 1, 1).values[0, 0] == 128


def test_downsample_identity_dimensions():
    frame = gray([[1, 2], [3, 4]])
    assert downsample(frame, 2, 2) == frame


def test_downsample_uniform_stays_uniform():
    frame = gray(np.full((9, 7), 93))
    for out_w, out_h in ((1, 1), (3, 3), (7, 9), (2, 5)):
        out = downsample(frame, out_w, out_h)
        assert np.all(out.values == 93)


def test_downsample_preserves_global_mean_when_even():
    rng = np.random.default_rng(5)
    frame = gray(rng.integers(0, 256, size=(12, 12), dtype=np.uint8))
    out = downsample(frame, 4, 4)
    assert abs(float(out.values.mean()) - float(frame.values.mean())) <= 1.0


@settings(max_examples=40, deadline=None)
@given(
    in_w=st.integers(1, 17),
    in_h=st.integers(1, 17),
    out_w=st.integers(1, 17),
    out_h=st.integers(1, 17),
    seed=st.integers(0, 2**31),
)
def test_downsample_matches_brute_force_oracle(in_w, in_h, out_w, out_h, seed):
    if out_w > in_w or out_h > in_h:
        return
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 256, size=(in_h, in_w), dtype=np.uint8)
    result = downsample(gray(values), out_w, out_h)
    expected = oracle_downsample(values.tolist(), in_w, in_h, out_w, out_h)
    assert result.values.tolist() == expected


def test_downsample_rejects_bad_dimensions():
    frame = gray([[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        downsample(frame, 0, 1)
    with pytest.raises(ValueError):
        downsample(frame, 3, 1)


# -- crop / pgm --------------------------------------------------------------


def test_crop_copies_region():
    frame = gray(np.arange(16, dtype=np.uint8).reshape(4, 4))
    region = crop(frame, 1, 2, 2, 2)
    assert region.values.tolist() == [[9, 10], [13, 14]]
    with pytest.raises(ValueError):
        crop(frame, 3, 3, 2, 2)


def test_write_pgm_format(tmp_path):
    frame = gray([[0, 128], [255, 7]])
    path = tmp_path / "frame.pgm"
    write_pgm(frame, path)
    assert path.read_bytes() == b"P5\n2 2\n255\n" + bytes([0, 128, 255, 7])
