"""Binary netpbm IO: P6 (PPM) for RGB images, P5 (PGM) for label masks.

Images are float arrays in [0, 1] quantized round-half-up to maxval 255;
masks are stored as raw bytes (the ignore sentinel 255 included). Both
round-trip bit-exactly on the quantized representation.
"""

import numpy as np


class NetpbmError(ValueError):
    """Malformed netpbm header or payload."""


def quantize(values):
    """Map floats in [0, 1] to bytes, rounding half up (0.5 -> 128)."""
    v = np.asarray(values, dtype=np.float64)
    return np.clip(np.floor(v * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _read_tokens(data, count, path):
    """First `count` whitespace-delimited header tokens and the payload offset."""
    tokens = []
    pos = 0
    n = len(data)
    for _ in range(count):
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise NetpbmError(f"{path}: truncated header at byte {start}")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos : pos + 1].isspace():
        raise NetpbmError(f"{path}: expected whitespace after header at byte {pos}")
    return tokens, pos + 1


def _parse_header(data, magic, path):
    tokens, payload = _read_tokens(data, 4, path)
    if tokens[0] != magic:
        raise NetpbmError(f"{path}: bad magic {tokens[0]!r} at byte 0, expected {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise NetpbmError(f"{path}: non-numeric header field in {tokens[1:]}") from None
    if width <= 0 or height <= 0:
        raise NetpbmError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise NetpbmError(f"{path}: unsupported maxval {maxval}, expected 255")
    return width, height, payload


def write_ppm(path, image):
    """Write an (H, W, 3) float image in [0, 1] as binary PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3), got shape {image.shape}")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(quantize(image).tobytes())


def read_ppm(path):
    """Read a binary PPM into an (H, W, 3) float32 image in [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    w, h, payload = _parse_header(data, b"P6", path)
    expected = h * w * 3
    if len(data) - payload != expected:
        raise NetpbmError(
            f"{path}: payload is {len(data) - payload} bytes at byte {payload}, expected {expected}"
        )
    raw = np.frombuffer(data, dtype=np.uint8, count=expected, offset=payload)
    return (raw.reshape(h, w, 3).astype(np.float32) / 255.0)


def write_pgm(path, mask):
    """Write an (H, W) uint8 mask as binary PGM (ignore sentinel stays 255)."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != np.uint8:
        raise ValueError(f"mask must be uint8, got {mask.dtype}")
    h, w = mask.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(mask.tobytes())


def read_pgm(path):
    """Read a binary PGM into an (H, W) uint8 mask."""
    with open(path, "rb") as f:
        data = f.read()
    w, h, payload = _parse_header(data, b"P5", path)
    expected = h * w
    if len(data) - payload != expected:
        raise NetpbmError(
            f"{path}: payload is {len(data) - payload} bytes at byte {payload}, expected {expected}"
        )
    raw = np.frombuffer(data, dtype=np.uint8, count=expected, offset=payload)
    return raw.reshape(h, w).copy()
