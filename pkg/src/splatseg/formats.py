"""On-disk raster formats for rendered views and score maps.

Three little-endian binary containers:

* SPDZ -- depth raster: magic ``SPDZ``, u32 version, u32 H, u32 W, then
  H*W row-major f32 values with NaN marking empty pixels.
* SPIX -- per-pixel point memberships: magic ``SPIX``, u32 version, u32 H,
  u32 W, then per pixel (row-major) a u32 count followed by that many
  (u64 point_index, f32 weight) pairs.
* SPSC -- score map: magic ``SPSC``, u32 version, u32 H, u32 W, u32 C,
  then H*W*C f32 values, pixel-major then channel.

Color-like images (rgb, jet, encoded normals, label images) are plain
8-bit PNG files.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .errors import ScoreMapFormatError, DataError

FORMAT_VERSION = 1

#: Label-image value marking empty (background) pixels.
BACKGROUND_LABEL = 255

# score maps carry one channel per object class (1..8) plus background
N_SCORE_CHANNELS = 9

_PAIR_DTYPE = np.dtype([("index", "<u8"), ("weight", "<f4")])


def _read_header(fh, magic: bytes, n_fields: int, error_cls):
    head = fh.read(4 + 4 * (1 + n_fields))
    if len(head) != 4 + 4 * (1 + n_fields) or head[:4] != magic:
        raise error_cls(f"not a {magic.decode()} file")
    values = struct.unpack("<" + "I" * (1 + n_fields), head[4:])
    if values[0] != FORMAT_VERSION:
        raise error_cls(f"unsupported {magic.decode()} version {values[0]}")
    return values[1:]


def write_depth(path, depth: np.ndarray) -> None:
    depth = np.ascontiguousarray(depth, dtype="<f4")
    if depth.ndim != 2:
        raise DataError("depth raster must be 2-D")
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(b"SPDZ" + struct.pack("<III", FORMAT_VERSION, h, w))
        fh.write(depth.tobytes())


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as fh:
        h, w = _read_header(fh, b"SPDZ", 2, DataError)
        raw = fh.read(4 * h * w)
    if len(raw) != 4 * h * w:
        raise DataError(f"{path}: truncated SPDZ payload")
    return np.frombuffer(raw, dtype="<f4").reshape(h, w).copy()


def write_memberships(path, pixel_ptr, point_index, weight, height, width) -> None:
    """Write a CSR membership table: pixel_ptr has H*W+1 entries."""
    counts = np.diff(pixel_ptr).astype("<u4")
    pairs = np.empty(len(point_index), dtype=_PAIR_DTYPE)
    pairs["index"] = point_index
    pairs["weight"] = weight
    with open(path, "wb") as fh:
        fh.write(b"SPIX" + struct.pack("<III", FORMAT_VERSION, height, width))
        # interleave counts and pair runs pixel by pixel, buffered in chunks
        out = bytearray()
        for j in range(height * width):
            out += counts[j].tobytes()
            a, b = pixel_ptr[j], pixel_ptr[j + 1]
            if b > a:
                out += pairs[a:b].tobytes()
            if len(out) >= 1 << 20:
                fh.write(out)
                out = bytearray()
        fh.write(out)


def read_memberships(path):
    """Read a SPIX file back into CSR arrays ``(pixel_ptr, point_index, weight)``."""
    with open(path, "rb") as fh:
        h, w = _read_header(fh, b"SPIX", 2, DataError)
        blob = fh.read()
    n_pixels = h * w
    counts = np.empty(n_pixels, dtype=np.int64)
    chunks_idx = []
    chunks_w = []
    offset = 0
    for j in range(n_pixels):
        if offset + 4 > len(blob):
            raise DataError(f"{path}: truncated SPIX payload")
        (c,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        counts[j] = c
        if c:
            end = offset + c * _PAIR_DTYPE.itemsize
            if end > len(blob):
                raise DataError(f"{path}: truncated SPIX payload")
            pairs = np.frombuffer(blob, dtype=_PAIR_DTYPE, count=c, offset=offset)
            chunks_idx.append(pairs["index"].astype(np.int64))
            chunks_w.append(pairs["weight"].astype(np.float32))
            offset = end
    pixel_ptr = np.zeros(n_pixels + 1, dtype=np.int64)
    np.cumsum(counts, out=pixel_ptr[1:])
    if chunks_idx:
        point_index = np.concatenate(chunks_idx)
        weight = np.concatenate(chunks_w)
    else:
        point_index = np.empty(0, dtype=np.int64)
        weight = np.empty(0, dtype=np.float32)
    return pixel_ptr, point_index, weight, h, w


def write_score_map(path, scores: np.ndarray) -> None:
    scores = np.ascontiguousarray(scores, dtype="<f4")
    if scores.ndim != 3 or scores.shape[2] != N_SCORE_CHANNELS:
        raise DataError(f"score map must be H x W x {N_SCORE_CHANNELS}")
    h, w, c = scores.shape
    with open(path, "wb") as fh:
        fh.write(b"SPSC" + struct.pack("<IIII", FORMAT_VERSION, h, w, c))
        fh.write(scores.tobytes())


def read_score_map(path) -> np.ndarray:
    with open(path, "rb") as fh:
        h, w, c = _read_header(fh, b"SPSC", 3, ScoreMapFormatError)
        raw = fh.read()
    if c != N_SCORE_CHANNELS:
        raise ScoreMapFormatError(f"{path}: expected {N_SCORE_CHANNELS} channels, found {c}")
    if len(raw) != 4 * h * w * c:
        raise ScoreMapFormatError(f"{path}: truncated SPSC payload")
    return np.frombuffer(raw, dtype="<f4").reshape(h, w, c).copy()


def quantize_u8(image: np.ndarray) -> np.ndarray:
    """Round a float image in [0, 255] to the uint8 raster that PNGs carry."""
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def encode_normals_u8(normals: np.ndarray) -> np.ndarray:
    """Map unit normals to 8-bit via (n + 1) / 2 * 255; empty (NaN) -> 0."""
    out = (np.nan_to_num(normals, nan=-1.0) + 1.0) * 0.5 * 255.0
    return quantize_u8(out)


def write_image_png(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = quantize_u8(image)
    Image.fromarray(image).save(path, format="PNG")


def read_image_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img)


def png_dimensions(path) -> tuple[int, int]:
    """(height, width) of a PNG without decoding the pixel data."""
    with Image.open(path) as img:
        return img.height, img.width
