"""Media decoding and the deterministic 2016-dimension grid-moment embedder.

The embedder concatenates, then L2-normalizes:
  * per-channel means of a 16x16 cell partition of the image (768 values)
  * per-channel population standard deviations of the same cells (768)
  * a joint 8x6x10 color histogram over quantized (R, G, B), mass-normalized
    to sum 1 (480 bins)

768 + 768 + 480 = 2016. Cell boundaries scale with image size, so no
resizing or other preprocessing is ever applied. All accumulation is in
float64; the output vector is float32.
"""

from __future__ import annotations

import base64
import binascii
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import Base64Error, DecodeError, TooLarge, UnsupportedFormat

DIMENSION = 2016
GRID = 16
HIST_BINS = (8, 6, 10)  # R, G, B quantization levels
DEFAULT_MEDIA_CAP = 25 * 1024 * 1024


@dataclass(frozen=True)
class MediaBlob:
    bytes: bytes
    mime: str = "application/octet-stream"
    source_url: str = ""


@dataclass(frozen=True)
class PixelGrid:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8


@dataclass(frozen=True)
class EmbedderDescriptor:
    name: str = "grid-moment-v1"
    dimension: int = DIMENSION
    version: int = 1


def decode_media(blob: MediaBlob, cap: int = DEFAULT_MEDIA_CAP) -> PixelGrid:
    """Decode raster media bytes to an RGB pixel grid at native resolution."""
    if not blob.bytes:
        raise DecodeError("empty media blob")
    if len(blob.bytes) > cap:
        raise TooLarge(f"media size {len(blob.bytes)} exceeds cap {cap}")
    looks_like_image = blob.bytes.startswith(
        (b"\x89PNG\r\n\x1a\n", b"\xff\xd8\xff", b"GIF87a", b"GIF89a")
    )
    try:
        img = Image.open(io.BytesIO(blob.bytes))
        img.seek(0)  # animated formats: frame 0
        rgb = img.convert("RGB")
        pixels = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as e:
        if looks_like_image:
            raise DecodeError(f"corrupt media bytes: {e}") from e
        raise UnsupportedFormat(f"not a supported image format: {e}") from e
    except (OSError, SyntaxError, ValueError) as e:
        raise DecodeError(f"corrupt media bytes: {e}") from e
    h, w = pixels.shape[:2]
    if h < 1 or w < 1:
        raise DecodeError("decoded image has zero extent")
    return PixelGrid(width=w, height=h, pixels=pixels)


def embed(grid: PixelGrid) -> np.ndarray:
    """Deterministic 2016-dim embedding of a pixel grid, L2-normalized."""
    px = grid.pixels.astype(np.float64)
    h, w = grid.height, grid.width

    row_edges = [(i * h) // GRID for i in range(GRID + 1)]
    col_edges = [(j * w) // GRID for j in range(GRID + 1)]

    means = np.zeros((GRID, GRID, 3))
    stds = np.zeros((GRID, GRID, 3))
    for i in range(GRID):
        r0, r1 = row_edges[i], row_edges[i + 1]
        if r0 == r1:
            continue  # images smaller than the grid leave some cells empty
        for j in range(GRID):
            c0, c1 = col_edges[j], col_edges[j + 1]
            if c0 == c1:
                continue
            cell = px[r0:r1, c0:c1].reshape(-1, 3)
            means[i, j] = cell.mean(axis=0)
            stds[i, j] = cell.std(axis=0)  # population std

    kr, kg, kb = HIST_BINS
    flat = grid.pixels.reshape(-1, 3).astype(np.int64)
    ri = flat[:, 0] * kr // 256
    gi = flat[:, 1] * kg // 256
    bi = flat[:, 2] * kb // 256
    idx = (ri * kg + gi) * kb + bi
    hist = np.bincount(idx, minlength=kr * kg * kb).astype(np.float64)
    hist /= hist.sum()

    vec = np.concatenate([means.ravel(), stds.ravel(), hist])
    norm = np.linalg.norm(vec)
    # hist sums to 1 > 0 so norm is never zero
    vec /= norm
    return vec.astype(np.float32)


def embed_bytes(data: bytes, cap: int = DEFAULT_MEDIA_CAP) -> np.ndarray:
    return embed(decode_media(MediaBlob(bytes=data), cap=cap))


def embed_base64(text: str, cap: int = DEFAULT_MEDIA_CAP) -> np.ndarray:
    """Embed a standard-base64 (padded) encoded image."""
    try:
        data = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as e:
        raise Base64Error(f"invalid base64 payload: {e}") from e
    return embed_bytes(data, cap=cap)
