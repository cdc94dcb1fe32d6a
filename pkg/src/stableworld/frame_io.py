"""Grayscale frame loading, the PGM codec, and sequence assembly.

Binary PGM (P5, maxval 255) is the canonical on-disk format: the writer
emits a fixed header layout so identical pixels always produce identical
bytes. PNG decoding is an optional convenience behind Pillow.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

# Frames smaller than this are useless to the feature extractor downstream.
MIN_DIM = 16

# BT.601 luma weights for collapsing color inputs.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


class FrameIOError(ValueError):
    """Malformed image data, unsupported format, or an unusable frame."""


def _check_frame(img: np.ndarray) -> np.ndarray:
    if img.ndim != 2:
        raise FrameIOError(f"expected a 2-d grayscale array, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise FrameIOError(f"expected uint8 pixels, got {img.dtype}")
    h, w = img.shape
    if h < MIN_DIM or w < MIN_DIM:
        raise FrameIOError(f"frame {w}x{h} is below the {MIN_DIM}px minimum")
    return img


def luma(rgb: np.ndarray) -> np.ndarray:
    """Collapse an (..., 3) uint8 RGB array to uint8 luma, rounding half up."""
    r = rgb[..., 0].astype(np.float64)
    g = rgb[..., 1].astype(np.float64)
    b = rgb[..., 2].astype(np.float64)
    y = _LUMA_R * r + _LUMA_G * g + _LUMA_B * b
    return np.floor(y + 0.5).astype(np.uint8)


def _read_pgm(data: bytes, origin: str) -> np.ndarray:
    # Tokenize the header by hand: whitespace-separated fields with
    # '#' comments running to end of line, per the netpbm grammar.
    if data[:2] != b"P5":
        raise FrameIOError(f"{origin}: not a binary PGM (missing P5 magic)")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise FrameIOError(f"{origin}: malformed PGM header near byte {start}")
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise FrameIOError(f"{origin}: unsupported maxval {maxval} (need 255)")
    pos += 1  # single whitespace byte separating header from raster
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise FrameIOError(f"{origin}: raster truncated ({len(raster)} of {width * height} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    """Write a frame as binary PGM with the canonical fixed header layout."""
    img = _check_frame(np.ascontiguousarray(img))
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def _read_png(path: Path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - environment-dependent
        raise FrameIOError(f"{path}: PNG support requires pillow") from exc
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 2:
        if arr.dtype != np.uint8:
            raise FrameIOError(f"{path}: only 8-bit PNGs are supported")
        return arr.copy()
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        # Alpha carries no intensity; drop it before the luma collapse.
        return luma(arr[..., :3])
    raise FrameIOError(f"{path}: unsupported PNG layout {arr.shape}")


def load_frame(path: str | Path) -> tuple[np.ndarray, str]:
    """Load one frame.

    Returns
    -------
    (image, payload_id)
        ``image`` is a 2-d uint8 array, ``payload_id`` the filename stem.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such frame: {path}")
    if path.suffix.lower() == ".png":
        img = _read_png(path)
    else:
        img = _read_pgm(path.read_bytes(), str(path))
    return _check_frame(img), path.stem


@dataclass(frozen=True)
class FrameSequence:
    """An ordered, immutable run of equally sized frames."""

    images: tuple[np.ndarray, ...]
    payload_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.images:
            raise FrameIOError("a sequence needs at least one frame")
        if len(self.images) != len(self.payload_ids):
            raise FrameIOError("images and payload_ids differ in length")
        shape = self.images[0].shape
        for img in self.images:
            _check_frame(img)
            if img.shape != shape:
                raise FrameIOError(f"frame size {img.shape} != sequence size {shape}")
        if len(set(self.payload_ids)) != len(self.payload_ids):
            raise FrameIOError("payload_ids must be unique within a sequence")

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self) -> Iterator[tuple[int, np.ndarray, str]]:
        return ((i, img, pid) for i, (img, pid) in enumerate(zip(self.images, self.payload_ids)))


def load_sequence(directory: str | Path, pattern: str = "*.pgm") -> FrameSequence:
    """Load every frame matching ``pattern``, ordered lexicographically by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such directory: {directory}")
    paths = sorted(directory.glob(pattern), key=lambda p: p.name)
    if not paths:
        raise FrameIOError(f"{directory}: no frames match {pattern!r}")
    images, pids = [], []
    for p in paths:
        img, pid = load_frame(p)
        images.append(img)
        pids.append(pid)
    return FrameSequence(tuple(images), tuple(pids))
