"""File formats: the TNS3 tensor container, binary PGM/PPM images, and
frame directories for image sequences.

TNS3 layout (all integers little-endian):

    bytes 0..3   magic "TNS3"
    bytes 4..7   u32 version, currently 1
    bytes 8..31  three u64 dimensions m, n, p
    bytes 32..   m*n*p IEEE-754 float64 values, frontal-slice-major with
                 column-major slices (offset i + j*m + k*m*n)

Images are 8-bit binary PGM (P5) or PPM (P6); pixels map to [0, 1] floats
by dividing by 255. Writing clamps to [0, 1], scales by 255 and rounds
half away from zero.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .tensor import DenseTensor3

__all__ = [
    "save_tensor",
    "load_tensor",
    "read_image",
    "write_image",
    "read_frames",
    "write_frames",
    "pack_planes",
    "unpack_planes",
]

_MAGIC = b"TNS3"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")


def save_tensor(path, x: DenseTensor3) -> None:
    """Write a tensor to a TNS3 file."""
    m, n, p = x.shape
    payload = x.data.ravel(order="F").astype("<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, m, n, p))
        fh.write(payload.tobytes())


def load_tensor(path) -> DenseTensor3:
    """Read a TNS3 file back into a tensor."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, m, n, p = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        count = m * n * p
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise FormatError(f"{path}: payload shorter than {count} values")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if not np.isfinite(flat).all():
        raise FormatError(f"{path}: payload contains non-finite values")
    return DenseTensor3(flat.reshape((m, n, p), order="F"))


def _read_header_tokens(fh) -> list[bytes]:
    """Collect the three numeric header tokens, skipping '#' comments."""
    tokens: list[bytes] = []
    while len(tokens) < 3:
        ch = fh.read(1)
        if not ch:
            raise FormatError("unexpected end of image header")
        if ch.isspace():
            continue
        if ch == b"#":
            while ch and ch not in b"\r\n":
                ch = fh.read(1)
            continue
        tok = ch
        while True:
            ch = fh.read(1)
            if not ch or ch.isspace():
                break
            tok += ch
        tokens.append(tok)
    return tokens


def read_image(path) -> np.ndarray:
    """Read a binary PGM/PPM file to floats in [0, 1].

    Returns (h, w) for grayscale and (h, w, 3) for color.
    """
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise FormatError(f"{path}: expected binary PGM/PPM, got {magic!r}")
        tokens = _read_header_tokens(fh)
        try:
            w, h, maxval = (int(t) for t in tokens)
        except ValueError as exc:
            raise FormatError(f"{path}: malformed header tokens {tokens}") from exc
        if maxval <= 0 or maxval > 255:
            raise FormatError(f"{path}: only 8-bit images supported (maxval {maxval})")
        channels = 1 if magic == b"P5" else 3
        raw = fh.read(w * h * channels)
        if len(raw) != w * h * channels:
            raise FormatError(f"{path}: pixel data shorter than {w}x{h}")
    arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        return arr.reshape(h, w)
    return arr.reshape(h, w, 3)


def write_image(path, img: np.ndarray) -> None:
    """Write floats in [0, 1] as binary PGM (2-d input) or PPM (h x w x 3)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise ShapeError(f"expected (h, w) or (h, w, 3), got {arr.shape}")
    # Clamp, scale, round half away from zero; values are nonnegative after
    # the clamp so floor(x + 0.5) is exactly that rounding.
    quant = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(quant.tobytes())


def _frame_key(path: Path):
    digits = re.findall(r"\d+", path.stem)
    return (0, int(digits[-1]), path.name) if digits else (1, 0, path.name)


def read_frames(directory) -> list[tuple[str, np.ndarray]]:
    """Read all PGM/PPM frames in a directory, numerically ordered.

    Frames are ordered by the last integer in their stem (frame2 before
    frame10), falling back to name order for digit-free names.
    """
    root = Path(directory)
    if not root.is_dir():
        raise FormatError(f"{root}: not a directory")
    paths = [q for q in root.iterdir() if q.suffix.lower() in (".pgm", ".ppm")]
    if not paths:
        raise FormatError(f"{root}: no PGM/PPM frames found")
    paths.sort(key=_frame_key)
    return [(q.name, read_image(q)) for q in paths]


def write_frames(directory, stem: str, frames: list[np.ndarray]) -> list[Path]:
    """Write a sequence of grayscale frames as stem_000.pgm, stem_001.pgm, ..."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for idx, frame in enumerate(frames):
        path = root / f"{stem}_{idx:03d}.pgm"
        write_image(path, frame)
        written.append(path)
    return written


def pack_planes(planes: list[np.ndarray]) -> DenseTensor3:
    """Stack s equally-sized h x w planes into an h x s x w tensor.

    Each plane is twisted so its columns become tubes; plane j occupies
    lateral slice j. Color channels and video frames both ride this path.
    """
    if not planes:
        raise ShapeError("need at least one plane")
    first = np.asarray(planes[0], dtype=np.float64)
    if first.ndim != 2:
        raise ShapeError(f"planes must be 2-d, got {first.shape}")
    stack = np.empty((first.shape[0], len(planes), first.shape[1]))
    for j, plane in enumerate(planes):
        arr = np.asarray(plane, dtype=np.float64)
        if arr.shape != first.shape:
            raise ShapeError(f"plane {j} has shape {arr.shape}, expected {first.shape}")
        stack[:, j, :] = arr
    return DenseTensor3(stack)


def unpack_planes(x: DenseTensor3) -> list[np.ndarray]:
    """Inverse of pack_planes: recover the s individual h x w planes."""
    return [x.data[:, j, :].copy() for j in range(x.n)]
