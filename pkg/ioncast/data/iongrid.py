"""
IONGRID container: a seekable, self-describing stack of gridded frames.

Layout (little-endian):

    header    magic "IONG" | version u16 | cadence s u32 | n_frames u32 | C u16 | H u16 | W u16
    channels  C x (u16 byte length + UTF-8 name)
    frames    n_frames x (u64 UTC epoch seconds + C*H*W float32, row-major)

Maps run north to south and west to east from longitude -180.
"""
from __future__ import annotations

import struct
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ioncast.errors import FormatError
from ioncast.logging_config import get_logger
from ioncast.metrics import record_format_error

logger = get_logger(__name__)

MAGIC = b"IONG"
VERSION = 1
HEADER = struct.Struct("<4sHIIHHH")
NAME_LENGTH = struct.Struct("<H")


@dataclass
class StateFrame:
    """One timestamp's channel stack [C x H x W]."""

    timestamp: int
    data: np.ndarray


@dataclass
class GridStack:
    """Frames of one IONGRID file held in memory."""

    channels: list[str]
    cadence: int
    timestamps: np.ndarray  # int64 [N]
    data: np.ndarray  # float32 [N x C x H x W]

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise FormatError(f"frame data must be [N x C x H x W], got shape {self.data.shape}")
        if self.data.shape[0] != self.timestamps.shape[0] or self.data.shape[1] != len(self.channels):
            raise FormatError(
                f"{self.timestamps.shape[0]} timestamps and {len(self.channels)} channels "
                f"do not match data of shape {self.data.shape}"
            )

    @property
    def n_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def shape(self) -> tuple[int, int, int]:
        """(C, H, W)."""
        _, c, h, w = self.data.shape
        return int(c), int(h), int(w)

    def frames(self) -> Iterator[StateFrame]:
        for t, frame in zip(self.timestamps, self.data):
            yield StateFrame(timestamp=int(t), data=frame)

    def channel(self, name: str) -> np.ndarray:
        """All frames of one channel [N x H x W]."""
        return self.data[:, self.channels.index(name)]


def _frame_dtype(c: int, h: int, w: int) -> np.dtype:
    return np.dtype([("timestamp", "<u8"), ("values", "<f4", (c, h, w))])


def write_grid_stack(path: Path, stack: GridStack) -> None:
    """Write a stack; the file is replaced atomically."""
    c, h, w = stack.shape
    if max(c, h, w) > 0xFFFF:
        raise FormatError(f"dimensions {(c, h, w)} exceed the u16 header fields")
    if stack.n_frames > 1 and np.any(np.diff(stack.timestamps) <= 0):
        raise FormatError("frame timestamps must be strictly increasing")
    path.parent.mkdir(parents=True, exist_ok=True)
    records = np.empty(stack.n_frames, dtype=_frame_dtype(c, h, w))
    records["timestamp"] = stack.timestamps.astype(np.uint64)
    records["values"] = stack.data
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, stack.cadence, stack.n_frames, c, h, w))
        for name in stack.channels:
            encoded = name.encode("utf-8")
            f.write(NAME_LENGTH.pack(len(encoded)))
            f.write(encoded)
        f.write(records.tobytes())
    tmp.replace(path)
    logger.debug("iongrid_written", path=str(path), frames=stack.n_frames, channels=c, height=h, width=w)


def _fail(path: Path, message: str) -> FormatError:
    record_format_error("iongrid")
    return FormatError(f"{path}: {message}")


def read_grid_stack(path: Path) -> GridStack:
    """
    Read an IONGRID file.

    Raises:
        FormatError: bad magic or version, truncated file, trailing bytes or
            timestamps out of order. Size errors report the expected and
            actual byte counts.
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise _fail(path, f"truncated header: expected {HEADER.size} bytes, found {len(raw)}")
    magic, version, cadence, n_frames, c, h, w = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise _fail(path, f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise _fail(path, f"unsupported version {version}, expected {VERSION}")

    offset = HEADER.size
    channels: list[str] = []
    for index in range(c):
        if offset + NAME_LENGTH.size > len(raw):
            raise _fail(path, f"truncated channel table at channel {index}, offset {offset}")
        (length,) = NAME_LENGTH.unpack_from(raw, offset)
        offset += NAME_LENGTH.size
        if offset + length > len(raw):
            raise _fail(path, f"truncated channel name {index} at offset {offset}")
        try:
            channels.append(raw[offset : offset + length].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise _fail(path, f"channel name {index} at offset {offset} is not UTF-8") from exc
        offset += length

    dtype = _frame_dtype(c, h, w)
    expected = offset + n_frames * dtype.itemsize
    if len(raw) != expected:
        raise _fail(
            path,
            f"size mismatch: header declares {n_frames} frame(s) of {c}x{h}x{w} "
            f"starting at offset {offset}, expected {expected} bytes, found {len(raw)}",
        )
    records = np.frombuffer(raw, dtype=dtype, count=n_frames, offset=offset)
    timestamps = records["timestamp"].astype(np.int64)
    if n_frames > 1 and np.any(np.diff(timestamps) <= 0):
        raise _fail(path, "frame timestamps are not strictly increasing")
    data = np.array(records["values"], dtype=np.float32).reshape(n_frames, c, h, w)
    return GridStack(channels=channels, cadence=int(cadence), timestamps=timestamps, data=data)
