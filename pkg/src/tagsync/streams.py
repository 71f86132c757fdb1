"""Time-tag stream data model and file I/O.

A stream is a sorted array of arrival times counted in integer units of the
recording device's least-significant bit (LSB). Everything downstream
(coincidence counting, histogramming) stays in integer picosecond arithmetic,
so window membership tests are exact; floats only appear in the simulator
(before quantization) and in the fitting code.

Two interchange formats are supported:

* CSV: ``# lsb_ps=<int>``, ``# duration_ps=<int>``, ``# clock_id=<str>``
  header lines, then one decimal tick count per line, LF-terminated.
* Binary: magic ``TTG1``, little-endian u32 lsb_ps, u64 duration_ps,
  u64 tag count, then that many u64 tick values. The binary layout does not
  carry clock_id; loading assigns the empty label.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, RangeError, ValidationError

BINARY_MAGIC = b"TTG1"
_BINARY_HEADER = struct.Struct("<4sIQQ")

# 63-bit ceiling: tick * lsb_ps must stay a valid signed picosecond count.
MAX_TIME_PS = 2**63 - 1


@dataclass(frozen=True, eq=False)
class TagStream:
    """Immutable, sorted stream of time tags.

    ``tags`` are tick counts (multiples of ``lsb_ps``); ``duration_ps`` is the
    acquisition span, carried explicitly so rate/precision math works even
    when the tail of the acquisition is empty.
    """

    tags: np.ndarray
    lsb_ps: int = 1
    clock_id: str = ""
    duration_ps: int = 0
    sorted_on_load: bool = field(default=False, compare=False)

    def __post_init__(self):
        tags = np.ascontiguousarray(self.tags, dtype=np.int64)
        if tags.ndim != 1:
            raise ValidationError("tags must be one-dimensional")
        if int(self.lsb_ps) < 1:
            raise ValidationError(f"lsb_ps must be >= 1, got {self.lsb_ps}")
        if int(self.duration_ps) < 0:
            raise ValidationError(f"duration_ps must be >= 0, got {self.duration_ps}")
        if tags.size:
            if tags[0] < 0:
                raise RangeError(f"negative tag {tags[0]}")
            if np.any(tags[1:] < tags[:-1]):
                raise ValidationError("tags must be sorted nondecreasing")
            top = int(tags[-1])
            if top > MAX_TIME_PS // int(self.lsb_ps):
                raise RangeError(f"tag {top} * lsb {self.lsb_ps} overflows 63-bit ps")
            if top * int(self.lsb_ps) > int(self.duration_ps):
                raise ValidationError(
                    f"tag at {top * int(self.lsb_ps)} ps beyond duration {self.duration_ps} ps"
                )
        tags.setflags(write=False)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "lsb_ps", int(self.lsb_ps))
        object.__setattr__(self, "duration_ps", int(self.duration_ps))

    def __len__(self):
        return self.tags.size

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (
            self.lsb_ps == other.lsb_ps
            and self.duration_ps == other.duration_ps
            and self.clock_id == other.clock_id
            and self.tags.size == other.tags.size
            and bool(np.all(self.tags == other.tags))
        )

    def times_ps(self) -> np.ndarray:
        """Arrival times in integer picoseconds (read-only view when lsb is 1)."""
        if self.lsb_ps == 1:
            return self.tags
        return self.tags * np.int64(self.lsb_ps)


def quantize_to_lsb(times_ps: np.ndarray, lsb_ps: int) -> np.ndarray:
    """Round real-valued picosecond times to tick counts, half away from zero."""
    scaled = np.asarray(times_ps, dtype=np.float64) / float(lsb_ps)
    return (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(np.int64)


def shift_stream(stream: TagStream, delta_ps: int) -> TagStream:
    """Translate every tag by ``delta_ps`` (must be a multiple of the LSB).

    The duration shifts along with the tags, so shifting by ``+d`` then ``-d``
    restores the original stream exactly.
    """
    delta_ps = int(delta_ps)
    if delta_ps % stream.lsb_ps != 0:
        raise ValidationError(
            f"shift {delta_ps} ps is not a multiple of lsb {stream.lsb_ps} ps"
        )
    new_duration = stream.duration_ps + delta_ps
    if new_duration < 0:
        raise RangeError(f"shift {delta_ps} ps drives duration negative")
    dtick = delta_ps // stream.lsb_ps
    if stream.tags.size and int(stream.tags[0]) + dtick < 0:
        raise RangeError(f"shift {delta_ps} ps would produce a negative tag")
    return TagStream(
        tags=stream.tags + np.int64(dtick),
        lsb_ps=stream.lsb_ps,
        clock_id=stream.clock_id,
        duration_ps=new_duration,
    )


def _finish_load(tags: np.ndarray, lsb_ps: int, duration_ps, clock_id: str) -> TagStream:
    sorted_on_load = False
    if tags.size and np.any(tags[1:] < tags[:-1]):
        tags = np.sort(tags)
        sorted_on_load = True
    if duration_ps is None:
        duration_ps = int(tags[-1]) * lsb_ps if tags.size else 0
    return TagStream(
        tags=tags,
        lsb_ps=lsb_ps,
        clock_id=clock_id,
        duration_ps=duration_ps,
        sorted_on_load=sorted_on_load,
    )


def _load_csv(path) -> TagStream:
    lsb_ps = None
    duration_ps = None
    clock_id = ""
    ticks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    continue
                key, value = body.split("=", 1)
                key = key.strip()
                try:
                    if key == "lsb_ps":
                        lsb_ps = int(value)
                    elif key == "duration_ps":
                        duration_ps = int(value)
                    elif key == "clock_id":
                        clock_id = value
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad header value {value!r}") from exc
                continue
            try:
                ticks.append(int(line))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: not an integer tick: {line!r}") from exc
            if ticks[-1] < 0:
                raise RangeError(f"{path}:{lineno}: negative timestamp {ticks[-1]}")
    if lsb_ps is None:
        lsb_ps = 1
    tags = np.asarray(ticks, dtype=np.int64)
    return _finish_load(tags, lsb_ps, duration_ps, clock_id)


def _load_binary(path) -> TagStream:
    with open(path, "rb") as fh:
        header = fh.read(_BINARY_HEADER.size)
        if len(header) != _BINARY_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, lsb_ps, duration_ps, count = _BINARY_HEADER.unpack(header)
        if magic != BINARY_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {BINARY_MAGIC!r}")
        payload = fh.read(8 * count)
        if len(payload) != 8 * count:
            raise FormatError(f"{path}: expected {count} tags, file truncated")
    raw = np.frombuffer(payload, dtype="<u8")
    if raw.size and int(raw.max()) > MAX_TIME_PS:
        raise RangeError(f"{path}: tick value exceeds signed 63-bit range")
    tags = raw.astype(np.int64)
    return _finish_load(tags, int(lsb_ps), int(duration_ps), "")


def load_stream(path, format: str = "csv") -> TagStream:
    """Load and validate a stream; input tags are sorted if needed.

    When the file was unsorted the returned stream has ``sorted_on_load``
    set, acting as the warning flag.
    """
    if format == "csv":
        return _load_csv(path)
    if format == "binary":
        return _load_binary(path)
    raise ValidationError(f"unknown format {format!r} (use 'csv' or 'binary')")


def save_stream(stream: TagStream, path, format: str = "csv") -> None:
    """Write a stream; ``load_stream(save_stream(s))`` round-trips bit-exactly.

    (For the binary format the clock_id label is not stored.)
    """
    try:
        if format == "csv":
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(f"# lsb_ps={stream.lsb_ps}\n")
                fh.write(f"# duration_ps={stream.duration_ps}\n")
                fh.write(f"# clock_id={stream.clock_id}\n")
                for tick in stream.tags:
                    fh.write(f"{int(tick)}\n")
        elif format == "binary":
            with open(path, "wb") as fh:
                fh.write(
                    _BINARY_HEADER.pack(
                        BINARY_MAGIC, stream.lsb_ps, stream.duration_ps, stream.tags.size
                    )
                )
                fh.write(stream.tags.astype("<u8").tobytes())
        else:
            raise ValidationError(f"unknown format {format!r} (use 'csv' or 'binary')")
    except OSError as exc:
        raise OSError(f"failed writing stream to {path}: {exc}") from exc
