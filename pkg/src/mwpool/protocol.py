"""Framed binary messages exchanged between the master and its workers.

Every frame is ``b"MW" | version:u8 | tag:u8 | body_len:u32le | body``.
Bodies use a fixed little-endian layout: integers are fixed width, byte
strings carry a u32 length prefix, lists a u32 count prefix, optional
values a u8 presence flag, and floats are IEEE-754 binary64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Union

MAGIC = b"MW"
VERSION = 1
HEADER = struct.Struct("<2sBBI")
HEADER_LEN = HEADER.size
MAX_BODY = 2**32 - 9

_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


class ProtocolError(Exception):
    """Base class for framing and codec failures."""


class EncodeError(ProtocolError):
    pass


class BadMagic(ProtocolError):
    pass


class BadVersion(ProtocolError):
    pass


class UnknownTag(ProtocolError):
    pass


class Truncated(ProtocolError):
    pass


class TrailingBytes(ProtocolError):
    pass


@dataclass(frozen=True)
class Hello:
    proto_version: int = VERSION


@dataclass(frozen=True)
class InitData:
    """Registration ack: carries the master-assigned id and the init blob."""

    worker_id: int
    heartbeat_s: float
    blob: bytes


@dataclass(frozen=True)
class AssignTask:
    task_id: int
    parent: Optional[int]
    payload: bytes


@dataclass(frozen=True)
class TaskDone:
    task_id: int
    result: bytes
    children: tuple[bytes, ...] = ()


@dataclass(frozen=True)
class Heartbeat:
    worker_id: int
    time_s: float


@dataclass(frozen=True)
class Suspend:
    pass


@dataclass(frozen=True)
class Resume:
    pass


@dataclass(frozen=True)
class Shutdown:
    pass


Message = Union[Hello, InitData, AssignTask, TaskDone, Heartbeat, Suspend, Resume, Shutdown]

TAGS: dict[type, int] = {
    Hello: 1,
    InitData: 2,
    AssignTask: 3,
    TaskDone: 4,
    Heartbeat: 5,
    Suspend: 6,
    Resume: 7,
    Shutdown: 8,
}
_BY_TAG = {tag: cls for cls, tag in TAGS.items()}


def _pack(st: struct.Struct, value, what: str) -> bytes:
    try:
        return st.pack(value)
    except struct.error as exc:
        raise EncodeError(f"{what} out of range: {value!r}") from exc


def _blob(data: bytes) -> bytes:
    return _pack(_U32, len(data), "byte string length") + bytes(data)


def _body(msg: Message) -> bytes:
    if isinstance(msg, Hello):
        return _pack(_U8, msg.proto_version, "proto_version")
    if isinstance(msg, InitData):
        return (
            _pack(_U64, msg.worker_id, "worker_id")
            + _pack(_F64, msg.heartbeat_s, "heartbeat_s")
            + _blob(msg.blob)
        )
    if isinstance(msg, AssignTask):
        out = _pack(_U64, msg.task_id, "task_id")
        if msg.parent is None:
            out += b"\x00"
        else:
            out += b"\x01" + _pack(_U64, msg.parent, "parent")
        return out + _blob(msg.payload)
    if isinstance(msg, TaskDone):
        parts = [_pack(_U64, msg.task_id, "task_id"), _blob(msg.result)]
        parts.append(_pack(_U32, len(msg.children), "children count"))
        parts.extend(_blob(c) for c in msg.children)
        return b"".join(parts)
    if isinstance(msg, Heartbeat):
        return _pack(_U64, msg.worker_id, "worker_id") + _pack(_F64, msg.time_s, "time_s")
    if isinstance(msg, (Suspend, Resume, Shutdown)):
        return b""
    raise EncodeError(f"not a message: {type(msg).__name__}")


def encode(msg: Message) -> bytes:
    body = _body(msg)
    if len(body) > MAX_BODY:
        raise EncodeError(f"body of {len(body)} bytes exceeds frame limit")
    return HEADER.pack(MAGIC, VERSION, TAGS[type(msg)], len(body)) + body


class _Reader:
    def __init__(self, buf: memoryview):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> memoryview:
        end = self.pos + n
        if end > len(self.buf):
            raise Truncated(f"need {n} bytes at offset {self.pos}, have {len(self.buf) - self.pos}")
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self.take(8))[0]

    def blob(self) -> bytes:
        return bytes(self.take(self.u32()))


def _parse_body(tag: int, body: memoryview) -> Message:
    r = _Reader(body)
    if tag == 1:
        msg: Message = Hello(r.u8())
    elif tag == 2:
        msg = InitData(r.u64(), r.f64(), r.blob())
    elif tag == 3:
        task_id = r.u64()
        flag = r.u8()
        if flag > 1:
            raise ProtocolError(f"bad presence flag {flag}")
        parent = r.u64() if flag else None
        msg = AssignTask(task_id, parent, r.blob())
    elif tag == 4:
        task_id = r.u64()
        result = r.blob()
        count = r.u32()
        msg = TaskDone(task_id, result, tuple(r.blob() for _ in range(count)))
    elif tag == 5:
        msg = Heartbeat(r.u64(), r.f64())
    else:
        msg = _BY_TAG[tag]()
    if r.pos != len(body):
        raise TrailingBytes(f"{len(body) - r.pos} unread body bytes")
    return msg


def _check_header(data) -> tuple[int, int]:
    magic, version, tag, body_len = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    if tag not in _BY_TAG:
        raise UnknownTag(f"unknown tag {tag}")
    return tag, body_len


def decode(data: bytes) -> Message:
    """Decode exactly one complete frame."""
    if len(data) < HEADER_LEN:
        raise Truncated(f"frame shorter than {HEADER_LEN}-byte header")
    tag, body_len = _check_header(data)
    end = HEADER_LEN + body_len
    if len(data) < end:
        raise Truncated(f"body_len {body_len} exceeds {len(data) - HEADER_LEN} available bytes")
    if len(data) > end:
        raise TrailingBytes(f"{len(data) - end} bytes after frame")
    return _parse_body(tag, memoryview(data)[HEADER_LEN:end])


class FrameReader:
    """Incremental decoder for a byte stream carrying back-to-back frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf += data
        out = []
        while len(self._buf) >= HEADER_LEN:
            _, body_len = _check_header(self._buf)
            end = HEADER_LEN + body_len
            if len(self._buf) < end:
                break
            frame = bytes(self._buf[:end])
            del self._buf[:end]
            out.append(decode(frame))
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def decode_stream(data: bytes) -> list[Message]:
    reader = FrameReader()
    msgs = reader.feed(data)
    if reader.pending:
        raise Truncated(f"{reader.pending} bytes of incomplete frame at end of stream")
    return msgs
