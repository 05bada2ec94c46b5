"""Transport backends: an in-process ordered queue and TCP stream sockets."""

from __future__ import annotations

import heapq
import itertools
import logging
import selectors
import socket
import threading
import time
from typing import Any, Iterator, Optional

from .master import Event, Tick
from .protocol import FrameReader, Message, ProtocolError, decode, encode

log = logging.getLogger(__name__)

DEFAULT_PORT = 7477


def parse_endpoint(text: str, default_port: int = DEFAULT_PORT) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return text, default_port
    if not port.isdigit():
        raise ValueError(f"bad port in endpoint {text!r}")
    return host or "127.0.0.1", int(port)


class EventQueue:
    """Deterministic in-process delivery queue.

    Items are dequeued by ``(virtual_time, sender)`` and then by insertion
    order, so equal keys keep FIFO order. ``sender`` may be any orderable
    value (the simulator uses tuples).
    """

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()

    def enqueue(self, virtual_time, sender, item: Any) -> None:
        heapq.heappush(self._heap, (virtual_time, sender, next(self._seq), item))

    def dequeue(self) -> tuple[Any, Any, Any]:
        t, sender, _, item = heapq.heappop(self._heap)
        return t, sender, item

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


def wire(msg: Message) -> Message:
    """Send ``msg`` through the codec, as an in-process channel does."""
    return decode(encode(msg))


class SocketMasterTransport:
    """Single-threaded TCP server feeding a master's event loop.

    Events are yielded in arrival order; a :class:`Tick` is produced every
    ``tick_s`` seconds of wall time. A connection that sends a malformed
    frame is dropped; a closed connection produces no event (the master
    learns about it from the missing heartbeats).
    """

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT, tick_s: float = 1.0):
        self.tick_s = tick_s
        self._sel = selectors.DefaultSelector()
        self._server = socket.create_server((host, port), reuse_port=False)
        self._server.setblocking(False)
        self._sel.register(self._server, selectors.EVENT_READ, None)
        self._conns: dict[int, socket.socket] = {}
        self._readers: dict[int, FrameReader] = {}
        self._ids = itertools.count(1)
        self._t0 = time.monotonic()
        self._closed = False

    @property
    def address(self) -> tuple[str, int]:
        return self._server.getsockname()[:2]

    def now(self) -> float:
        return time.monotonic() - self._t0

    def _drop(self, cid: int) -> None:
        sock = self._conns.pop(cid, None)
        self._readers.pop(cid, None)
        if sock is not None:
            try:
                self._sel.unregister(sock)
            except (KeyError, ValueError):
                pass
            sock.close()

    def events(self) -> Iterator[Any]:
        next_tick = self.tick_s
        while not self._closed:
            timeout = max(0.0, next_tick - self.now())
            for key, _ in self._sel.select(timeout):
                if key.data is None:
                    sock, _ = self._server.accept()
                    sock.setblocking(True)
                    cid = next(self._ids)
                    self._conns[cid] = sock
                    self._readers[cid] = FrameReader()
                    self._sel.register(sock, selectors.EVENT_READ, cid)
                    continue
                cid = key.data
                try:
                    data = self._conns[cid].recv(65536)
                except OSError:
                    data = b""
                if not data:
                    self._drop(cid)
                    continue
                try:
                    msgs = self._readers[cid].feed(data)
                except ProtocolError as exc:
                    log.warning("dropping connection %d: %s", cid, exc)
                    self._drop(cid)
                    continue
                for msg in msgs:
                    yield Event(self.now(), cid, msg)
            if self.now() >= next_tick:
                yield Tick(self.now())
                next_tick += self.tick_s

    def send(self, conn: int, msg: Message) -> None:
        sock = self._conns.get(conn)
        if sock is None:
            return
        try:
            sock.sendall(encode(msg))
        except OSError as exc:
            log.warning("send to connection %d failed: %s", conn, exc)
            self._drop(conn)

    def close(self) -> None:
        self._closed = True
        for cid in list(self._conns):
            self._drop(cid)
        self._sel.unregister(self._server)
        self._server.close()
        self._sel.close()


class SocketChannel:
    """Worker-side full-duplex framed connection.

    ``send`` is safe to call from a heartbeat thread while another thread
    blocks in ``recv``.
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._reader = FrameReader()
        self._inbox: list[Message] = []
        self._send_lock = threading.Lock()

    @classmethod
    def connect(cls, host: str, port: int, timeout: Optional[float] = 10.0) -> "SocketChannel":
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        return cls(sock)

    def send(self, msg: Message) -> None:
        data = encode(msg)
        with self._send_lock:
            self.sock.sendall(data)

    def recv(self) -> Message:
        """Block for the next message; raise ConnectionError on EOF."""
        while not self._inbox:
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("connection closed by peer")
            self._inbox.extend(self._reader.feed(data))
        return self._inbox.pop(0)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
