"""Halo transport between localities: framed TCP ring and in-process loopback.

Wire format (all little-endian):

    length  u64   bytes after this field (= 5 + payload bytes)
    step    u32   simulation step the payload belongs to
    dir     u8    side of the RECEIVER the data arrives on: 0=left, 1=right
    payload f64[] halo cell values, at least one

Frames are delivered into a per-locality Channel keyed (step, direction), so
message arrival order never matters: a fast neighbor can run a step ahead
and its frame waits in the slot for that step. Ring links are established
deterministically (the lower rank dials the higher rank) with one socket per
flow direction per neighbor, so each link is a plain FIFO byte stream.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from dataclasses import dataclass

import numpy as np

from .taskgraph import Channel, failed, ready

HEADER = struct.Struct("<QIB")  # length, step, direction
DIR_CODE = {"left": 0, "right": 1}
DIR_NAME = {0: "left", 1: "right"}
ELEMENT_SIZE = 8


class ProtocolError(ValueError):
    """Malformed frame on the wire."""


class TransportError(RuntimeError):
    """Link establishment or delivery failure."""


@dataclass
class Frame:
    step: int
    direction: str
    payload: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, Frame)
            and self.step == other.step
            and self.direction == other.direction
            and np.array_equal(self.payload, other.payload)
        )


def encode_frame(step, direction, payload):
    """Serialize one halo frame; payload must be non-empty."""
    if isinstance(direction, str):
        direction = DIR_CODE[direction]
    if direction not in (0, 1):
        raise ProtocolError(f"direction byte must be 0 or 1, got {direction}")
    data = np.ascontiguousarray(payload, dtype="<f8")
    if data.size == 0:
        raise ProtocolError("empty payload")
    body = data.tobytes()
    return HEADER.pack(5 + len(body), step, direction) + body


def decode_frame(buf):
    """Decode one frame from the head of `buf`.

    Returns (Frame, bytes_consumed), or None when more bytes are needed.
    """
    if len(buf) < 8:
        return None
    (length,) = struct.unpack_from("<Q", buf, 0)
    if len(buf) < 8 + length:
        return None
    if length < 5 + ELEMENT_SIZE or (length - 5) % ELEMENT_SIZE:
        raise ProtocolError(f"frame length {length} does not hold whole values")
    _, step, direction = HEADER.unpack_from(buf, 0)
    if direction > 1:
        raise ProtocolError(f"direction byte must be 0 or 1, got {direction}")
    payload = np.frombuffer(buf, dtype="<f8", count=(length - 5) // ELEMENT_SIZE, offset=HEADER.size)
    return Frame(step, DIR_NAME[direction], payload.copy()), 8 + length


def _mirror(direction):
    return "left" if direction == "right" else "right"


class InprocRing:
    """All localities of a ring in one process, wired through channels."""

    def __init__(self, n_ranks):
        if n_ranks < 1:
            raise ValueError("ring needs at least one rank")
        self.n_ranks = n_ranks
        self.channels = [Channel() for _ in range(n_ranks)]

    def locality(self, rank):
        return _InprocLocality(self, rank)

    def localities(self):
        return [self.locality(r) for r in range(self.n_ranks)]


class _InprocLocality:
    def __init__(self, ring, rank):
        self.ring = ring
        self.rank = rank
        self.n_ranks = ring.n_ranks

    def send_halo(self, neighbor, step, cells):
        """Deliver cells to the left/right neighbor, keyed for `step`."""
        n = self.ring.n_ranks
        target = (self.rank - 1) % n if neighbor == "left" else (self.rank + 1) % n
        payload = np.array(cells, dtype=np.float64, copy=True)
        try:
            self.ring.channels[target].set((step, _mirror(neighbor)), payload)
        except Exception as err:  # duplicate key and friends
            return failed(err)
        return ready(None)

    def halo_future(self, direction, step):
        return self.ring.channels[self.rank].get((step, direction))

    def close(self):
        pass


# TCP hello sent by the dialer right after connect: dialer rank + link code.
# Codes say what the socket carries, from the dialer's point of view:
#   0  dialer -> acceptor data, acceptor is the dialer's RIGHT neighbor
#   1  acceptor -> dialer data, acceptor is the dialer's RIGHT neighbor
#   2  dialer -> acceptor data, acceptor is the dialer's LEFT neighbor (wrap)
#   3  acceptor -> dialer data, acceptor is the dialer's LEFT neighbor (wrap)
HELLO = struct.Struct("<IB")


def _parse_addr(addr):
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must be HOST:PORT, got {addr!r}")
    return host, int(port)


def _shutdown_close(sock):
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    try:
        sock.close()
    except OSError:
        pass


def _recv_exact(sock, n):
    chunks = []
    got = 0
    while got < n:
        piece = sock.recv(n - got)
        if not piece:
            return None
        chunks.append(piece)
        got += len(piece)
    return b"".join(chunks)


class TcpLocality:
    """One ring member talking TCP to its two neighbors.

    `peers` lists every rank's HOST:PORT in rank order; `rank` indexes it.
    A pre-bound listener socket may be passed in (tests bind port 0 first to
    learn ephemeral ports before constructing the ring).
    """

    def __init__(self, rank, peers, listener=None, timeout=30.0):
        self.rank = rank
        self.peers = list(peers)
        self.n_ranks = len(peers)
        self.channel = Channel()
        self.timeout = timeout
        self._send_socks = {}  # 'left'/'right' -> socket
        self._send_locks = {"left": threading.Lock(), "right": threading.Lock()}
        self._readers = []
        self._listener = listener
        self._closed = False
        self._connect()

    # -- link establishment -------------------------------------------------

    def _expected_links(self):
        """(dials, accepts): link codes this rank dials / waits for."""
        n = self.n_ranks
        r = self.rank
        dials = []  # (peer_rank, code)
        accepts = 0
        if n == 1:
            return dials, accepts
        if r + 1 <= n - 1:
            dials += [(r + 1, 0), (r + 1, 1)]
        if r > 0:
            accepts += 2
        if r == 0:
            dials += [(n - 1, 2), (n - 1, 3)]
        if r == n - 1:
            accepts += 2
        return dials, accepts

    def _classify(self, code):
        # Receiving side of a dialer's hello; see the code table above.
        if code == 0:
            return ("in", "left")  # data from my left neighbor
        if code == 1:
            return ("out", "left")  # I write data heading to my left
        if code == 2:
            return ("in", "right")
        if code == 3:
            return ("out", "right")
        raise ProtocolError(f"unknown link code {code}")

    def _dialer_role(self, code):
        # Dialing side keeps the socket under the matching local link name.
        if code == 0:
            return ("out", "right")
        if code == 1:
            return ("in", "right")
        if code == 2:
            return ("out", "left")
        return ("in", "left")

    def _connect(self):
        dials, accepts = self._expected_links()
        if not dials and not accepts:
            return
        deadline = time.monotonic() + self.timeout

        if self._listener is None:
            host, port = _parse_addr(self.peers[self.rank])
            self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            self._listener.bind((host, port))
            self._listener.listen(8)

        inbound = []
        accept_error = []

        def accept_loop():
            try:
                self._listener.settimeout(0.2)
                while len(inbound) < accepts:
                    if time.monotonic() > deadline:
                        return
                    try:
                        conn, _ = self._listener.accept()
                    except socket.timeout:
                        continue
                    hello = _recv_exact(conn, HELLO.size)
                    if hello is None:
                        conn.close()
                        continue
                    peer_rank, code = HELLO.unpack(hello)
                    inbound.append((peer_rank, code, conn))
            except OSError as err:
                accept_error.append(err)

        acceptor = threading.Thread(target=accept_loop, daemon=True)
        acceptor.start()

        unreachable = []
        for peer_rank, code in dials:
            sock = self._dial(peer_rank, deadline)
            if sock is None:
                unreachable.append(self.peers[peer_rank])
                continue
            sock.sendall(HELLO.pack(self.rank, code))
            kind, side = self._dialer_role(code)
            self._install(kind, side, sock, peer_rank)

        acceptor.join(max(0.0, deadline - time.monotonic()) + 1.0)
        if unreachable or len(inbound) < accepts:
            self.close()
            raise TransportError(
                f"rank {self.rank}: ring establishment timed out; unreachable peers: "
                f"{unreachable or 'inbound connections missing'}"
            )
        for peer_rank, code, conn in inbound:
            kind, side = self._classify(code)
            self._install(kind, side, conn, peer_rank)

    def _dial(self, peer_rank, deadline):
        host, port = _parse_addr(self.peers[peer_rank])
        while time.monotonic() < deadline:
            try:
                sock = socket.create_connection((host, port), timeout=1.0)
                sock.settimeout(None)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                return sock
            except OSError:
                time.sleep(0.05)
        return None

    def _install(self, kind, side, sock, peer_rank):
        if kind == "out":
            self._send_socks[side] = (sock, peer_rank)
        else:
            reader = threading.Thread(
                target=self._read_loop, args=(sock, peer_rank), daemon=True
            )
            self._readers.append((reader, sock))
            reader.start()

    # -- data plane ----------------------------------------------------------

    def _read_loop(self, sock, peer_rank):
        buf = b""
        try:
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    return
                buf += chunk
                while True:
                    decoded = decode_frame(buf)
                    if decoded is None:
                        break
                    frame, used = decoded
                    buf = buf[used:]
                    self.channel.set((frame.step, frame.direction), frame.payload)
        except (OSError, ProtocolError):
            if not self._closed:
                raise

    def send_halo(self, neighbor, step, cells):
        """Frame and send cells to the left/right neighbor; local completion."""
        if self.n_ranks == 1:
            payload = np.array(cells, dtype=np.float64, copy=True)
            try:
                self.channel.set((step, _mirror(neighbor)), payload)
            except Exception as err:
                return failed(err)
            return ready(None)
        entry = self._send_socks.get(neighbor)
        if entry is None:
            return failed(TransportError(f"no {neighbor} link from rank {self.rank}"))
        sock, peer_rank = entry
        data = encode_frame(step, _mirror(neighbor), cells)
        try:
            with self._send_locks[neighbor]:
                sock.sendall(data)
        except OSError as err:
            return failed(
                TransportError(f"send to rank {peer_rank} ({self.peers[peer_rank]}) failed: {err}")
            )
        return ready(None)

    def halo_future(self, direction, step):
        return self.channel.get((step, direction))

    def close(self):
        self._closed = True
        for sock, _ in self._send_socks.values():
            _shutdown_close(sock)
        for _, sock in self._readers:
            # shutdown wakes a reader blocked in recv; close alone does not
            _shutdown_close(sock)
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        for reader, _ in self._readers:
            reader.join(timeout=2.0)


def loopback_ring(n_ranks, timeout=30.0):
    """n TcpLocality instances over 127.0.0.1 with ephemeral ports.

    Used by tests and in-process tcp runs; listeners are bound first so the
    full peer list is known before any rank dials.
    """
    listeners = []
    peers = []
    for _ in range(n_ranks):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.bind(("127.0.0.1", 0))
        sock.listen(8)
        listeners.append(sock)
        peers.append(f"127.0.0.1:{sock.getsockname()[1]}")

    locs = [None] * n_ranks
    errors = []

    def build(rank):
        try:
            locs[rank] = TcpLocality(rank, peers, listener=listeners[rank], timeout=timeout)
        except Exception as err:  # noqa: BLE001
            errors.append(err)

    threads = [threading.Thread(target=build, args=(r,)) for r in range(n_ranks)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return locs


def establish_ring(peers, rank=None, transport="inproc", timeout=30.0):
    """Connect the ring and return locality handle(s).

    inproc: returns every locality of an in-process ring. tcp: returns the
    single locality for `rank`, dialing/accepting per the deterministic
    lower-dials-higher rule.
    """
    if transport == "inproc":
        return InprocRing(len(peers)).localities()
    if transport == "tcp":
        if rank is None:
            raise ValueError("tcp transport needs the local rank")
        return TcpLocality(rank, peers, timeout=timeout)
    raise ValueError(f"unknown transport {transport!r}")
