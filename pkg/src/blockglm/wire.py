"""TCP reduction transport: length-prefixed frames of little-endian IEEE-754
doubles, summed on a fixed-order reduction tree (a star rooted at rank 0).

Frame layout: [u32 LE tag][u32 LE payload length in bytes][payload]. Data
frames carry the per-rank collective sequence number in the tag; control
frames set the high tag bit and carry a 1-byte payload. The ALB progress
channel is a second connection per rank, serviced by daemon threads, with
rank 0 as the deterministic coordinator.
"""

from __future__ import annotations

import math
import select
import socket
import struct
import threading
import time

import numpy as np

from .errors import ProtocolError, TransportError
from .runtime import ReduceRecord, StopSignal

_HDR = struct.Struct("<II")
CTRL_BIT = 0x80000000
_SEQ_MASK = 0x7FFFFFFF
_EPOCH_MASK = 0xFFFFF

CODE_HELLO = 0
CODE_COMPLETE = 1
CODE_STOP = 2

_CHAN_DATA = 0
_CHAN_CTRL = 1


def _recv_exact(sock: socket.socket, nbytes: int) -> bytes:
    chunks = []
    remaining = nbytes
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise TransportError("peer closed the connection")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def send_frame(sock: socket.socket, tag: int, payload: bytes) -> None:
    sock.sendall(_HDR.pack(tag, len(payload)) + payload)


def recv_frame(sock: socket.socket) -> tuple[int, bytes]:
    tag, length = _HDR.unpack(_recv_exact(sock, _HDR.size))
    return tag, _recv_exact(sock, length)


def send_control(sock: socket.socket, code: int, arg: int = 0) -> None:
    tag = CTRL_BIT | ((code & 0xFF) << 20) | (arg & _EPOCH_MASK)
    send_frame(sock, tag, bytes([code]))


def parse_control(tag: int, payload: bytes) -> tuple[int, int]:
    if not tag & CTRL_BIT or len(payload) != 1:
        raise ProtocolError(f"expected a control frame, got tag {tag:#x}")
    return (tag >> 20) & 0xFF, tag & _EPOCH_MASK


class TcpProgressMonitor:
    """ALB progress tracking over the control channel; rank 0 coordinates."""

    def __init__(self, transport: "TcpTransport", kappa: float):
        if not (0.0 < kappa <= 1.0):
            raise ValueError("kappa must be in (0, 1]")
        self._t = transport
        self.kappa = kappa
        self.threshold = max(1, math.ceil(kappa * transport.world_size))
        self.stop = StopSignal()
        self._lock = threading.Lock()
        self._epoch = -1
        self._stopped: set[int] = set()
        if transport.rank == 0:
            self._counts: dict[int, set[int]] = {}
            self._thread = threading.Thread(
                target=self._coordinator_loop, daemon=True, name="alb-coordinator"
            )
        else:
            self._thread = threading.Thread(
                target=self._listener_loop, daemon=True, name="alb-listener"
            )
        self._thread.start()

    def start_iteration(self, epoch: int) -> None:
        epoch &= _EPOCH_MASK
        with self._lock:
            self._epoch = epoch
            self.stop.reset()
            if epoch in self._stopped:
                self.stop.fire()

    def report_complete(self, rank: int) -> None:
        with self._lock:
            epoch = self._epoch
        if self._t.rank == 0:
            self._on_complete(rank, epoch)
        else:
            with self._t.ctrl_send_lock:
                send_control(self._t.ctrl_sock, CODE_COMPLETE, epoch)

    def should_stop(self) -> bool:
        return self.stop.fired

    def stop_signal(self, rank: int) -> StopSignal:
        return self.stop

    def _mark_stopped(self, epoch: int) -> None:
        with self._lock:
            self._stopped.add(epoch)
            if epoch == self._epoch:
                self.stop.fire()

    # rank 0 side
    def _on_complete(self, rank: int, epoch: int) -> None:
        with self._lock:
            done = self._counts.setdefault(epoch, set())
            done.add(rank)
            fire = len(done) >= self.threshold and epoch not in self._stopped
            if fire:
                self._stopped.add(epoch)
                if epoch == self._epoch:
                    self.stop.fire()
        if fire:
            with self._t.ctrl_send_lock:
                for sock in self._t.ctrl_children.values():
                    try:
                        send_control(sock, CODE_STOP, epoch)
                    except OSError:
                        pass

    def _coordinator_loop(self) -> None:
        socks = {sock: rank for rank, sock in self._t.ctrl_children.items()}
        while socks:
            try:
                ready, _, _ = select.select(list(socks), [], [], 0.5)
            except (OSError, ValueError):
                # a socket was closed under us during shutdown
                return
            for sock in ready:
                try:
                    tag, payload = recv_frame(sock)
                    code, epoch = parse_control(tag, payload)
                except (TransportError, OSError):
                    socks.pop(sock, None)
                    continue
                if code == CODE_COMPLETE:
                    self._on_complete(socks[sock], epoch)

    # child side
    def _listener_loop(self) -> None:
        while True:
            try:
                tag, payload = recv_frame(self._t.ctrl_sock)
                code, epoch = parse_control(tag, payload)
            except (TransportError, OSError, ProtocolError):
                return
            if code == CODE_STOP:
                self._mark_stopped(epoch)


class TcpTransport:
    """One rank of the wire transport. ``peers[0]`` is the rendezvous address
    of the reduction root."""

    def __init__(self, rank: int, peers: list[str], timeout: float = 120.0):
        if not peers:
            raise ValueError("peers must list at least the root address")
        self.rank = rank
        self.world_size = len(peers)
        self.timeout = timeout
        self._seq = 0
        self.bytes_reduced = 0
        self.reduce_log: list[ReduceRecord] = []
        self._monitor: TcpProgressMonitor | None = None
        self.ctrl_send_lock = threading.Lock()

        host, port_s = peers[0].rsplit(":", 1)
        port = int(port_s)
        if rank == 0:
            self._listener = socket.create_server((host, port))
            self._listener.settimeout(timeout)
            self.data_children: dict[int, socket.socket] = {}
            self.ctrl_children: dict[int, socket.socket] = {}
            expected = 2 * (self.world_size - 1)
            for _ in range(expected):
                conn, _addr = self._listener.accept()
                conn.settimeout(timeout)
                tag, payload = recv_frame(conn)
                code, arg = parse_control(tag, payload)
                if code != CODE_HELLO:
                    raise ProtocolError("expected hello frame")
                chan, peer_rank = arg >> 16, arg & 0xFFFF
                target = self.data_children if chan == _CHAN_DATA else self.ctrl_children
                if peer_rank in target:
                    raise ProtocolError(f"duplicate rank {peer_rank}")
                target[peer_rank] = conn
            missing = set(range(1, self.world_size)) - set(self.data_children)
            if missing or set(self.data_children) != set(self.ctrl_children):
                raise TransportError(f"ranks failed to connect: {sorted(missing)}")
        else:
            self.data_sock = self._connect(host, port, _CHAN_DATA)
            self.ctrl_sock = self._connect(host, port, _CHAN_CTRL)

    def _connect(self, host: str, port: int, chan: int) -> socket.socket:
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=self.timeout)
                break
            except OSError:
                if time.monotonic() > deadline:
                    raise TransportError(f"could not reach root at {host}:{port}")
                time.sleep(0.05)
        sock.settimeout(self.timeout)
        send_control(sock, CODE_HELLO, (chan << 16) | self.rank)
        return sock

    def allreduce_sum(self, vector: np.ndarray, label: str = "") -> np.ndarray:
        vector = np.ascontiguousarray(
            np.atleast_1d(np.asarray(vector, dtype="<f8"))
        )
        seq = self._seq & _SEQ_MASK
        self._seq += 1
        payload = vector.tobytes()
        try:
            if self.rank == 0:
                total = vector.copy()
                for r in range(1, self.world_size):
                    tag, data = recv_frame(self.data_children[r])
                    if tag != seq or len(data) != len(payload):
                        raise ProtocolError(
                            f"rank {r} sent tag {tag}/{len(data)}B, expected {seq}/{len(payload)}B"
                        )
                    total += np.frombuffer(data, dtype="<f8")
                out = total.tobytes()
                for r in range(1, self.world_size):
                    send_frame(self.data_children[r], seq, out)
                result = total
            else:
                send_frame(self.data_sock, seq, payload)
                tag, data = recv_frame(self.data_sock)
                if tag != seq or len(data) != len(payload):
                    raise ProtocolError(f"root replied tag {tag}, expected {seq}")
                result = np.frombuffer(data, dtype="<f8").copy()
        except socket.timeout as exc:
            raise TransportError("collective timed out") from exc
        except OSError as exc:
            raise TransportError(f"collective failed: {exc}") from exc
        nbytes = len(payload)
        self.bytes_reduced += nbytes
        self.reduce_log.append(ReduceRecord(label, vector.shape[0], nbytes))
        return result

    def progress_monitor(self, kappa: float) -> TcpProgressMonitor:
        if self._monitor is None:
            self._monitor = TcpProgressMonitor(self, kappa)
        elif self._monitor.kappa != kappa:
            raise ValueError("progress monitor already created with different kappa")
        return self._monitor

    def close(self) -> None:
        if self.rank == 0:
            for sock in (
                *self.data_children.values(),
                *self.ctrl_children.values(),
                self._listener,
            ):
                try:
                    sock.close()
                except OSError:
                    pass
        else:
            for sock in (self.data_sock, self.ctrl_sock):
                try:
                    sock.close()
                except OSError:
                    pass
