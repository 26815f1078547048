"""Coordinator/worker protocol for networked semi-concurrent federated rounds.

Frames are a 4-byte big-endian body length followed by a UTF-8 JSON body
with a ``tag`` field.  Weights travel as ``{"shapes": [...], "values": [...]}``
where each value is the ``repr`` of a float64, so every round trip is
bit-exact.  No message type has a field for data rows.

Session::

    worker -> JOIN{node_id}            (duplicate ids get REJECT and are closed)
    coord  -> ROUND_START{round, weights, spec, train_cfg}    to every worker
    worker -> UPDATE{round, node_id, weights, n_samples}
    coord  -> GLOBAL{round, weights}   after all k updates of the round
    ...
    coord  -> DONE{final_round}

The coordinator averages updates in ascending ``node_id`` order using the
same reduction as :func:`fedhe.fedsim.average_weights`.
"""
from __future__ import annotations

import json
import logging
import socket
import struct
import time
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ProtocolError
from .fedsim import FedConfig, FedRun, average_weights
from .nnet import MlpSpec, TrainConfig, Weights, init_weights, train

__all__ = [
    "Join",
    "Reject",
    "RoundStart",
    "Update",
    "Global",
    "Done",
    "FedMessage",
    "MAX_FRAME",
    "encode",
    "decode",
    "read_frame",
    "parse_addr",
    "run_coordinator",
    "run_worker",
]

log = logging.getLogger(__name__)

MAX_FRAME = 64 * 1024 * 1024
_LEN = struct.Struct(">I")


@dataclass(frozen=True)
class Join:
    node_id: str


@dataclass(frozen=True)
class Reject:
    node_id: str
    reason: str


@dataclass(frozen=True)
class RoundStart:
    round: int
    weights: Weights
    spec: MlpSpec
    train_cfg: TrainConfig


@dataclass(frozen=True)
class Update:
    round: int
    node_id: str
    weights: Weights
    n_samples: int


@dataclass(frozen=True)
class Global:
    round: int
    weights: Weights


@dataclass(frozen=True)
class Done:
    final_round: int


FedMessage = Union[Join, Reject, RoundStart, Update, Global, Done]

_TAGS = {Join: "JOIN", Reject: "REJECT", RoundStart: "ROUND_START", Update: "UPDATE",
         Global: "GLOBAL", Done: "DONE"}
_FIELDS = {
    "JOIN": {"node_id"},
    "REJECT": {"node_id", "reason"},
    "ROUND_START": {"round", "weights", "spec", "train_cfg"},
    "UPDATE": {"round", "node_id", "weights", "n_samples"},
    "GLOBAL": {"round", "weights"},
    "DONE": {"final_round"},
}


def _weights_out(w: Weights) -> dict:
    return {"shapes": [list(s) for s in w.shapes], "values": [repr(float(v)) for v in w.flat()]}


def _weights_in(d) -> Weights:
    try:
        shapes = [tuple(int(n) for n in s) for s in d["shapes"]]
        values = np.array([float(v) for v in d["values"]], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolError(f"malformed weights: {e}") from None
    try:
        return Weights.from_flat(shapes, values)
    except Exception as e:
        raise ProtocolError(f"malformed weights: {e}") from None


def encode(msg: FedMessage) -> bytes:
    tag = _TAGS.get(type(msg))
    if tag is None:
        raise ProtocolError(f"cannot encode {type(msg).__name__}")
    body: dict = {"tag": tag}
    for name in _FIELDS[tag]:
        v = getattr(msg, name)
        if isinstance(v, Weights):
            v = _weights_out(v)
        elif isinstance(v, (MlpSpec, TrainConfig)):
            v = v.to_dict()
        body[name] = v
    raw = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    if len(raw) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(raw)} bytes exceeds the {MAX_FRAME} byte limit")
    return _LEN.pack(len(raw)) + raw


def _body_to_msg(raw: bytes) -> FedMessage:
    try:
        body = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"malformed frame body: {e}") from None
    if not isinstance(body, dict) or "tag" not in body:
        raise ProtocolError("frame body has no tag")
    tag = body.pop("tag")
    if tag not in _FIELDS:
        raise ProtocolError(f"unknown message tag {tag!r}")
    if set(body) != _FIELDS[tag]:
        raise ProtocolError(f"{tag} fields {sorted(body)} != {sorted(_FIELDS[tag])}")
    try:
        if tag == "JOIN":
            return Join(str(body["node_id"]))
        if tag == "REJECT":
            return Reject(str(body["node_id"]), str(body["reason"]))
        if tag == "ROUND_START":
            return RoundStart(int(body["round"]), _weights_in(body["weights"]),
                              MlpSpec.from_dict(body["spec"]), TrainConfig.from_dict(body["train_cfg"]))
        if tag == "UPDATE":
            return Update(int(body["round"]), str(body["node_id"]), _weights_in(body["weights"]),
                          int(body["n_samples"]))
        if tag == "GLOBAL":
            return Global(int(body["round"]), _weights_in(body["weights"]))
        return Done(int(body["final_round"]))
    except ProtocolError:
        raise
    except Exception as e:
        raise ProtocolError(f"malformed {tag} message: {e}") from None


def decode(frame: bytes) -> FedMessage:
    """Decode one complete frame (length prefix included)."""
    if len(frame) < _LEN.size:
        raise ProtocolError("truncated frame header")
    (n,) = _LEN.unpack_from(frame)
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds the {MAX_FRAME} byte limit")
    if len(frame) - _LEN.size != n:
        raise ProtocolError(f"frame length {len(frame) - _LEN.size} does not match header {n}")
    return _body_to_msg(frame[_LEN.size:])


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks, got = [], 0
    while got < n:
        part = sock.recv(min(n - got, 1 << 20))
        if not part:
            raise ProtocolError("connection closed mid-frame" if got or chunks else "connection closed")
        chunks.append(part)
        got += len(part)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes:
    head = _recv_exact(sock, _LEN.size)
    (n,) = _LEN.unpack(head)
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds the {MAX_FRAME} byte limit")
    return head + _recv_exact(sock, n)


Capture = Callable[[str, bytes], None]


class _Conn:
    def __init__(self, sock: socket.socket, capture: Capture | None, label: str):
        self.sock = sock
        self.capture = capture
        self.label = label

    def send(self, msg: FedMessage):
        frame = encode(msg)
        if self.capture:
            self.capture(f"{self.label}:send", frame)
        self.sock.sendall(frame)

    def recv(self) -> FedMessage:
        frame = read_frame(self.sock)
        if self.capture:
            self.capture(f"{self.label}:recv", frame)
        return decode(frame)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def parse_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ProtocolError(f"address must be host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


# --------------------------------------------------------------------------
# coordinator
# --------------------------------------------------------------------------

def run_coordinator(listen_addr: str, spec: MlpSpec, fed_cfg: FedConfig, expected_k: int,
                    init: Weights | None = None, on_listen: Callable[[tuple], None] | None = None,
                    capture: Capture | None = None, timeout: float = 600.0) -> FedRun:
    """Serve one semi-concurrent session and return its run record.

    ``on_listen`` receives the bound ``(host, port)``, useful with port 0.
    """
    if expected_k < 1:
        raise ProtocolError("expected_k must be >= 1")
    weights = init_weights(spec, fed_cfg.train.seed) if init is None else init.copy()
    weights.check(spec)
    server = socket.create_server(parse_addr(listen_addr))
    server.settimeout(timeout)
    conns: dict[str, _Conn] = {}
    try:
        if on_listen:
            on_listen(server.getsockname()[:2])
        while len(conns) < expected_k:
            try:
                sock, peer = server.accept()
            except socket.timeout:
                raise ProtocolError(f"only {len(conns)} of {expected_k} workers joined") from None
            sock.settimeout(timeout)
            conn = _Conn(sock, capture, "coordinator")
            try:
                msg = conn.recv()
            except ProtocolError as e:
                log.warning("dropping %s: %s", peer, e)
                conn.close()
                continue
            if not isinstance(msg, Join):
                log.warning("dropping %s: expected JOIN, got %s", peer, type(msg).__name__)
                conn.close()
                continue
            if msg.node_id in conns:
                log.warning("rejecting duplicate node_id %r from %s", msg.node_id, peer)
                conn.send(Reject(msg.node_id, "duplicate node_id"))
                conn.close()
                continue
            conn.label = f"coordinator<{msg.node_id}>"
            conns[msg.node_id] = conn
            log.info("node %r joined (%d/%d)", msg.node_id, len(conns), expected_k)

        order = sorted(conns)
        history = [weights]
        counts: dict[str, int] = {}
        for r in range(fed_cfg.rounds):
            start = RoundStart(r, weights, spec, fed_cfg.round_config(r))
            for nid in order:
                conns[nid].send(start)
            updates = {}
            for nid in order:
                try:
                    msg = conns[nid].recv()
                except (ProtocolError, OSError) as e:
                    raise ProtocolError(f"node {nid!r} failed in round {r}: {e}") from None
                if not isinstance(msg, Update) or msg.round != r or msg.node_id != nid:
                    raise ProtocolError(f"node {nid!r} sent an unexpected message in round {r}")
                if msg.weights.shapes != weights.shapes:
                    raise ProtocolError(f"node {nid!r} returned weights of the wrong shape")
                updates[nid] = msg.weights
                counts[nid] = msg.n_samples
            weights = average_weights([updates[n] for n in order],
                                      [counts[n] for n in order] if fed_cfg.weighted else None)
            history.append(weights)
            for nid in order:
                conns[nid].send(Global(r, weights))
        for nid in order:
            conns[nid].send(Done(fed_cfg.rounds - 1))
        return FedRun(global_weights=history, n_samples=[counts.get(n, 0) for n in order])
    finally:
        for c in conns.values():
            c.close()
        server.close()


# --------------------------------------------------------------------------
# worker
# --------------------------------------------------------------------------

def _connect(addr: tuple[str, int], wait: float) -> socket.socket:
    deadline = time.monotonic() + wait
    while True:
        try:
            return socket.create_connection(addr, timeout=wait or None)
        except OSError:
            if time.monotonic() >= deadline:
                raise ProtocolError(f"cannot reach coordinator at {addr[0]}:{addr[1]}") from None
            time.sleep(0.05)


def run_worker(connect_addr: str, shard, node_id: str, capture: Capture | None = None,
               connect_wait: float = 30.0, timeout: float = 600.0) -> Weights | None:
    """Join a session, train on every ROUND_START and return the last global weights.

    ``shard`` is a table or an ``(X, y)`` pair; it stays local.
    """
    x, y = shard.xy() if hasattr(shard, "xy") else shard
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sock = _connect(parse_addr(connect_addr), connect_wait)
    sock.settimeout(timeout)
    conn = _Conn(sock, capture, f"worker<{node_id}>")
    last_round = -1
    final = None
    try:
        conn.send(Join(node_id))
        while True:
            msg = conn.recv()
            if isinstance(msg, Reject):
                raise ProtocolError(f"coordinator rejected node {node_id!r}: {msg.reason}")
            if isinstance(msg, RoundStart):
                if msg.round <= last_round:
                    raise ProtocolError(f"round {msg.round} does not follow round {last_round}")
                last_round = msg.round
                if msg.train_cfg.epochs == 0:
                    w = msg.weights
                else:
                    w, _ = train(msg.spec, (x, y), msg.train_cfg, init=msg.weights)
                conn.send(Update(msg.round, node_id, w, int(x.shape[0])))
            elif isinstance(msg, Global):
                if msg.round != last_round:
                    raise ProtocolError(f"GLOBAL for round {msg.round} during round {last_round}")
                final = msg.weights
            elif isinstance(msg, Done):
                return final
            else:
                raise ProtocolError(f"unexpected {type(msg).__name__} from coordinator")
    finally:
        conn.close()
