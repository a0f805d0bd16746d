"""
Wire format of the master/worker protocol.

A frame is a 4-byte big-endian payload length, one protocol version byte and a
UTF-8 JSON payload. Every payload is an object with a "type" key:

    worker -> master: hello, request, result
    master -> worker: welcome, work, wait, stop, ack, error

A conversation starts with hello/welcome (or hello/error when the worker's
dataset fingerprint differs from the master's), then alternates
request -> work | wait | stop and result -> ack.
"""

import json
import math
import socket
import struct
from dataclasses import dataclass, field

from ..errors import FrameTooLarge, MalformedMessage, TruncatedFrame, VersionMismatch
from ..genome import to_document

PROTOCOL_VERSION = 1
HEADER = struct.Struct("!IB")
MAX_PAYLOAD = 64 * 1024 * 1024

HELLO, WELCOME, REQUEST, WORK, WAIT, STOP, RESULT, ACK, ERROR = (
    "hello", "welcome", "request", "work", "wait", "stop", "result", "ack", "error"
)
MESSAGE_TYPES = (HELLO, WELCOME, REQUEST, WORK, WAIT, STOP, RESULT, ACK, ERROR)


def encode_frame(message, version=PROTOCOL_VERSION):
    """
    Encodes a message into one frame.

    Raises:
        MalformedMessage: If the message has no known type or is not JSON-serializable.
        FrameTooLarge: If the payload exceeds MAX_PAYLOAD.
    """
    if not isinstance(message, dict) or message.get("type") not in MESSAGE_TYPES:
        raise MalformedMessage(f"not a protocol message: {message!r:.80}")
    try:
        payload = json.dumps(message, separators=(",", ":"), allow_nan=False).encode("utf-8")
    except (TypeError, ValueError) as e:
        raise MalformedMessage(f"cannot encode {message['type']} message: {e}") from e
    if len(payload) > MAX_PAYLOAD:
        raise FrameTooLarge(f"{len(payload)} byte payload exceeds {MAX_PAYLOAD}")
    return HEADER.pack(len(payload), version) + payload


def _decode_payload(payload):
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedMessage(f"payload is not UTF-8 JSON: {e}") from e
    if not isinstance(message, dict) or message.get("type") not in MESSAGE_TYPES:
        raise MalformedMessage(f"unknown message {message!r:.80}")
    return message


def decode_frame(data):
    """
    Decodes exactly one frame.

    Raises:
        TruncatedFrame: If `data` ends before the announced payload does.
        FrameTooLarge: If the header announces more than MAX_PAYLOAD bytes.
        VersionMismatch: If the version byte is not PROTOCOL_VERSION.
        MalformedMessage: On trailing bytes or a payload that is not a message.
    """
    if len(data) < HEADER.size:
        raise TruncatedFrame(f"{len(data)} bytes do not hold a frame header")
    length, version = HEADER.unpack_from(data)
    if length > MAX_PAYLOAD:
        raise FrameTooLarge(f"{length} byte payload exceeds {MAX_PAYLOAD}")
    end = HEADER.size + length
    if len(data) < end:
        raise TruncatedFrame(f"frame announces {length} payload bytes, got {len(data) - HEADER.size}")
    if len(data) > end:
        raise MalformedMessage(f"{len(data) - end} trailing bytes after the frame")
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(f"protocol version {version}, expected {PROTOCOL_VERSION}")
    return _decode_payload(data[HEADER.size:])


def _recv_exactly(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            break
        buf += chunk
    return bytes(buf)


def recv_message(sock):
    """
    Reads one message from a socket.

    A frame with a foreign version byte or a bad payload is consumed whole
    before the error is raised, so the stream stays aligned.

    Returns:
        dict: The message, or None if the peer closed the connection between frames.
    """
    header = _recv_exactly(sock, HEADER.size)
    if not header:
        return None
    if len(header) < HEADER.size:
        raise TruncatedFrame("connection closed inside a frame header")
    length, version = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise FrameTooLarge(f"{length} byte payload exceeds {MAX_PAYLOAD}")
    payload = _recv_exactly(sock, length)
    if len(payload) < length:
        raise TruncatedFrame(f"connection closed after {len(payload)} of {length} payload bytes")
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(f"protocol version {version}, expected {PROTOCOL_VERSION}")
    return _decode_payload(payload)


def send_message(sock, message):
    sock.sendall(encode_frame(message))


def connect(address, timeout=None):
    """Opens a TCP connection to a (host, port) address."""
    return socket.create_connection(address, timeout=timeout)


def _require(message, *keys):
    missing = [key for key in keys if key not in message]
    if missing:
        raise MalformedMessage(f"{message.get('type')} message lacks {missing}")


@dataclass(frozen=True)
class WorkRequest:
    """
    A worker asking for a genome.

    Attributes:
        worker_id (str): Nonempty worker name.
        capabilities (dict): Hints such as {"max_weights": 100000}.
    """

    worker_id: str
    capabilities: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.worker_id, str) or not self.worker_id:
            raise MalformedMessage("worker_id must be a nonempty string")

    def to_message(self):
        return {"type": REQUEST, "worker_id": self.worker_id, "capabilities": dict(self.capabilities)}

    @classmethod
    def from_message(cls, message):
        _require(message, "worker_id")
        return cls(message["worker_id"], dict(message.get("capabilities") or {}))


@dataclass(frozen=True)
class WorkResult:
    """
    A trained genome reported by a worker.

    Attributes:
        generation_id (int): Id the genome was issued under.
        genome (dict): Archive document of the trained genome.
        fitness (float): Summed validation cross-entropy; None when `diverged`.
        diverged (bool): Training produced non-finite values.
        digest (str): SHA-256 of the training log.
        wall_time (float): Training time in seconds.
    """

    generation_id: int
    genome: dict
    fitness: float
    diverged: bool = False
    digest: str = ""
    wall_time: float = 0.0

    def __post_init__(self):
        finite = isinstance(self.fitness, (int, float)) and math.isfinite(self.fitness)
        if not (self.diverged or finite):
            raise MalformedMessage("a result needs a finite fitness unless it diverged")

    @classmethod
    def from_train_result(cls, result):
        return cls(
            result.genome.generation_id,
            to_document(result.genome),
            None if result.diverged else result.fitness,
            result.diverged,
            result.digest,
            result.wall_time,
        )

    def to_message(self):
        return {
            "type": RESULT,
            "generation_id": self.generation_id,
            "genome": self.genome,
            "fitness": self.fitness,
            "diverged": self.diverged,
            "digest": self.digest,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_message(cls, message):
        _require(message, "generation_id", "genome", "fitness")
        if not isinstance(message["genome"], dict):
            raise MalformedMessage("result genome must be an archive object")
        try:
            generation_id = int(message["generation_id"])
            wall_time = float(message.get("wall_time", 0.0))
        except (TypeError, ValueError) as e:
            raise MalformedMessage(f"result carries a bad number: {e}") from e
        return cls(
            generation_id,
            message["genome"],
            message["fitness"],
            bool(message.get("diverged", False)),
            str(message.get("digest", "")),
            wall_time,
        )


def hello(worker_id, dataset_fingerprint, capabilities=None):
    return {
        "type": HELLO,
        "worker_id": worker_id,
        "protocol_version": PROTOCOL_VERSION,
        "fingerprint": dataset_fingerprint,
        "capabilities": capabilities or {},
    }


def welcome(training, seed):
    return {"type": WELCOME, "protocol_version": PROTOCOL_VERSION, "training": training, "seed": seed}


def work(genome_document, training):
    return {"type": WORK, "genome": genome_document, "training": training}


def wait(delay):
    return {"type": WAIT, "delay": delay}


def stop():
    return {"type": STOP}


def ack(outcome):
    return {"type": ACK, "outcome": outcome}


def error(reason):
    return {"type": ERROR, "reason": reason}
