"""
TCP worker: request a genome, train it, report it, repeat.

The worker never waits for other workers; it only waits when the master has
nothing to hand out. Lost connections are retried with exponential backoff,
and a result that was sent twice (after a reconnect or a reissue) is safe
because the master ignores duplicates.
"""

import logging
import socket
import time
import uuid
from dataclasses import replace

from ..dataset import fingerprint
from ..errors import HandshakeRejected, ProtocolError, TruncatedFrame
from ..genome import from_document
from ..training.trainer import TrainConfig, train
from . import messages
from .messages import WorkRequest, WorkResult, connect, recv_message, send_message

logger = logging.getLogger(__name__)

BACKOFF_BASE = 0.5
BACKOFF_CAP = 30.0
MAX_RETRIES = 8


def backoff_delay(failures, base=BACKOFF_BASE, cap=BACKOFF_CAP):
    """Delay before the reconnect following `failures` consecutive failures."""
    return min(cap, base * 2 ** max(0, failures - 1))


def _expect(sock):
    message = recv_message(sock)
    if message is None:
        raise ConnectionError("master closed the connection")
    return message


def _handshake(sock, worker_id, dataset_fingerprint, capabilities):
    send_message(sock, messages.hello(worker_id, dataset_fingerprint, capabilities))
    reply = _expect(sock)
    if reply["type"] == messages.ERROR:
        raise HandshakeRejected(reply.get("reason", "rejected by master"))
    if reply["type"] != messages.WELCOME:
        raise ProtocolError(f"expected welcome, got {reply['type']}")
    return reply


def worker_loop(
    address,
    train_set,
    validation_set,
    worker_id=None,
    epochs=None,
    trainer=train,
    max_retries=MAX_RETRIES,
    capabilities=None,
    sleep=time.sleep,
):
    """
    Serves a master until it says stop.

    Args:
        address (tuple): (host, port) of the master.
        train_set (ImageSet): Locally loaded training split.
        validation_set (ImageSet): Locally loaded validation split.
        worker_id (str): Worker name (random when omitted).
        epochs (int): Overrides the master's epoch count.
        trainer (callable): Training function with the signature of `evodag.training.train`.
        max_retries (int): Consecutive connection failures tolerated.
        capabilities (dict): Hints sent with every request.
        sleep (callable): Sleep function (injectable for tests).

    Returns:
        int: Number of genomes trained and reported.

    Raises:
        HandshakeRejected: If the master rejects the dataset fingerprint or protocol version.
        ProtocolError: If the master stays unreachable for `max_retries` attempts.
    """
    worker_id = worker_id or f"worker-{uuid.uuid4().hex[:8]}"
    capabilities = capabilities or {}
    dataset_fingerprint = fingerprint(train_set, validation_set)
    request = WorkRequest(worker_id, capabilities).to_message()
    failures, trained = 0, 0

    while True:
        try:
            with connect(address) as sock:
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                welcome = _handshake(sock, worker_id, dataset_fingerprint, capabilities)
                seed = int(welcome.get("seed", 0))
                logger.info("Worker %s connected to %s:%s.", worker_id, *address)
                failures = 0

                while True:
                    send_message(sock, request)
                    reply = _expect(sock)
                    if reply["type"] == messages.STOP:
                        logger.info("Worker %s stopped after %s genomes.", worker_id, trained)
                        return trained
                    if reply["type"] == messages.WAIT:
                        sleep(float(reply.get("delay", 1.0)))
                        continue
                    if reply["type"] != messages.WORK:
                        raise ProtocolError(f"unexpected {reply['type']} reply: {reply.get('reason', '')}")

                    config = TrainConfig.from_dict(reply["training"])
                    if epochs:
                        config = replace(config, epochs=epochs)
                    genome = from_document(reply["genome"])
                    result = trainer(genome, train_set, validation_set, config, init="epigenetic", seed=seed)
                    send_message(sock, WorkResult.from_train_result(result).to_message())
                    ack = _expect(sock)
                    trained += 1
                    logger.info(
                        "Worker %s reported genome %s (fitness %s): %s",
                        worker_id, genome.generation_id, result.fitness, ack.get("outcome"),
                    )
        except HandshakeRejected:
            raise
        except (OSError, TruncatedFrame) as e:
            failures += 1
            if failures > max_retries:
                raise ProtocolError(f"master {address[0]}:{address[1]} unreachable after {max_retries} retries") from e
            delay = backoff_delay(failures)
            logger.info("Worker %s lost the master (%s); retrying in %.1f s.", worker_id, e, delay)
            sleep(delay)
