"""
TCP master serving work to `evodag worker` processes.

Each connection runs in its own thread; all of them share one `Master`, whose
lock serializes genome generation and result insertion. A connection that
drops releases the work its worker held so that it is reissued right away.
"""

import logging
import math
import os
import socketserver
import threading
import time

from ..dataset import fingerprint
from ..errors import GenomeError, MalformedMessage, ProtocolError, SearchInterrupted
from ..genome import from_document, to_document
from ..search.master import open_master
from ..search.stats_logger import log_search_stats_stdout, progress_listener, write_search_outputs
from . import messages
from .messages import PROTOCOL_VERSION, WorkRequest, WorkResult, recv_message, send_message

logger = logging.getLogger(__name__)

DEFAULT_PORT = 7541
WAIT_DELAY = 1.0


class WorkerConnection(socketserver.BaseRequestHandler):
    """Serves one worker: handshake, then request/work and result/ack exchanges."""

    def setup(self):
        self.worker_id = None

    def handle(self):
        try:
            if self.__handshake():
                self.__serve()
        except ProtocolError as e:
            logger.info("Dropping worker %s: %s", self.worker_id or self.client_address, e)
            self.__try_send(messages.error(str(e)))
        except OSError as e:
            logger.info("Connection to worker %s lost: %s", self.worker_id or self.client_address, e)

    def finish(self):
        if self.worker_id is not None:
            self.server.master.release(self.worker_id)
            logger.info("Worker %s disconnected.", self.worker_id)

    def __try_send(self, message):
        try:
            send_message(self.request, message)
        except OSError:
            pass

    def __handshake(self):
        server = self.server
        hello = recv_message(self.request)
        if hello is None:
            return False
        if hello["type"] != messages.HELLO:
            send_message(self.request, messages.error(f"expected hello, got {hello['type']}"))
            return False
        if hello.get("protocol_version") != PROTOCOL_VERSION:
            send_message(self.request, messages.error(f"protocol version {PROTOCOL_VERSION} required"))
            return False
        if hello.get("fingerprint") != server.fingerprint:
            logger.warning("Rejected worker %s: dataset fingerprint mismatch.", hello.get("worker_id"))
            send_message(self.request, messages.error("dataset fingerprint mismatch"))
            return False
        self.worker_id = WorkRequest(hello.get("worker_id", "")).worker_id
        send_message(self.request, messages.welcome(server.training, server.seed))
        logger.info("Worker %s connected from %s.", self.worker_id, self.client_address)
        return True

    def __serve(self):
        server = self.server
        while True:
            message = recv_message(self.request)
            if message is None:
                return
            if message["type"] == messages.REQUEST:
                WorkRequest.from_message(message)
                send_message(self.request, self.__next_work())
            elif message["type"] == messages.RESULT:
                outcome = self.__insert(WorkResult.from_message(message))
                send_message(self.request, messages.ack(outcome.value))
                if server.master.done:
                    server.finished.set()
            else:
                send_message(self.request, messages.error(f"unexpected {message['type']} message"))

    def __next_work(self):
        master = self.server.master
        if master.done:
            return messages.stop()
        genome = master.fulfill_work_request(self.worker_id)
        if genome is None:
            return messages.stop() if master.done else messages.wait(self.server.wait_delay)
        return messages.work(to_document(genome), self.server.training)

    def __insert(self, result):
        try:
            genome = from_document(result.genome).with_genes(generation_id=result.generation_id)
        except GenomeError as e:
            raise MalformedMessage(f"result carries an invalid genome: {e}") from e
        if result.diverged:
            genome = genome.with_fitness(math.inf, diverged=True)
        else:
            genome = genome.with_fitness(float(result.fitness))
        return self.server.master.insert_result(genome, wall_time=result.wall_time)


class MasterServer(socketserver.ThreadingTCPServer):
    """
    A threading TCP server around a master.

    Attributes:
        master (Master): Shared population owner.
        fingerprint (str): Dataset fingerprint workers must present.
        training (dict): TrainConfig sent along with every genome.
        seed (int): Base training seed.
        finished (threading.Event): Set once the master is done.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, master, dataset_fingerprint, training, seed, wait_delay=WAIT_DELAY):
        super().__init__(address, WorkerConnection)
        self.master = master
        self.fingerprint = dataset_fingerprint
        self.training = training
        self.seed = seed
        self.wait_delay = wait_delay
        self.finished = threading.Event()


def serve_search(config, train_set, validation_set, address=("0.0.0.0", DEFAULT_PORT), resume=False, poll=1.0):
    """
    Runs a search whose genomes are trained by remote workers.

    Blocks until the evaluation budget is spent, then writes the output files.

    Returns:
        Genome: The best genome found.
    """
    master = open_master(
        config,
        train_set.image_dims,
        train_set.num_classes,
        resume=resume,
        listener=progress_listener(config.search.output_dir),
    )
    server = MasterServer(
        address, master, fingerprint(train_set, validation_set), config.training.to_dict(), config.search.seed
    )
    thread = threading.Thread(target=server.serve_forever, name="evodag-master", daemon=True)
    thread.start()
    logger.info("Master listening on %s:%s.", *server.server_address[:2])

    start = time.time()
    try:
        while not master.done:
            server.finished.wait(poll)
    except KeyboardInterrupt:
        master.checkpoint(os.path.join(config.search.output_dir, "checkpoint"))
        raise SearchInterrupted("keyboard interrupt") from None
    finally:
        server.shutdown()
        server.server_close()

    snapshot, best = write_search_outputs(master, config.search.output_dir)
    log_search_stats_stdout(snapshot, best, time.time() - start)
    return best
