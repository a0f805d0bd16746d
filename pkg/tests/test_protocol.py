import socket
import threading
import time

import pytest

from builders import synthetic_set

from evodag.dataset import fingerprint
from evodag.errors import FrameTooLarge, HandshakeRejected, MalformedMessage, ProtocolError, TruncatedFrame, VersionMismatch
from evodag.genome import from_document, minimal_genome, to_document, weight_count
from evodag.protocol import messages
from evodag.protocol.messages import (
    HEADER,
    MAX_PAYLOAD,
    WorkRequest,
    WorkResult,
    decode_frame,
    encode_frame,
    recv_message,
    send_message,
)
from evodag.protocol.server import MasterServer
from evodag.protocol.worker import backoff_delay, worker_loop
from evodag.search.master import Master
from evodag.training.trainer import TrainResult


def cheap_trainer(genome, train_set, validation_set, config, init="epigenetic", seed=0):
    fitness = float(weight_count(genome))
    return TrainResult(genome.with_fitness(fitness), fitness, 0.5, False, wall_time=10.0)


def test_frame_layout():
    frame = encode_frame(messages.stop())
    length, version = HEADER.unpack_from(frame)
    assert version == messages.PROTOCOL_VERSION
    assert length == len(frame) - HEADER.size
    assert decode_frame(frame) == {"type": "stop"}


def test_work_result_survives_the_wire():
    genome = minimal_genome((28, 28), 10).with_genes(generation_id=12).with_fitness(2.5)
    result = WorkResult.from_train_result(TrainResult(genome, 2.5, 0.9, False, digest="abc", wall_time=4.0))

    decoded = WorkResult.from_message(decode_frame(encode_frame(result.to_message())))
    assert decoded == result
    restored = from_document(decoded.genome)
    for edge_id, edge in genome.edges.items():
        assert restored.edges[edge_id] == edge


def test_diverged_result_has_no_fitness():
    genome = minimal_genome((6, 6), 2).with_genes(generation_id=3).with_fitness(float("inf"), diverged=True)
    result = WorkResult.from_train_result(TrainResult(genome, float("inf"), 0.0, True))
    assert result.fitness is None
    assert decode_frame(encode_frame(result.to_message()))["diverged"] is True


def test_truncated_frame():
    frame = encode_frame(messages.wait(1.0))
    with pytest.raises(TruncatedFrame):
        decode_frame(frame[:-1])
    with pytest.raises(TruncatedFrame):
        decode_frame(frame[:3])


def test_trailing_bytes():
    with pytest.raises(MalformedMessage):
        decode_frame(encode_frame(messages.stop()) + b"x")


def test_foreign_version():
    with pytest.raises(VersionMismatch):
        decode_frame(encode_frame(messages.stop(), version=2))


def test_oversized_frame():
    with pytest.raises(FrameTooLarge):
        decode_frame(HEADER.pack(MAX_PAYLOAD + 1, messages.PROTOCOL_VERSION))


@pytest.mark.parametrize("payload", [b"\xff\xfe", b"[1, 2]", b'{"type": "teleport"}', b"{"])
def test_malformed_payload(payload):
    with pytest.raises(MalformedMessage):
        decode_frame(HEADER.pack(len(payload), messages.PROTOCOL_VERSION) + payload)


def test_encode_rejects_bad_messages():
    with pytest.raises(MalformedMessage):
        encode_frame({"type": "teleport"})
    with pytest.raises(MalformedMessage):
        encode_frame({"type": "result", "fitness": float("nan")})


def test_message_validation():
    with pytest.raises(MalformedMessage):
        WorkRequest("")
    with pytest.raises(MalformedMessage):
        WorkResult(1, {}, float("inf"))
    with pytest.raises(MalformedMessage):
        WorkResult.from_message({"type": "result", "genome": {}})


@pytest.mark.parametrize(
    "fields",
    [
        {"generation_id": "abc"},
        {"generation_id": None},
        {"wall_time": "slow"},
        {"genome": "not an archive"},
    ],
)
def test_result_with_bad_fields_is_malformed(fields):
    message = {"type": "result", "generation_id": 1, "genome": {}, "fitness": 1.0, **fields}
    with pytest.raises(MalformedMessage):
        WorkResult.from_message(message)


def test_stream_stays_aligned_after_a_foreign_frame():
    left, right = socket.socketpair()
    with left, right:
        left.sendall(encode_frame(messages.stop(), version=9) + encode_frame(messages.wait(0.5)))
        with pytest.raises(VersionMismatch):
            recv_message(right)
        assert recv_message(right) == {"type": "wait", "delay": 0.5}
        left.close()
        assert recv_message(right) is None


def test_connection_lost_inside_a_frame():
    left, right = socket.socketpair()
    with right:
        left.sendall(encode_frame(messages.stop())[:-2])
        left.close()
        with pytest.raises(TruncatedFrame):
            recv_message(right)


def test_backoff_delay():
    assert [backoff_delay(n) for n in range(1, 6)] == [0.5, 1.0, 2.0, 4.0, 8.0]
    assert backoff_delay(20) == 30.0


@pytest.fixture
def serve(search_config, train_set, validation_set):
    """Starts a master server on an ephemeral localhost port."""
    servers = []

    def start(master=None):
        master = master or Master(search_config, train_set.image_dims, train_set.num_classes)
        server = MasterServer(
            ("127.0.0.1", 0),
            master,
            fingerprint(train_set, validation_set),
            search_config.training.to_dict(),
            search_config.search.seed,
            wait_delay=0.01,
        )
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()


def run_workers(address, train_set, validation_set, count):
    results, errors = [], []

    def work(name):
        try:
            results.append(worker_loop(address, train_set, validation_set, worker_id=name, trainer=cheap_trainer))
        except Exception as e:
            errors.append(e)

    threads = [threading.Thread(target=work, args=(f"w{i}",)) for i in range(count)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join(timeout=60)
    return results, errors


def test_workers_complete_the_search(serve, train_set, validation_set):
    server = serve()
    results, errors = run_workers(server.server_address, train_set, validation_set, 2)

    assert errors == []
    assert sum(results) == 6
    assert server.master.done
    assert server.master.evaluations_completed == 6
    assert server.finished.is_set()


def test_fingerprint_mismatch_is_rejected(serve, train_set, validation_set):
    server = serve()
    with pytest.raises(HandshakeRejected, match="fingerprint"):
        worker_loop(server.server_address, synthetic_set(seed=7), validation_set, trainer=cheap_trainer)
    assert server.master.issued == 0


def test_unreachable_master(train_set, validation_set):
    with socket.socket() as reserved:
        reserved.bind(("127.0.0.1", 0))
        address = reserved.getsockname()
    delays = []
    with pytest.raises(ProtocolError, match="unreachable"):
        worker_loop(address, train_set, validation_set, max_retries=2, sleep=delays.append, trainer=cheap_trainer)
    assert delays == [0.5, 1.0]


def handshake(address, name, train_set, validation_set):
    sock = socket.create_connection(address)
    send_message(sock, messages.hello(name, fingerprint(train_set, validation_set)))
    assert recv_message(sock)["type"] == messages.WELCOME
    return sock


def test_stalled_work_is_reissued_and_late_results_ignored(serve, search_config, train_set, validation_set):
    now = [0.0]
    master = Master(search_config, train_set.image_dims, train_set.num_classes, clock=lambda: now[0])
    master.config.search.initial_reissue_timeout = 10.0
    master.config.search.max_evaluations = 1
    server = serve(master)

    with handshake(server.server_address, "stalled", train_set, validation_set) as stalled:
        send_message(stalled, WorkRequest("stalled").to_message())
        work = recv_message(stalled)
        assert work["type"] == messages.WORK
        genome = from_document(work["genome"])

        now[0] = 11.0
        results, errors = run_workers(server.server_address, train_set, validation_set, 1)
        assert errors == [] and results == [1]

        late = cheap_trainer(genome, train_set, validation_set, None)
        send_message(stalled, WorkResult.from_train_result(late).to_message())
        assert recv_message(stalled) == {"type": "ack", "outcome": "duplicate"}
    assert master.evaluations_completed == 1


def test_disconnect_releases_work(serve, train_set, validation_set):
    server = serve()
    with handshake(server.server_address, "leaver", train_set, validation_set) as leaver:
        send_message(leaver, WorkRequest("leaver").to_message())
        first = from_document(recv_message(leaver)["genome"])

    with handshake(server.server_address, "stayer", train_set, validation_set) as stayer:
        for _ in range(100):
            send_message(stayer, WorkRequest("stayer").to_message())
            reply = recv_message(stayer)
            if reply["type"] != messages.WORK:
                time.sleep(0.01)
            elif from_document(reply["genome"]).generation_id == first.generation_id:
                break
        else:
            pytest.fail("released work was never reissued")


def test_unexpected_message_gets_an_error(serve, train_set, validation_set):
    server = serve()
    with handshake(server.server_address, "confused", train_set, validation_set) as sock:
        send_message(sock, messages.stop())
        assert recv_message(sock)["type"] == messages.ERROR
        send_message(sock, WorkRequest("confused").to_message())
        assert recv_message(sock)["type"] == messages.WORK


def test_result_with_a_bad_generation_id_gets_an_error(serve, train_set, validation_set):
    server = serve()
    with handshake(server.server_address, "garbled", train_set, validation_set) as sock:
        send_message(sock, WorkRequest("garbled").to_message())
        work = recv_message(sock)
        assert work["type"] == messages.WORK

        send_message(sock, {"type": "result", "generation_id": "abc", "genome": work["genome"], "fitness": 1.0})
        reply = recv_message(sock)
        assert reply["type"] == messages.ERROR
        assert "bad number" in reply["reason"]
    assert server.master.evaluations_completed == 0
