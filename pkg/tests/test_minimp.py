"""Message-passing harness properties: FIFO per channel, barrier safety."""

from __future__ import annotations

import random
import threading

import pytest

from upm.minimp import HOST, ConnectionRecord, Endpoint, Router, connection_log


@pytest.fixture
def fabric():
    """Router plus one in-process endpoint per rank."""
    built = []

    def build(size: int, device: str = "dev"):
        router = Router(size, device)
        endpoints: list[Endpoint] = []
        failures = []

        def connect(rank: int):
            try:
                endpoints.append(Endpoint(router.address, rank, size, device))
            except Exception as e:  # surfaces in the main thread below
                failures.append(e)

        threads = [threading.Thread(target=connect, args=(r,)) for r in range(size)]
        for t in threads:
            t.start()
        router.accept_workers(timeout=5)
        for t in threads:
            t.join()
        assert not failures
        endpoints.sort(key=lambda e: e.rank)
        built.append((router, endpoints))
        return router, endpoints

    yield build
    for router, endpoints in built:
        for ep in endpoints:
            ep.close()
        router.stop()


def test_send_recv_round_trip(fabric):
    _router, (a, b) = fabric(2)
    a.mp_send(1, "greet", b"hello")
    assert b.mp_recv(0, "greet", timeout=5) == b"hello"


def test_fifo_per_channel_under_interleaving(fabric):
    _router, endpoints = fabric(3)
    rng = random.Random(5)
    sent: dict[tuple[int, int, str], list[bytes]] = {}
    plan = []
    for _ in range(200):
        src, dst = rng.sample(range(3), 2)
        tag = rng.choice(["x", "y"])
        payload = rng.randbytes(rng.randrange(0, 32))
        sent.setdefault((src, dst, tag), []).append(payload)
        plan.append((src, dst, tag, payload))

    def sender(rank: int):
        for src, dst, tag, payload in plan:
            if src == rank:
                endpoints[rank].mp_send(dst, tag, payload)

    threads = [threading.Thread(target=sender, args=(r,)) for r in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    for (src, dst, tag), payloads in sent.items():
        received = [endpoints[dst].mp_recv(src, tag, timeout=5) for _ in payloads]
        assert received == payloads  # delivery order is send order


def test_host_round_trip(fabric):
    router, (worker,) = fabric(1)
    router.host_send(0, "cmd", b"ping")
    assert worker.mp_recv(HOST, "cmd", timeout=5) == b"ping"
    worker.mp_send(HOST, "result", b"pong")
    assert router.host_recv(0, "result", timeout=5) == b"pong"


def test_barrier_never_releases_early(fabric):
    _router, endpoints = fabric(4)
    log: list[tuple[str, int]] = []
    log_lock = threading.Lock()
    rng = random.Random(9)
    delays = [rng.uniform(0, 0.05) for _ in endpoints]

    def runner(rank: int):
        for round_no in range(5):
            threading.Event().wait(delays[(rank + round_no) % 4])
            with log_lock:
                log.append(("enter", rank))
            endpoints[rank].mp_barrier()
            with log_lock:
                log.append(("exit", rank))

    threads = [threading.Thread(target=runner, args=(r,)) for r in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    entered = exited = 0
    for event, _rank in log:
        if event == "enter":
            entered += 1
        else:
            assert entered >= ((exited // 4) + 1) * 4, "a rank left before all entered"
            exited += 1
    assert entered == exited == 20


def test_connection_log_records_router_and_worker_device(fabric):
    before = len(connection_log())
    fabric(2, device="logged")
    records = connection_log()[before:]
    assert sorted(r.rank for r in records) == [0, 1]
    assert all(r == ConnectionRecord("logged", "logged", r.rank) for r in records)
