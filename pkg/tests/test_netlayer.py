"""Tests for the wire format and ring transports."""

import random

import numpy as np
import pytest

from taskbench.netlayer import (
    Frame,
    InprocRing,
    ProtocolError,
    TransportError,
    decode_frame,
    encode_frame,
    establish_ring,
    loopback_ring,
)

GOLDEN = bytes(
    [
        0x0D, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  # length = 13
        0x00, 0x00, 0x00, 0x00,  # step = 0
        0x00,  # direction = left
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F,  # 1.0 LE
    ]
)


def test_golden_frame_bytes_exact():
    # fixed forever: backward compatibility anchor
    assert encode_frame(0, 0, [1.0]) == GOLDEN
    assert encode_frame(0, "left", [1.0]) == GOLDEN
    assert len(GOLDEN) == 21


def test_golden_frame_decodes():
    frame, used = decode_frame(GOLDEN)
    assert used == 21
    assert frame.step == 0
    assert frame.direction == "left"
    assert frame.payload.tolist() == [1.0]


def test_roundtrip_fuzz_10000_frames():
    rng = random.Random(31)
    nprng = np.random.default_rng(31)
    for _ in range(10_000):
        step = rng.randrange(0, 2**32)
        direction = rng.choice(["left", "right"])
        payload = nprng.standard_normal(rng.randint(1, 8))
        buf = encode_frame(step, direction, payload)
        frame, used = decode_frame(buf)
        assert used == len(buf)
        assert frame == Frame(step, direction, payload)


def test_decode_concatenated_stream():
    frames = [encode_frame(t, t % 2, [float(t)]) for t in range(10)]
    buf = b"".join(frames)
    seen = []
    while buf:
        frame, used = decode_frame(buf)
        seen.append(frame.step)
        buf = buf[used:]
    assert seen == list(range(10))


def test_truncated_needs_more_data():
    buf = encode_frame(3, "right", [1.0, 2.0])
    for cut in range(len(buf)):
        assert decode_frame(buf[:cut]) is None


def test_empty_payload_rejected():
    with pytest.raises(ProtocolError):
        encode_frame(0, "left", [])


def test_bad_direction_rejected():
    with pytest.raises(ProtocolError):
        encode_frame(0, 2, [1.0])
    bad = bytearray(GOLDEN)
    bad[12] = 7
    with pytest.raises(ProtocolError):
        decode_frame(bytes(bad))


def test_ragged_length_rejected():
    import struct

    bad = struct.pack("<QIB", 5 + 4, 0, 0) + b"\x00" * 4  # half a float
    with pytest.raises(ProtocolError):
        decode_frame(bad)


def test_inproc_routing_rule():
    ring = InprocRing(2)
    r0, r1 = ring.localities()
    r0.send_halo("right", 3, [2.5]).wait()
    assert r1.halo_future("left", 3).wait().tolist() == [2.5]


def test_inproc_self_loop_single_rank():
    ring = InprocRing(1)
    (r0,) = ring.localities()
    r0.send_halo("right", 0, [1.5]).wait()
    r0.send_halo("left", 0, [2.5]).wait()
    assert r0.halo_future("left", 0).wait().tolist() == [1.5]
    assert r0.halo_future("right", 0).wait().tolist() == [2.5]


def test_inproc_duplicate_send_fails_future():
    ring = InprocRing(2)
    r0, _ = ring.localities()
    assert r0.send_halo("right", 1, [1.0]).exception() is None
    assert r0.send_halo("right", 1, [2.0]).exception() is not None


def _exchange_everywhere(ranks):
    """Each rank sends (step, value) both ways; returns received values."""
    n = len(ranks)
    for step in range(5):
        for r, loc in enumerate(ranks):
            loc.send_halo("right", step, [float(100 * r + step)]).wait()
            loc.send_halo("left", step, [float(200 * r + step)]).wait()
    out = {}
    for r, loc in enumerate(ranks):
        for step in range(5):
            out[(r, "left", step)] = loc.halo_future("left", step).wait()[0]
            out[(r, "right", step)] = loc.halo_future("right", step).wait()[0]
    return out


def test_tcp_loopback_matches_inproc():
    # transport equivalence oracle: the inproc run defines expected routing
    inproc = _exchange_everywhere(InprocRing(3).localities())
    tcp_ranks = loopback_ring(3)
    try:
        tcp = _exchange_everywhere(tcp_ranks)
    finally:
        for loc in tcp_ranks:
            loc.close()
    assert tcp == inproc


def test_tcp_two_rank_ring():
    ranks = loopback_ring(2)
    try:
        ranks[0].send_halo("right", 0, [1.0]).wait()
        ranks[0].send_halo("left", 0, [2.0]).wait()
        ranks[1].send_halo("right", 0, [3.0]).wait()
        ranks[1].send_halo("left", 0, [4.0]).wait()
        assert ranks[1].halo_future("left", 0).wait()[0] == 1.0
        assert ranks[1].halo_future("right", 0).wait()[0] == 2.0
        assert ranks[0].halo_future("left", 0).wait()[0] == 3.0
        assert ranks[0].halo_future("right", 0).wait()[0] == 4.0
    finally:
        for loc in ranks:
            loc.close()


def test_tcp_send_after_close_fails_future():
    ranks = loopback_ring(2)
    for loc in ranks:
        loc.close()
    fut = ranks[0].send_halo("right", 0, [1.0])
    assert isinstance(fut.exception(), TransportError)


def test_establish_ring_timeout_names_peer():
    # nothing listens on the second address
    peers = ["127.0.0.1:1", "127.0.0.1:2"]
    with pytest.raises(TransportError, match="127.0.0.1"):
        establish_ring(peers, rank=0, transport="tcp", timeout=0.5)


def test_establish_ring_inproc():
    ranks = establish_ring(["a", "b", "c"], transport="inproc")
    assert len(ranks) == 3
    ranks[2].send_halo("right", 0, [9.0]).wait()
    assert ranks[0].halo_future("left", 0).wait()[0] == 9.0
