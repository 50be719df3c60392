import asyncio
import json

import pytest

from mrendo.server import PortBusyError, TeleopServer


async def read_msg(reader, want_type, timeout=5.0):
    while True:
        line = await asyncio.wait_for(reader.readline(), timeout)
        assert line, "connection closed while waiting for " + want_type
        msg = json.loads(line)
        if msg["type"] == want_type:
            return msg


async def _run_with_server(body):
    server = TeleopServer(port=0)
    serve_task = asyncio.create_task(server.serve())
    while server.bound_port is None:
        await asyncio.sleep(0.01)
    try:
        await body(server)
    finally:
        server.stop()
        await serve_task


def test_hello_command_ack_telemetry_roundtrip():
    async def body(server):
        reader, writer = await asyncio.open_connection("127.0.0.1", server.bound_port)
        hello = await read_msg(reader, "hello")
        assert hello["schema"] == "teleop/1"
        assert hello["role"] == "operator"
        assert hello["power_cap"] == 1.2
        assert hello["phantom"]["tumor_radius_mm"] == 1.5

        writer.write(json.dumps({"type": "cmd", "seq": 1, "target_bend": 0.4,
                                 "insert_velocity": 2.0}).encode() + b"\n")
        await writer.drain()
        ack = await read_msg(reader, "ack")
        assert ack["status"] == "accepted"
        assert ack["applied"]["target_bend"] == 0.4

        telemetry = await read_msg(reader, "telemetry")
        assert telemetry["schema"] == "teleop/1"
        assert len(telemetry["polyline_mm"]) == server.session.rod.segment_count + 1
        writer.close()
        await writer.wait_closed()

    asyncio.run(_run_with_server(body))


def test_second_client_is_observer_and_rejected():
    async def body(server):
        r1, w1 = await asyncio.open_connection("127.0.0.1", server.bound_port)
        await read_msg(r1, "hello")
        w1.write(json.dumps({"type": "cmd", "seq": 1}).encode() + b"\n")
        await w1.drain()
        await read_msg(r1, "ack")

        r2, w2 = await asyncio.open_connection("127.0.0.1", server.bound_port)
        hello2 = await read_msg(r2, "hello")
        assert hello2["role"] == "observer"
        w2.write(json.dumps({"type": "cmd", "seq": 1, "target_bend": 1.0}).encode() + b"\n")
        await w2.drain()
        ack2 = await read_msg(r2, "ack")
        assert ack2["status"] == "rejected"
        assert "operator lock" in ack2["reason"]
        # observers still receive telemetry
        await read_msg(r2, "telemetry")
        for w in (w1, w2):
            w.close()
            await w.wait_closed()

    asyncio.run(_run_with_server(body))


def test_malformed_payloads_answered_with_error():
    async def body(server):
        reader, writer = await asyncio.open_connection("127.0.0.1", server.bound_port)
        await read_msg(reader, "hello")
        writer.write(b"this is not json\n")
        await writer.drain()
        err = await read_msg(reader, "error")
        assert err["reason"] == "invalid JSON"
        writer.write(json.dumps({"type": "mystery"}).encode() + b"\n")
        await writer.drain()
        err2 = await read_msg(reader, "error")
        assert "unsupported message type" in err2["reason"]
        writer.close()
        await writer.wait_closed()

    asyncio.run(_run_with_server(body))


def test_port_busy_raises():
    async def body():
        first = TeleopServer(port=0)
        task = asyncio.create_task(first.serve())
        while first.bound_port is None:
            await asyncio.sleep(0.01)
        second = TeleopServer(port=first.bound_port)
        with pytest.raises(PortBusyError):
            await second.serve()
        first.stop()
        await task

    asyncio.run(body())


class AsgiWebSocket:
    """Minimal in-loop ASGI websocket driver (no client library needed).

    Runs the app coroutine on the same event loop as the simulation, which
    is exactly how the production deployment shares the loop.
    """

    def __init__(self, app, path="/ws"):
        self.app = app
        self.scope = {"type": "websocket", "path": path, "raw_path": path.encode(),
                      "query_string": b"", "headers": [], "subprotocols": [],
                      "asgi": {"version": "3.0", "spec_version": "2.3"}}
        self.to_app = asyncio.Queue()
        self.from_app = asyncio.Queue()
        self.task = None

    async def __aenter__(self):
        self.task = asyncio.create_task(
            self.app(self.scope, self.to_app.get, self.from_app.put))
        await self.to_app.put({"type": "websocket.connect"})
        accept = await asyncio.wait_for(self.from_app.get(), 5.0)
        assert accept["type"] == "websocket.accept"
        return self

    async def __aexit__(self, *exc):
        await self.to_app.put({"type": "websocket.disconnect", "code": 1000})
        await asyncio.wait_for(self.task, 5.0)

    async def send_text(self, text):
        await self.to_app.put({"type": "websocket.receive", "text": text})

    async def receive_json(self, timeout=5.0):
        msg = await asyncio.wait_for(self.from_app.get(), timeout)
        assert msg["type"] == "websocket.send", msg
        return json.loads(msg["text"])


def test_websocket_bridge_speaks_same_protocol():
    pytest.importorskip("fastapi")
    from mrendo.server import build_web_app

    async def body(server):
        app = build_web_app(server)
        async with AsgiWebSocket(app) as ws:
            hello = await ws.receive_json()
            assert hello["type"] == "hello"
            assert hello["schema"] == "teleop/1"
            await ws.send_text(json.dumps({"type": "cmd", "seq": 1,
                                           "target_bend": 0.2}))
            while True:
                msg = await ws.receive_json()
                if msg["type"] == "ack":
                    assert msg["status"] == "accepted"
                    assert msg["applied"]["target_bend"] == 0.2
                    break
            while True:
                msg = await ws.receive_json()
                if msg["type"] == "telemetry":
                    assert msg["schema"] == "teleop/1"
                    break

    asyncio.run(_run_with_server(body))


def test_slow_client_gets_latest_snapshot_only():
    from mrendo.server import _Client

    sent = []

    async def send_line(line):
        sent.append(line)

    client = _Client(name="c", send_line=send_line)
    client.push({"type": "telemetry", "tick": 1}, replace_telemetry=True)
    client.push({"type": "ack", "seq": 1})
    client.push({"type": "telemetry", "tick": 2}, replace_telemetry=True)
    client.push({"type": "telemetry", "tick": 3}, replace_telemetry=True)
    ticks = [m["tick"] for m in client.queue if m["type"] == "telemetry"]
    assert ticks == [3]                      # stale snapshots dropped
    assert any(m["type"] == "ack" for m in client.queue)   # acks preserved
