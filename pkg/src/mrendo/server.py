"""Teleop service: one fixed-tick loop, line-delimited JSON over TCP.

Concurrency model: the simulation loop exclusively owns the mutable
session.  Client readers push commands onto an ordered queue that the loop
drains once per tick; outgoing telemetry is fanned out as immutable
snapshots.  A slow client never blocks the loop: pending telemetry for a
client is replaced by the newest snapshot, while acks and events are kept.

The same payloads are exposed over a browser WebSocket (and the built UI
is served statically) when FastAPI/uvicorn are installed; the wire schema
is identical.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .phantom import PhantomMap
from .teleop import MAX_INSERT_SPEED, PROTOCOL_SCHEMA, Command, SimSession, Telemetry


class PortBusyError(OSError):
    pass


def _hello_payload(session: SimSession, role: str) -> dict:
    phantom = session.phantom
    safety = session.config.safety
    grasper_limit = session.grasper.current_limit if session.grasper else 0.0
    return {
        "type": "hello",
        "schema": PROTOCOL_SCHEMA,
        "role": role,
        "power_cap": safety.power_cap,
        # clamp bounds, exact server-side values for client-side mirroring
        "max_bend": safety.max_bend,
        "max_bend_deg": float(np.rad2deg(safety.max_bend)),
        "max_insert_speed": MAX_INSERT_SPEED,
        "grasper_limit": grasper_limit,
        "tick_rate": safety.tick_rate,
        "publish_rate": safety.publish_rate,
        "max_insertion_mm": session.max_insertion * 1e3,
        "phantom": {
            "name": phantom.name,
            "wall_polygons": [p.tolist() for p in phantom.wall_polygons],
            "entry_mm": phantom.entry_position.tolist(),
            "entry_heading_deg": float(np.rad2deg(phantom.entry_heading)),
            "tumor_center_mm": phantom.tumor_center.tolist(),
            "tumor_radius_mm": phantom.tumor_radius,
        },
    }


def _dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass
class _Client:
    name: str
    send_line: object                  # async callable(str)
    queue: list = field(default_factory=list)
    has_data: asyncio.Event = field(default_factory=asyncio.Event)
    closed: bool = False

    def push(self, payload: dict, replace_telemetry: bool = False):
        if self.closed:
            return
        if replace_telemetry:
            self.queue = [m for m in self.queue if m.get("type") != "telemetry"]
        self.queue.append(payload)
        self.has_data.set()


class TeleopServer:
    """Shared hub for TCP and WebSocket transports."""

    def __init__(self, config: SystemConfig | None = None,
                 phantom: PhantomMap | None = None,
                 host: str = "127.0.0.1", port: int = 8765,
                 realtime: bool = True, max_ticks: int | None = None):
        self.session = SimSession(config=config, phantom=phantom)
        self.host = host
        self.port = port
        self.realtime = realtime
        self.max_ticks = max_ticks
        self.clients: dict[str, _Client] = {}
        self.commands: asyncio.Queue = asyncio.Queue()
        self._client_counter = 0
        self._events_sent = 0
        self._stopping = asyncio.Event()
        self.bound_port: int | None = None

    # -- client plumbing ---------------------------------------------------

    def _register(self, send_line) -> _Client:
        self._client_counter += 1
        name = f"client-{self._client_counter}"
        role = "operator" if self.session.operator in (None, name) and self._client_counter == 1 else "observer"
        client = _Client(name=name, send_line=send_line)
        self.clients[name] = client
        client.push(_hello_payload(self.session, role))
        if self.session.last_telemetry is not None:
            client.push(self.session.last_telemetry.to_payload())
        return client

    def _unregister(self, client: _Client):
        client.closed = True
        client.has_data.set()
        self.clients.pop(client.name, None)

    async def _writer_loop(self, client: _Client):
        while not client.closed:
            await client.has_data.wait()
            pending, client.queue = client.queue, []
            client.has_data.clear()
            for payload in pending:
                await client.send_line(_dumps(payload))

    def _ingest_line(self, client: _Client, line: str):
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            client.push({"type": "error", "schema": PROTOCOL_SCHEMA,
                         "reason": "invalid JSON"})
            return
        if msg.get("type") != "cmd":
            client.push({"type": "error", "schema": PROTOCOL_SCHEMA,
                         "reason": f"unsupported message type {msg.get('type')!r}"})
            return
        cmd = Command(
            insert_velocity=float(msg.get("insert_velocity", 0.0)),
            target_bend=float(msg.get("target_bend", 0.0)),
            bend_azimuth=float(msg.get("bend_azimuth", 0.0)),
            coils_enabled=bool(msg.get("coils_enabled", True)),
            grasper_current=float(msg.get("grasper_current", 0.0)),
            client_id=client.name,
            sequence_number=int(msg.get("seq", 0)),
        )
        self.commands.put_nowait((client.name, cmd))

    # -- simulation loop ---------------------------------------------------

    async def _tick_loop(self):
        safety = self.session.config.safety
        dt = 1.0 / safety.tick_rate
        decimate = max(1, int(round(safety.tick_rate / safety.publish_rate)))
        loop = asyncio.get_running_loop()
        next_time = loop.time()
        while not self._stopping.is_set():
            if self.max_ticks is not None and self.session.tick >= self.max_ticks:
                break
            while not self.commands.empty():
                name, cmd = self.commands.get_nowait()
                ack = self.session.handle_command(cmd)
                client = self.clients.get(name)
                if client is not None:
                    client.push(ack)
            telemetry = self.session.step(dt)
            if self.session.tick % decimate == 0:
                payload = telemetry.to_payload()
                for client in list(self.clients.values()):
                    client.push(payload, replace_telemetry=True)
            new_events = self.session.events[self._events_sent:]
            self._events_sent = len(self.session.events)
            for event in new_events:
                payload = {"type": "event", "schema": PROTOCOL_SCHEMA, **event}
                for client in list(self.clients.values()):
                    client.push(payload)
            if self.realtime:
                next_time += dt
                delay = next_time - loop.time()
                if delay > 0:
                    with contextlib.suppress(asyncio.TimeoutError):
                        await asyncio.wait_for(self._stopping.wait(), timeout=delay)
            else:
                await asyncio.sleep(0)
        self._stopping.set()

    # -- transports ----------------------------------------------------------

    async def _handle_tcp(self, reader: asyncio.StreamReader,
                          writer: asyncio.StreamWriter):
        async def send_line(line: str):
            writer.write(line.encode() + b"\n")
            await writer.drain()

        client = self._register(send_line)
        writer_task = asyncio.create_task(self._writer_loop(client))
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                text = line.decode().strip()
                if text:
                    self._ingest_line(client, text)
        except (ConnectionResetError, asyncio.IncompleteReadError):
            pass
        finally:
            self._unregister(client)
            writer_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await writer_task
            writer.close()
            with contextlib.suppress(ConnectionResetError):
                await writer.wait_closed()

    async def serve(self):
        """Run the TCP transport and the simulation loop until stopped."""
        try:
            server = await asyncio.start_server(self._handle_tcp, self.host, self.port)
        except OSError as exc:
            raise PortBusyError(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        self.bound_port = server.sockets[0].getsockname()[1]
        tick_task = asyncio.create_task(self._tick_loop())
        try:
            await self._stopping.wait()
        finally:
            tick_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await tick_task
            server.close()
            await server.wait_closed()

    def stop(self):
        self._stopping.set()


def build_web_app(server: TeleopServer, ui_dir: str | None = None):
    """FastAPI app bridging the same protocol onto a browser WebSocket."""
    from .webapp import make_app

    return make_app(server, ui_dir)


async def serve_with_web(server: TeleopServer, http_host: str, http_port: int,
                         ui_dir: str | None = None):  # pragma: no cover
    import uvicorn

    app = build_web_app(server, ui_dir)
    config = uvicorn.Config(app, host=http_host, port=http_port, log_level="warning")
    web = uvicorn.Server(config)
    web_task = asyncio.create_task(web.serve())
    try:
        await server.serve()
    finally:
        web.should_exit = True
        await web_task
