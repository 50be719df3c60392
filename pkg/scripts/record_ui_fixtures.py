#!/usr/bin/env python3
"""Record teleop/1 wire traffic into frontend test fixtures.

Produces two ndjson files under frontend/test/fixtures/:

* recorded_session.ndjson - a live TCP session transcript ({"dir": "sent"|
  "recv", "msg": {...}} per line) including out-of-range commands so the
  server's clamping behavior is captured for the UI conformance test.
* replay_60s.ndjson       - 600 published telemetry frames (60 s at the
  10 Hz publish rate) from a deterministic offline session.
"""

import asyncio
import json
from pathlib import Path

import numpy as np

from mrendo.server import TeleopServer
from mrendo.teleop import Command, SimSession

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures"

COMMANDS = [
    {"type": "cmd", "seq": 1, "insert_velocity": 4.0, "coils_enabled": False},
    {"type": "cmd", "seq": 2, "target_bend": 0.6, "coils_enabled": True},
    # out of range: bend beyond the 120 deg guard, velocity beyond 10 mm/s
    {"type": "cmd", "seq": 3, "target_bend": 2.6179938779914944, "insert_velocity": 25.0},
    # stale sequence number
    {"type": "cmd", "seq": 3, "target_bend": 0.1},
    # grasper beyond its 0.5 A limit
    {"type": "cmd", "seq": 4, "grasper_current": 0.9, "target_bend": 0.8},
    {"type": "cmd", "seq": 5, "coils_enabled": False, "grasper_current": 0.0},
]


async def record_session() -> list[dict]:
    server = TeleopServer(port=0)
    serve_task = asyncio.create_task(server.serve())
    while server.bound_port is None:
        await asyncio.sleep(0.01)
    transcript = []
    reader, writer = await asyncio.open_connection("127.0.0.1", server.bound_port)

    async def read_until(predicate, limit=400):
        for _ in range(limit):
            line = await asyncio.wait_for(reader.readline(), 10.0)
            msg = json.loads(line)
            transcript.append({"dir": "recv", "msg": msg})
            if predicate(msg):
                return msg
        raise RuntimeError("server never sent the expected message")

    await read_until(lambda m: m["type"] == "hello")
    for cmd in COMMANDS:
        writer.write(json.dumps(cmd).encode() + b"\n")
        await writer.drain()
        transcript.append({"dir": "sent", "msg": cmd})
        await read_until(lambda m: m["type"] == "ack" and m["seq"] == cmd["seq"])
    # let a few telemetry frames through, then close
    seen = 0

    def count_telemetry(msg):
        nonlocal seen
        if msg["type"] == "telemetry":
            seen += 1
        return seen >= 5

    await read_until(count_telemetry)
    writer.close()
    await writer.wait_closed()
    server.stop()
    await serve_task
    return transcript


def record_replay() -> list[str]:
    session = SimSession()
    decimate = int(round(session.config.safety.tick_rate / session.config.safety.publish_rate))
    dt = 1.0 / session.config.safety.tick_rate
    lines = []
    seq = 0
    schedule = {
        0: {"insert_velocity": 5.0, "coils_enabled": False},
        100: {"insert_velocity": 0.0, "coils_enabled": True,
              "target_bend": float(np.deg2rad(50.0))},
        600: {"coils_enabled": False},
        800: {"coils_enabled": True, "target_bend": float(np.deg2rad(55.0))},
        1500: {"grasper_current": 0.35},
        2200: {"grasper_current": 0.0, "target_bend": float(np.deg2rad(-20.0))},
    }
    draft = {"insert_velocity": 0.0, "target_bend": 0.0, "bend_azimuth": 0.0,
             "coils_enabled": True, "grasper_current": 0.0}
    for tick in range(3000):
        if tick in schedule:
            draft.update(schedule[tick])
            seq += 1
            session.handle_command(Command(client_id="fixture", sequence_number=seq,
                                           **draft))
        telemetry = session.step(dt)
        if telemetry.tick % decimate == 0:
            lines.append(telemetry.to_json_line())
    assert len(lines) == 600
    return lines


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    transcript = asyncio.run(record_session())
    with (FIXTURES / "recorded_session.ndjson").open("w") as fh:
        for entry in transcript:
            fh.write(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")
    with (FIXTURES / "replay_60s.ndjson").open("w") as fh:
        fh.write("\n".join(record_replay()) + "\n")
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
