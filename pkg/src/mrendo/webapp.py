"""Browser transport: the teleop/1 protocol over a FastAPI WebSocket.

Kept separate from the core server so fastapi stays an optional extra.
No postponed annotations here: FastAPI resolves the endpoint signature at
decoration time.
"""

import asyncio
import contextlib

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles


def make_app(server, ui_dir=None) -> FastAPI:
    app = FastAPI(title="mrendo teleop")

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()

        async def send_line(line: str):
            await websocket.send_text(line)

        client = server._register(send_line)
        writer_task = asyncio.create_task(server._writer_loop(client))
        try:
            while True:
                text = await websocket.receive_text()
                server._ingest_line(client, text)
        except WebSocketDisconnect:
            pass
        finally:
            server._unregister(client)
            writer_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await writer_task

    if ui_dir:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
