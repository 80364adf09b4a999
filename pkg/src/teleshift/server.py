"""Live hub server: newline-delimited JSON over TCP, plus a WebSocket binding.

Both transports feed the same transport-free Hub core; one envelope per TCP
line or per WebSocket text frame. Session mutations are serialized with one
lock per session id while different sessions proceed concurrently.
"""

from __future__ import annotations

import asyncio
import errno
import os
from collections import defaultdict
from typing import Awaitable, Callable

from .hub import HEARTBEAT_MS_DEFAULT, Hub
from .model import ShapeError
from .protocol import Envelope, Kind, MalformedEnvelope, decode_envelope, error_payload


class AddressInUse(ShapeError):
    code = "AddressInUse"


class BadDataDir(ShapeError):
    code = "BadDataDir"


def parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {text!r}, expected host:port")
    return host, int(port)


def ensure_data_dir(path: str) -> str:
    try:
        os.makedirs(os.path.join(path, "sessions"), exist_ok=True)
        probe = os.path.join(path, ".writable")
        with open(probe, "w", encoding="utf-8") as handle:
            handle.write("ok")
        os.remove(probe)
    except OSError as exc:
        raise BadDataDir(f"data dir {path!r} is not writable: {exc}") from exc
    return path


class HubServer:
    """Owns the Hub core and pumps envelopes between it and live sockets."""

    def __init__(self, data_dir: str | None, heartbeat_ms: int = HEARTBEAT_MS_DEFAULT):
        self.hub = Hub(data_dir=data_dir)
        self.heartbeat_ms = heartbeat_ms
        self._locks: dict[str, asyncio.Lock] = defaultdict(asyncio.Lock)
        self._writers: dict[str, Callable[[Envelope], Awaitable[None]]] = {}
        self._closers: dict[str, Callable[[], Awaitable[None]]] = {}
        self._serial = 0

    def _register(self, writer, closer) -> str:
        self._serial += 1
        conn_id = f"conn-{self._serial}"
        self._writers[conn_id] = writer
        self._closers[conn_id] = closer
        self.hub.on_connect(conn_id)
        return conn_id

    async def _deliver(self, sends) -> None:
        for conn_id, envelope in sends:
            writer = self._writers.get(conn_id)
            if writer is None:
                continue
            try:
                await writer(envelope)
            except (ConnectionError, OSError):
                await self.drop(conn_id)

    async def dispatch(self, conn_id: str, envelope: Envelope) -> None:
        lock = self._locks[envelope.session or conn_id]
        async with lock:
            sends = self.hub.on_envelope(conn_id, envelope)
        await self._deliver(sends)

    async def dispatch_malformed(self, conn_id: str, exc: MalformedEnvelope) -> None:
        writer = self._writers.get(conn_id)
        if writer is None:
            return
        envelope = Envelope(Kind.ERROR, "", "#hub", 0, error_payload(exc.code, exc.detail))
        try:
            await writer(envelope)
        except (ConnectionError, OSError):
            await self.drop(conn_id)

    async def drop(self, conn_id: str) -> None:
        self._writers.pop(conn_id, None)
        closer = self._closers.pop(conn_id, None)
        self.hub.on_disconnect(conn_id)
        if closer is not None:
            try:
                await closer()
            except (ConnectionError, OSError):
                pass

    async def heartbeat_loop(self) -> None:
        while True:
            await asyncio.sleep(self.heartbeat_ms / 1000.0)
            sends, reaped = self.hub.heartbeat()
            await self._deliver(sends)
            for conn_id in reaped:
                await self.drop(conn_id)

    # -- TCP ----------------------------------------------------------------------

    async def handle_tcp(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        send_lock = asyncio.Lock()

        async def write(envelope: Envelope) -> None:
            async with send_lock:
                writer.write(envelope.encode_line())
                await writer.drain()

        async def close() -> None:
            writer.close()

        conn_id = self._register(write, close)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if not line.strip():
                    continue
                try:
                    envelope = decode_envelope(line)
                except MalformedEnvelope as exc:
                    await self.dispatch_malformed(conn_id, exc)
                    continue
                await self.dispatch(conn_id, envelope)
        except (ConnectionError, OSError):
            pass
        finally:
            await self.drop(conn_id)

    # -- WebSocket -------------------------------------------------------------------

    async def handle_ws(self, socket) -> None:
        async def write(envelope: Envelope) -> None:
            await socket.send(envelope.encode())

        async def close() -> None:
            await socket.close()

        conn_id = self._register(write, close)
        try:
            async for message in socket:
                try:
                    envelope = decode_envelope(message)
                except MalformedEnvelope as exc:
                    await self.dispatch_malformed(conn_id, exc)
                    continue
                await self.dispatch(conn_id, envelope)
        except Exception:
            pass
        finally:
            await self.drop(conn_id)


async def serve_hub(
    listen: str,
    data_dir: str,
    heartbeat_ms: int = HEARTBEAT_MS_DEFAULT,
    ws_listen: str | None = None,
    ready: Callable[[str], None] = lambda line: print(line, flush=True),
) -> None:
    """Run the hub until cancelled. Prints one READY line per bound address."""
    ensure_data_dir(data_dir)
    server = HubServer(data_dir, heartbeat_ms)
    host, port = parse_addr(listen)
    try:
        tcp = await asyncio.start_server(server.handle_tcp, host, port)
    except OSError as exc:
        if exc.errno in (errno.EADDRINUSE, errno.EACCES):
            raise AddressInUse(f"cannot bind {listen}: {exc}") from exc
        raise
    bound = tcp.sockets[0].getsockname()
    ready(f"READY {bound[0]}:{bound[1]}")

    ws_server = None
    if ws_listen is not None:
        from websockets.asyncio.server import serve as ws_serve

        ws_host, ws_port = parse_addr(ws_listen)
        try:
            ws_server = await ws_serve(server.handle_ws, ws_host, ws_port)
        except OSError as exc:
            tcp.close()
            if exc.errno in (errno.EADDRINUSE, errno.EACCES):
                raise AddressInUse(f"cannot bind {ws_listen}: {exc}") from exc
            raise
        ready(f"READY WS {ws_host}:{ws_port}")

    heartbeat = asyncio.create_task(server.heartbeat_loop())
    try:
        async with tcp:
            await tcp.serve_forever()
    finally:
        heartbeat.cancel()
        if ws_server is not None:
            ws_server.close()
