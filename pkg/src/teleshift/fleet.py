"""Live-mode clients: a fleet of simulated devices over TCP, and the small
synchronous client the snapshot subcommand uses.

Fleet devices actuate on the wall clock and survive hub restarts through the
same recovery path the virtual runner exercises (reconnect with exponential
backoff, HELLO, resync, re-send of pending edits).
"""

from __future__ import annotations

import asyncio
import socket
from typing import Callable

from .device import ActuationParams, DeviceCore, HubUnreachable, reconnect_delay_ms
from .model import ShapeError
from .netsim import ImpairedLink, NetProfile
from .protocol import Envelope, Kind, MalformedEnvelope, Outbox, decode_envelope
from .server import parse_addr
from .sync import Role, SessionMode


class FleetAbort(ShapeError):
    code = "FleetAbort"


class IdTaken(ShapeError):
    code = "DuplicateClientId"


class LiveDevice:
    """One device process: wall-clock ticks plus a reconnecting hub link."""

    def __init__(
        self,
        core: DeviceCore,
        hub_addr: str,
        net: NetProfile | None = None,
        on_ready: Callable[[str], None] = lambda line: print(line, flush=True),
    ):
        self.core = core
        self.host, self.port = parse_addr(hub_addr)
        self.net = net
        self._up = ImpairedLink(net, f"{core.client_id}:up") if net else None
        self._down = ImpairedLink(net, f"{core.client_id}:down") if net else None
        self.on_ready = on_ready
        self._announced = False
        self._writer: asyncio.StreamWriter | None = None
        self.stopping = asyncio.Event()

    async def _send(self, envelope: Envelope) -> None:
        writer = self._writer
        if writer is None:
            return
        if self._up is not None:
            delay = self._up.impair()
            if delay is None:
                return
            if delay > 0:
                await asyncio.sleep(delay / 1000.0)
        if writer.is_closing():
            return
        writer.write(envelope.encode_line())
        await writer.drain()

    async def _handle_line(self, line: bytes) -> None:
        if self._down is not None:
            delay = self._down.impair()
            if delay is None:
                return
            if delay > 0:
                await asyncio.sleep(delay / 1000.0)
        try:
            envelope = decode_envelope(line)
        except MalformedEnvelope:
            return
        was_connected = self.core.connected
        for out in self.core.on_envelope(envelope):
            await self._send(out)
        if envelope.kind is Kind.WELCOME and not was_connected and not self._announced:
            self._announced = True
            net = f" net={self.net.brief()}" if self.net else ""
            self.on_ready(f"READY {self.core.client_id} role={self.core.role.value}{net}")
        if envelope.kind is Kind.ERROR:
            code = envelope.payload.get("code")
            if code == "DuplicateClientId" and not self.core.connected:
                raise IdTaken(self.core.client_id)
            if code in ("SecondPresenter", "RoleModeMismatch"):
                abort = FleetAbort(f"{self.core.client_id}: {envelope.payload.get('detail', code)}")
                abort.code = code
                raise abort

    async def _tick_loop(self) -> None:
        interval = self.core.params.tick_ms / 1000.0
        while True:
            await asyncio.sleep(interval)
            self.core.tick()

    async def run(self) -> None:
        ticker = asyncio.create_task(self._tick_loop())
        try:
            while not self.stopping.is_set():
                try:
                    reader, writer = await asyncio.open_connection(self.host, self.port)
                except OSError:
                    delay = reconnect_delay_ms(self.core.reconnect_attempt)
                    self.core.reconnect_attempt += 1
                    await asyncio.sleep(delay / 1000.0)
                    continue
                self._writer = writer
                for envelope in self.core.connect():
                    await self._send(envelope)
                try:
                    while True:
                        line = await reader.readline()
                        if not line:
                            break
                        await self._handle_line(line)
                except (ConnectionError, OSError):
                    pass
                finally:
                    self._writer = None
                    self.core.on_disconnect()
                    writer.close()
                if self.stopping.is_set():
                    break
                delay = reconnect_delay_ms(self.core.reconnect_attempt)
                self.core.reconnect_attempt += 1
                await asyncio.sleep(delay / 1000.0)
        finally:
            ticker.cancel()


async def run_fleet(
    hub_addr: str,
    session: str,
    mode: SessionMode,
    count: int,
    presenter_first: bool = False,
    net: NetProfile | None = None,
    params: ActuationParams | None = None,
    on_ready: Callable[[str], None] = lambda line: print(line, flush=True),
) -> None:
    """Spawn `count` devices named <session>-d0.. and run until cancelled.

    Ids are allocated first-free: when another fleet already holds
    <session>-dN the device moves on to the next index.
    """
    next_index = iter(range(count * 64))

    async def run_one(first: bool) -> None:
        role = None
        if mode is SessionMode.PRESENTATION:
            role = Role.PRESENTER if (presenter_first and first) else Role.FOLLOWER
        while True:
            core = DeviceCore(
                client_id=f"{session}-d{next(next_index)}",
                session=session,
                mode=mode,
                desired_role=role,
                params=params or ActuationParams(),
            )
            device = LiveDevice(core, hub_addr, net=net, on_ready=on_ready)
            try:
                await device.run()
                return
            except IdTaken:
                continue

    await asyncio.gather(*(run_one(i == 0) for i in range(count)))


# -- synchronous control client ------------------------------------------------------


def hub_request(
    hub_addr: str,
    session: str,
    client_id: str,
    kind: Kind,
    payload: dict,
    reply_kinds: tuple[Kind, ...],
    timeout_s: float = 10.0,
) -> dict:
    """Join a session without registering a body, send one request, return the
    reply payload. Raises ShapeError carrying the hub's error code."""
    host, port = parse_addr(hub_addr)
    outbox = Outbox()
    try:
        sock = socket.create_connection((host, port), timeout=timeout_s)
    except OSError as exc:
        raise HubUnreachable(f"cannot reach hub at {hub_addr}: {exc}") from exc
    with sock, sock.makefile("rwb") as stream:
        def send(envelope: Envelope) -> None:
            stream.write(envelope.encode_line())
            stream.flush()

        def wait_for(*kinds: Kind) -> Envelope:
            while True:
                line = stream.readline()
                if not line:
                    raise HubUnreachable("hub closed the connection")
                envelope = decode_envelope(line)
                if envelope.kind is Kind.PING:
                    send(outbox.stamp(Kind.PONG, session, client_id, {}))
                    continue
                if envelope.kind in kinds or envelope.kind is Kind.ERROR:
                    return envelope

        send(
            outbox.stamp(
                Kind.HELLO,
                session,
                client_id,
                {"role": None, "substructures": [], "create": False},
            )
        )
        reply = wait_for(Kind.WELCOME)
        if reply.kind is Kind.ERROR:
            raise _as_error(reply.payload)
        send(outbox.stamp(kind, session, client_id, payload))
        reply = wait_for(*reply_kinds)
        if reply.kind is Kind.ERROR:
            raise _as_error(reply.payload)
        return reply.payload


def _as_error(payload: dict) -> ShapeError:
    error = ShapeError(payload.get("detail", ""))
    error.code = payload.get("code", "ShapeError")
    return error
