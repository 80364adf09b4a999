"""shiftctl: run the hub, spawn device fleets, execute scenarios, manage snapshots.

Exit codes: 0 success, 1 domain error, 2 usage error. Machine output
(--json and scenario reports) is canonical JSON with sorted keys.
"""

from __future__ import annotations

import argparse
import asyncio
import os
import sys

from .codec import canonical_dumps
from .device import ActuationParams
from .fleet import FleetAbort, hub_request, run_fleet
from .hub import HEARTBEAT_MS_DEFAULT
from .model import ShapeError
from .netsim import NetProfile
from .protocol import Kind
from .scenario import ScenarioRunner, load_scenario
from .server import serve_hub
from .sync import SessionMode

ENV_HUB = "TELESHIFT_HUB"
ENV_LISTEN = "TELESHIFT_LISTEN"
ENV_DATA_DIR = "TELESHIFT_DATA_DIR"
ENV_HEARTBEAT = "TELESHIFT_HEARTBEAT_MS"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftctl",
        description="Distributed shape-synchronization toolbox",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    hub = sub.add_parser("hub", help="run the realtime hub")
    hub.add_argument("--listen", default=os.environ.get(ENV_LISTEN, "127.0.0.1:7070"))
    hub.add_argument("--ws-listen", default=None, help="optional WebSocket bind address")
    hub.add_argument(
        "--data-dir", default=os.environ.get(ENV_DATA_DIR, "./teleshift-data")
    )
    hub.add_argument(
        "--heartbeat-ms",
        type=int,
        default=int(os.environ.get(ENV_HEARTBEAT, HEARTBEAT_MS_DEFAULT)),
    )

    sim = sub.add_parser("sim", help="spawn a fleet of simulated devices")
    sim.add_argument("--hub", default=os.environ.get(ENV_HUB), required=ENV_HUB not in os.environ)
    sim.add_argument("--session", required=True)
    sim.add_argument("--mode", choices=["collab", "present"], default="collab")
    sim.add_argument("--devices", type=int, default=1)
    sim.add_argument(
        "--role",
        choices=["presenter"],
        default=None,
        help="request presenter for the first device (present mode)",
    )
    sim.add_argument("--net", default=None, help="latency,jitter,drop,seed")
    sim.add_argument("--tick-ms", type=int, default=20)

    run = sub.add_parser("run", help="execute a scenario file on the virtual clock")
    run.add_argument("scenario_file")
    run.add_argument("--realtime", action="store_true", help="pace events on the wall clock")

    snap = sub.add_parser("snapshot", help="save, list or restore session snapshots")
    snap.add_argument("--hub", default=os.environ.get(ENV_HUB), required=ENV_HUB not in os.environ)
    snap.add_argument("--session", required=True)
    snap.add_argument("--json", action="store_true", dest="as_json")
    ops = snap.add_subparsers(dest="op", required=True)
    save = ops.add_parser("save")
    save.add_argument("label")
    ops.add_parser("list")
    restore = ops.add_parser("restore")
    restore.add_argument("snapshot_id")

    return parser


def cmd_hub(args) -> int:
    try:
        asyncio.run(
            serve_hub(
                listen=args.listen,
                data_dir=args.data_dir,
                heartbeat_ms=args.heartbeat_ms,
                ws_listen=args.ws_listen,
            )
        )
    except ShapeError as exc:
        print(f"{exc.code}: {exc.detail}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


def cmd_sim(args) -> int:
    net = None
    if args.net:
        try:
            net = NetProfile.parse(args.net)
        except ValueError as exc:
            print(f"BadNetProfile: {exc}", file=sys.stderr)
            return 2
    mode = SessionMode(args.mode)
    try:
        asyncio.run(
            run_fleet(
                hub_addr=args.hub,
                session=args.session,
                mode=mode,
                count=args.devices,
                presenter_first=args.role == "presenter",
                net=net,
                params=ActuationParams(tick_ms=args.tick_ms),
            )
        )
    except (FleetAbort, ShapeError) as exc:
        print(f"{exc.code}: {exc.detail}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario_file)
        report = ScenarioRunner(scenario).run(realtime=args.realtime)
    except ShapeError as exc:
        print(f"{exc.code}: {exc.detail}", file=sys.stderr)
        return 1
    print(report.encode())
    return 0 if report.converged else 1


def cmd_snapshot(args) -> int:
    client_id = f"ctl-{os.getpid()}"
    try:
        if args.op == "save":
            payload = hub_request(
                args.hub, args.session, client_id,
                Kind.SNAPSHOT_SAVE, {"label": args.label}, (Kind.SNAPSHOT_SAVE,),
            )
            rows = [payload]
        elif args.op == "list":
            payload = hub_request(
                args.hub, args.session, client_id,
                Kind.SNAPSHOT_LIST, {}, (Kind.SNAPSHOT_LIST,),
            )
            rows = payload["snapshots"]
        else:
            payload = hub_request(
                args.hub, args.session, client_id,
                Kind.SNAPSHOT_RESTORE, {"snapshot_id": args.snapshot_id},
                (Kind.SNAPSHOT_RESTORE,),
            )
            rows = [payload]
    except ShapeError as exc:
        print(f"{exc.code}: {exc.detail}", file=sys.stderr)
        return 1

    if args.as_json:
        print(canonical_dumps(rows))
        return 0
    if args.op == "restore":
        print(f"restored {payload['snapshot_id']} ({payload['updates']} arm targets)")
        return 0
    if not rows:
        print("no snapshots")
        return 0
    width = max(len(r["snapshot_id"]) for r in rows)
    label_width = max(len(r.get("label", "")) for r in rows)
    print(f"{'SNAPSHOT_ID':<{max(width, 11)}}  {'LABEL':<{max(label_width, 5)}}  CREATED_AT")
    for row in rows:
        print(
            f"{row['snapshot_id']:<{max(width, 11)}}  "
            f"{row.get('label', ''):<{max(label_width, 5)}}  {row.get('created_at', '')}"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "hub":
        return cmd_hub(args)
    if args.command == "sim":
        return cmd_sim(args)
    if args.command == "run":
        return cmd_run(args)
    return cmd_snapshot(args)


if __name__ == "__main__":
    sys.exit(main())
