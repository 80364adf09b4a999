"""Distributed shape-synchronization for six-arm shape-shifting devices.

Substructures (cube bodies with one extension arm per axis direction) join
into assemblies and stay in sync across physical spaces through a realtime
hub: collaboration sessions merge everyone's edits, presentation sessions
broadcast one presenter while followers design privately, and snapshots give
undo. Ships with a deterministic scenario runner and the ``shiftctl`` CLI.
"""

from .clock import LamportClock, VersionStamp, observe, stamp_next
from .device import (
    ActuationParams,
    DeviceCore,
    DeviceState,
    HubUnreachable,
    WrongSubstructure,
    reconnect_delay_ms,
    step_extension,
)
from .geometry import BodyCollision, Embedding, InconsistentCycle, UnknownAnchor, embed_assembly
from .hub import (
    DuplicateClientId,
    Hub,
    NotAMember,
    SecondPresenter,
    SessionRecord,
    StaleSeq,
    UnknownSession,
    UnknownSnapshot,
    load_session,
    persist_session,
)
from .model import (
    BODY_EDGE_MM,
    GEOM_TOLERANCE_MM,
    MAX_EXTENSION_MM,
    Arm,
    ArmOccupied,
    ArmState,
    AssemblyTopology,
    Joint,
    NonOpposingArms,
    ShapeError,
    Snapshot,
    SubstructureState,
    UnknownSubstructure,
    add_joint,
    clamp_extension,
    opposite_arm,
    remove_joint,
    restore_targets,
    snapshot_of,
)
from .netsim import ImpairedLink, NetProfile
from .protocol import Envelope, Kind, MalformedEnvelope, decode_envelope
from .scenario import (
    BadScenario,
    Scenario,
    ScenarioReport,
    ScenarioRunner,
    ScenarioTimeout,
    load_scenario,
    parse_scenario,
)
from .sync import (
    ArmUpdate,
    Role,
    RoleModeMismatch,
    RoutingDecision,
    SessionMode,
    merge_arm,
    merge_topology,
    resync,
    route_update,
)

__version__ = "0.1.0"
