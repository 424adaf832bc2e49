"""Backend decision engine: pairing, rationing, actuation, recovery, API surface."""

from .state import Alert, AlertRule, FeedDecision, TankState, default_rules
from .events import Event, StateFold
from .eventlog import EventLogWriter, read_event_log, recover_fold
from .engine import ControllerConfig, FeedCapExceededError, TankController
from .runner import ClosedLoopRunner
from .service import ControlService, StreamHub, TankRuntime

__all__ = [
    "Alert",
    "AlertRule",
    "FeedDecision",
    "TankState",
    "default_rules",
    "Event",
    "StateFold",
    "EventLogWriter",
    "read_event_log",
    "recover_fold",
    "ControllerConfig",
    "FeedCapExceededError",
    "TankController",
    "ClosedLoopRunner",
    "ControlService",
    "StreamHub",
    "TankRuntime",
]
