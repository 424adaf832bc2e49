"""Control-service configuration file (UTF-8 JSON) with environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .biometrics import BiometricCoefficients, FeedingBandTable
from .control.engine import ControllerConfig
from .control.state import AlertRule, default_rules
from .errors import ParseError

ENV_BROKER_URL = "AQUA_BROKER_URL"
ENV_CONFIG = "AQUA_CONFIG"

DEFAULT_BROKER_URL = "local:default"


@dataclass(frozen=True)
class ServeConfig:
    tank_id: str = "t1"
    broker_url: str = DEFAULT_BROKER_URL
    api_host: str = "127.0.0.1"
    api_port: int = 8000
    log_path: str = "aquafeed-events.aqlg"
    store_snapshot_path: str | None = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)


def load_serve_config(path: str | Path | None, broker_override: str | None = None) -> ServeConfig:
    """Resolve configuration: file (or AQUA_CONFIG), then env/flag overrides."""
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text("utf-8"))
        except OSError as exc:
            raise ParseError(str(path), f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), f"not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ParseError(str(path), "top level must be an object")

    known = {"tank_id", "broker_url", "api", "log_path", "store_snapshot_path",
             "controller", "rules", "coefficients", "table"}
    unknown = set(doc) - known
    if unknown:
        raise ParseError(str(path), f"unknown key(s): {sorted(unknown)}")

    controller_kwargs = dict(doc.get("controller", {}))
    try:
        if "coefficients" in doc:
            controller_kwargs["coefficients"] = BiometricCoefficients(**doc["coefficients"])
        if "table" in doc:
            from .biometrics import FeedingBand

            controller_kwargs["table"] = FeedingBandTable(
                tuple(
                    FeedingBand(
                        lower_g=row["lower_g"],
                        upper_g=row.get("upper_g"),
                        percent_min=row["percent_min"],
                        percent_max=row["percent_max"],
                        percent_override=row.get("percent_override"),
                    )
                    for row in doc["table"]
                )
            )
        if "rules" in doc:
            rules = default_rules()
            for row in doc["rules"]:
                rule = AlertRule(
                    row["kind"], row["low"], row["high"],
                    row.get("hysteresis", 0.0), row.get("action", "notify"),
                )
                rules[rule.kind] = rule
            controller_kwargs["rules"] = rules
        controller = ControllerConfig(**controller_kwargs)
    except (KeyError, TypeError) as exc:
        raise ParseError(str(path), f"bad controller config: {exc}") from None

    api = doc.get("api", {})
    broker_url = (
        broker_override
        or os.environ.get(ENV_BROKER_URL)
        or doc.get("broker_url")
        or DEFAULT_BROKER_URL
    )
    return ServeConfig(
        tank_id=doc.get("tank_id", "t1"),
        broker_url=broker_url,
        api_host=api.get("host", "127.0.0.1"),
        api_port=api.get("port", 8000),
        log_path=doc.get("log_path", "aquafeed-events.aqlg"),
        store_snapshot_path=doc.get("store_snapshot_path"),
        controller=controller,
    )
