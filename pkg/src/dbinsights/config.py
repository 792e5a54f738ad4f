"""Run configuration and backend construction."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .llm import LlmBackend, LlmGateway, MockBackend, RemoteBackend

METHOD_NAMES = ("HLI", "HLI-wS", "HLI-wH", "Serial")

BASE_URL_ENV = "DBINSIGHTS_BASE_URL"
API_KEY_ENV = "DBINSIGHTS_API_KEY"


@dataclass
class MethodConfig:
    name: str = "HLI"
    tau_a: float = 0.7
    tau_h: float = 0.9
    maxit: int = 3
    seed: int = 0
    max_retries: int = 3
    row_limit: int = 20
    timeout_s: float = 10.0
    serial_char_budget: int = 12000
    backend: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in METHOD_NAMES:
            raise ValueError(f"method must be one of {METHOD_NAMES}, got {self.name!r}")
        for label, value in (("tau_a", self.tau_a), ("tau_h", self.tau_h)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{label} must be in [0, 1], got {value}")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "tau_a": self.tau_a,
            "tau_h": self.tau_h,
            "maxit": self.maxit,
            "seed": self.seed,
            "max_retries": self.max_retries,
            "row_limit": self.row_limit,
            "timeout_s": self.timeout_s,
            "serial_char_budget": self.serial_char_budget,
        }


_CLI_METHOD_ALIASES = {
    "hli": "HLI",
    "hli-ws": "HLI-wS",
    "hli-wh": "HLI-wH",
    "serial": "Serial",
}


def method_from_cli(name: str) -> str:
    try:
        return _CLI_METHOD_ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown method {name!r}") from None


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def config_from_dict(data: dict, method: str | None = None) -> MethodConfig:
    kwargs = {k: v for k, v in data.items() if k in MethodConfig.__dataclass_fields__}
    if method is not None:
        kwargs["name"] = method
    return MethodConfig(**kwargs)


def build_backend(settings: dict) -> LlmBackend:
    kind = settings.get("type", "remote")
    if kind == "mock":
        fixtures = settings.get("fixtures")
        if fixtures:
            return MockBackend.from_file(fixtures)
        return MockBackend()
    if kind == "remote":
        base_url = os.environ.get(BASE_URL_ENV) or settings.get("base_url")
        if not base_url:
            raise ValueError(f"remote backend needs base_url (config) or {BASE_URL_ENV}")
        return RemoteBackend(
            base_url=base_url,
            model=settings.get("model", "gpt-4o"),
            api_key_env=settings.get("api_key_env", API_KEY_ENV),
            max_attempts=int(settings.get("max_attempts", 3)),
            backoff_s=float(settings.get("backoff_s", 1.0)),
            timeout_s=float(settings.get("timeout_s", 60.0)),
        )
    raise ValueError(f"unknown backend type {kind!r}")


def build_gateway(settings: dict) -> LlmGateway:
    return LlmGateway(
        backend=build_backend(settings),
        price_in=float(settings.get("price_in", 0.0)),
        price_out=float(settings.get("price_out", 0.0)),
    )
