"""Application configuration: one TOML file covering every subsystem.

Sections map to subsystems: [store], [auth], [pipeline], [runtime],
[server], [harness]. Any key may be omitted; defaults are the dataclass
defaults below. The `IOT_CONFIG` environment variable supplies the config
path when the CLI is not given one explicitly.
"""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields

from .errors import Invalid
from .runtime import DeploymentConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_ENV_VAR = "IOT_CONFIG"


@dataclass
class StoreConfig:
    path: str | None = None  # append-only mutation log; None = memory only


@dataclass
class AuthConfig:
    secret: str = "desk-scale-secret"
    ttl_seconds: int | None = None  # tokens never expire unless set
    bootstrap_username: str = "admin"
    bootstrap_password: str = "admin"
    bootstrap_name: str = "Administrator"


@dataclass
class PipelineConfig:
    batch_size: int = 500
    query_limit: int = 100
    drain_interval_ms: float = 100.0
    sync_read: bool = False  # drain synchronously before consume reads
    background_drain: bool = True
    dump_dir: str | None = None  # per-topic JSONL dumps when set


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080


@dataclass
class HarnessConfig:
    tick_ms: float = 100.0  # VU scheduler tick
    fixture_count: int = 50


@dataclass
class AppConfig:
    store: StoreConfig = field(default_factory=StoreConfig)
    auth: AuthConfig = field(default_factory=AuthConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    runtime: DeploymentConfig = field(default_factory=DeploymentConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)

    def echo(self) -> dict:
        """JSON-safe snapshot of the full configuration, for report embedding."""
        return asdict(self)


def _build_section(cls, raw: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise Invalid(f"unknown key(s) {sorted(unknown)} in [{section}]")
    return cls(**raw)


def load_config(path: str | None = None) -> AppConfig:
    """Load configuration from `path`, `$IOT_CONFIG`, or defaults.

    A path that is explicitly given (or set via the environment) must
    exist; with neither present, the built-in defaults are returned.
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return AppConfig()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise Invalid(f"config file {path!r} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise Invalid(f"config file {path!r} is not valid TOML: {exc}") from None
    sections = {
        "store": StoreConfig,
        "auth": AuthConfig,
        "pipeline": PipelineConfig,
        "runtime": DeploymentConfig,
        "server": ServerConfig,
        "harness": HarnessConfig,
    }
    unknown = set(raw) - set(sections)
    if unknown:
        raise Invalid(f"unknown config section(s) {sorted(unknown)}")
    kwargs = {}
    for name, cls in sections.items():
        kwargs[name] = _build_section(cls, raw.get(name, {}), name)
    return AppConfig(**kwargs)
