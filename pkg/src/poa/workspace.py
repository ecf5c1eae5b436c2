"""Workspace: where the CLI keeps its registry, archive, and defaults."""

import json
import os
from dataclasses import dataclass, field

from poa.errors import DomainError
from poa.generator import SurrogateBackend
from poa.registry import IdentityRegistry, KappaArchive
from poa.remote import RemoteBackend
from poa.seeding import MetaParams

ENV_VAR = "POA_WORKSPACE"
DEFAULT_DIR = "poa-workspace"
CONFIG_NAME = "config.json"


@dataclass
class WorkspaceConfig:
    root: str
    backend_kind: str = "surrogate"
    endpoint: str = ""
    p_r_log2: float = -50.0
    delta: float = 1e-4
    upscale: int = 4
    # Reserved for backends that issue generation calls concurrently;
    # sampling is sub-stream-partitioned so results never depend on it.
    parallelism: int = 1
    meta: MetaParams = field(default_factory=MetaParams)

    def __post_init__(self):
        if not 0.0 < 2.0 ** self.p_r_log2 < 1.0:
            raise DomainError("p_r must lie in (0, 1)")
        if self.parallelism < 1:
            raise DomainError("parallelism must be >= 1")

    @property
    def registry_path(self) -> str:
        return os.path.join(self.root, "registry.jsonl")

    @property
    def archive_path(self) -> str:
        return os.path.join(self.root, "archive.jsonl")

    @property
    def p_r(self) -> float:
        return 2.0 ** self.p_r_log2

    def registry(self) -> IdentityRegistry:
        return IdentityRegistry(self.registry_path)

    def archive(self) -> KappaArchive:
        return KappaArchive(self.archive_path)

    def backend(self):
        if self.backend_kind == "surrogate":
            return SurrogateBackend(default_m=self.meta, upscale=self.upscale)
        if self.backend_kind == "remote":
            if not self.endpoint:
                raise DomainError("remote backend requires an endpoint")
            return RemoteBackend(self.endpoint)
        raise DomainError(f"unknown backend kind {self.backend_kind!r}")


def load_workspace(path: str = None) -> WorkspaceConfig:
    root = path or os.environ.get(ENV_VAR) or DEFAULT_DIR
    os.makedirs(root, exist_ok=True)
    cfg_path = os.path.join(root, CONFIG_NAME)
    data = {}
    if os.path.exists(cfg_path):
        with open(cfg_path, encoding="utf-8") as fh:
            data = json.load(fh)
    meta = MetaParams.from_dict(data["m"]) if "m" in data else MetaParams()
    return WorkspaceConfig(
        root=root,
        backend_kind=data.get("backend", "surrogate"),
        endpoint=data.get("endpoint", ""),
        p_r_log2=float(data.get("p_r_log2", -50.0)),
        delta=float(data.get("delta", 1e-4)),
        upscale=int(data.get("upscale", 4)),
        parallelism=int(data.get("parallelism", 1)),
        meta=meta,
    )
