"""Identity registry and parameter archive: append-only JSONL files.

One record per line; writers take an advisory lock so concurrent CLI
invocations cannot interleave partial lines. ``path=None`` keeps either
store purely in memory (used heavily by tests and the lab).
"""

import fcntl
import json
import os
from datetime import datetime, timezone
from typing import Optional

from poa.errors import DuplicateIdentity, UnknownIdentity
from poa.seeding import Identity, Kappa, fresh_entropy


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _append_record(path, record: dict) -> None:
    line = json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"
    with open(path, "a", encoding="utf-8") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        fh.write(line)
        fh.flush()
        fcntl.flock(fh, fcntl.LOCK_UN)


def _iter_records(path):
    if path is None or not os.path.exists(path):
        return
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


class IdentityRegistry:
    """Published author identifiers, unique by their 32 key bytes."""

    def __init__(self, path: Optional[str] = None):
        self.path = os.fspath(path) if path is not None else None
        self._by_hex = {}
        for rec in _iter_records(self.path):
            ident = Identity(
                id_bytes=bytes.fromhex(rec["id_hex"]),
                label=rec["label"],
                registered_at=rec["registered_at"],
            )
            self._by_hex[rec["id_hex"]] = ident

    def register(self, label: str, entropy: Optional[bytes] = None) -> Identity:
        id_bytes = entropy if entropy is not None else fresh_entropy()
        ident = Identity(id_bytes=id_bytes, label=label, registered_at=_utcnow())
        if ident.id_hex in self._by_hex:
            raise DuplicateIdentity(f"identity {ident.id_hex[:16]}... already registered")
        self._by_hex[ident.id_hex] = ident
        if self.path is not None:
            _append_record(
                self.path,
                {"id_hex": ident.id_hex, "label": ident.label, "registered_at": ident.registered_at},
            )
        return ident

    def get(self, id_hex: str) -> Identity:
        try:
            return self._by_hex[id_hex]
        except KeyError:
            raise UnknownIdentity(f"identity {id_hex[:16]}... not registered") from None

    def __len__(self) -> int:
        return len(self._by_hex)

    def __contains__(self, id_hex: str) -> bool:
        return id_hex in self._by_hex


class KappaArchive:
    """Archive of published generation parameters, looked up by free bits."""

    def __init__(self, path: Optional[str] = None):
        self.path = os.fspath(path) if path is not None else None
        self._records = []
        for rec in _iter_records(self.path):
            self._records.append(rec)

    def append(self, identity: Identity, kappa: Kappa) -> dict:
        rec = {
            "identity_id_hex": identity.id_hex,
            "m": kappa.m.to_dict(),
            "e_digest_hex": kappa.e_digest.hex(),
            "e_ref": kappa.e_ref,
            "r_hex": kappa.r.hex(),
            "created_at": _utcnow(),
        }
        self._records.append(rec)
        if self.path is not None:
            _append_record(self.path, rec)
        return rec

    def find(self, identity_id_hex: str, r_hex: str) -> Kappa:
        for rec in self._records:
            if rec["identity_id_hex"] == identity_id_hex and rec["r_hex"] == r_hex:
                return Kappa.from_dict(
                    {
                        "m": rec["m"],
                        "e_digest_hex": rec["e_digest_hex"],
                        "e_ref": rec.get("e_ref"),
                        "r_hex": rec["r_hex"],
                    }
                )
        raise KeyError(f"no archived parameters with r={r_hex[:12]}... for that identity")

    def __len__(self) -> int:
        return len(self._records)


def register_identity(label: str, entropy: Optional[bytes] = None,
                      registry: Optional[IdentityRegistry] = None) -> Identity:
    """Register an author; uses a throwaway in-memory registry when none given."""
    reg = registry if registry is not None else IdentityRegistry()
    return reg.register(label, entropy)
