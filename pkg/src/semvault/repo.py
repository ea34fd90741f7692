"""Content-addressed persistent store plus metadata index.

Layout: ``<repo>/blobs/<aa>/<sha256>`` payload files, ``<repo>/index.txt``
(one JSON document holding package records, base records, master graphs,
the user-data registry, and running byte counters), ``<repo>/lock`` for
advisory locking.

Single-writer, multi-reader: mutations run inside a transaction holding
an exclusive flock on the lock file; readers take a shared flock. Blob
writes are content-addressed and happen before the index is atomically
replaced, so a crash mid-publish leaves only orphan blobs, which ``fsck``
collects. The index never references a blob that is not on disk.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IntegrityError, NotFoundError, ValidationError
from .graph import (
    BaseImageAttrs,
    GraphFragment,
    PackageAttrs,
    fragment_digest,
    fragment_from_dict,
    fragment_to_dict,
)
from .master import MasterGraph, master_from_dict, master_to_dict

BLOBS_DIR = "blobs"
INDEX_NAME = "index.txt"
LOCK_NAME = "lock"
INDEX_VERSION = 1

PackageKey = tuple[str, str, str]
BaseKey = tuple[str, str, str, str, str]  # attrs quadruple + fragment digest


def blob_id(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class PackageRecord:
    attrs: PackageAttrs
    blob: str

    @property
    def key(self) -> PackageKey:
        return self.attrs.identity


@dataclass(frozen=True)
class BaseRecord:
    """A stored base image: attributes, payload blob, dependency closure.

    Two records may share the attribute quadruple while differing in their
    dependency closures; identity therefore includes the fragment digest.
    """

    attrs: BaseImageAttrs
    blob: str
    fragment: GraphFragment

    @property
    def key(self) -> BaseKey:
        return self.attrs.as_tuple() + (fragment_digest(self.fragment),)


@dataclass
class RepoIndex:
    packages: dict[PackageKey, PackageRecord] = field(default_factory=dict)
    bases: dict[BaseKey, BaseRecord] = field(default_factory=dict)
    masters: dict[BaseKey, MasterGraph] = field(default_factory=dict)
    data_blobs: dict[str, str] = field(default_factory=dict)
    stats: dict[str, int] = field(default_factory=dict)

    def copy(self) -> RepoIndex:
        return RepoIndex(
            packages=dict(self.packages),
            bases=dict(self.bases),
            masters=dict(self.masters),
            data_blobs=dict(self.data_blobs),
            stats=dict(self.stats),
        )

    def referenced_blobs(self) -> dict[str, set[str]]:
        """Blob id -> set of reference kinds ('package', 'base', 'data')."""
        refs: dict[str, set[str]] = {}
        for rec in self.packages.values():
            refs.setdefault(rec.blob, set()).add("package")
        for rec in self.bases.values():
            refs.setdefault(rec.blob, set()).add("base")
        for bid in self.data_blobs.values():
            refs.setdefault(bid, set()).add("data")
        return refs


def _index_to_dict(index: RepoIndex) -> dict:
    return {
        "format_version": INDEX_VERSION,
        "packages": [
            {"pkg": r.attrs.pkg, "ver": r.attrs.ver, "arch": r.attrs.arch, "size": r.attrs.size, "blob": r.blob}
            for _, r in sorted(index.packages.items())
        ],
        "bases": [
            {
                "attrs": {"type": r.attrs.type, "distro": r.attrs.distro, "ver": r.attrs.ver, "arch": r.attrs.arch},
                "blob": r.blob,
                "fragment": fragment_to_dict(r.fragment),
            }
            for _, r in sorted(index.bases.items())
        ],
        "masters": [master_to_dict(m) for _, m in sorted(index.masters.items())],
        "data_blobs": dict(sorted(index.data_blobs.items())),
        "stats": dict(sorted(index.stats.items())),
    }


def _index_from_dict(doc: dict) -> RepoIndex:
    if doc.get("format_version") != INDEX_VERSION:
        raise IntegrityError(f"unsupported index format_version: {doc.get('format_version')}")
    index = RepoIndex()
    for entry in doc["packages"]:
        rec = PackageRecord(
            attrs=PackageAttrs(entry["pkg"], entry["ver"], entry["arch"], int(entry["size"])),
            blob=entry["blob"],
        )
        index.packages[rec.key] = rec
    for entry in doc["bases"]:
        a = entry["attrs"]
        rec = BaseRecord(
            attrs=BaseImageAttrs(a["type"], a["distro"], a["ver"], a["arch"]),
            blob=entry["blob"],
            fragment=fragment_from_dict(entry["fragment"]),
        )
        index.bases[rec.key] = rec
    for entry in doc["masters"]:
        m = master_from_dict(entry)
        index.masters[m.key.as_tuple() + (fragment_digest(m.base_fragment),)] = m
    index.data_blobs = dict(doc.get("data_blobs", {}))
    index.stats = {k: int(v) for k, v in doc.get("stats", {}).items()}
    return index


@dataclass
class FsckReport:
    errors: list[str] = field(default_factory=list)
    orphans_removed: list[str] = field(default_factory=list)
    blobs_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors


class Repository:
    """Handle on one repository directory. Safe to share across threads;
    in-process mutations are serialized on top of the file lock."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._thread_lock = threading.RLock()

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def init(cls, root: str | Path) -> Repository:
        """Create an empty repository layout. Refuses non-empty directories."""
        root = Path(root)
        if (root / INDEX_NAME).exists():
            raise ValidationError(f"repository already initialized: {root}")
        if root.exists() and any(root.iterdir()):
            raise ValidationError(f"directory not empty: {root}")
        (root / BLOBS_DIR).mkdir(parents=True, exist_ok=True)
        (root / LOCK_NAME).touch()
        repo = cls(root)
        repo._replace_index(RepoIndex())
        return repo

    @classmethod
    def open(cls, root: str | Path) -> Repository:
        root = Path(root)
        if not (root / INDEX_NAME).is_file() or not (root / BLOBS_DIR).is_dir():
            raise ValidationError(f"not a repository: {root}")
        return cls(root)

    # -- locking -----------------------------------------------------------

    @contextmanager
    def _flock(self, exclusive: bool, timeout: float):
        mode = fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH
        fd = os.open(self.root / LOCK_NAME, os.O_CREAT | os.O_RDWR)
        deadline = time.monotonic() + timeout
        try:
            while True:
                try:
                    fcntl.flock(fd, mode | fcntl.LOCK_NB)
                    break
                except BlockingIOError:
                    if time.monotonic() >= deadline:
                        raise IntegrityError(f"lock timeout on {self.root}") from None
                    time.sleep(0.01)
            yield
        finally:
            try:
                fcntl.flock(fd, fcntl.LOCK_UN)
            finally:
                os.close(fd)

    @contextmanager
    def read_locked(self, timeout: float = 30.0):
        """Yield a consistent snapshot of the index under a shared lock."""
        with self._flock(exclusive=False, timeout=timeout):
            yield self.load_index()

    @contextmanager
    def transaction(self, timeout: float = 30.0):
        """Exclusive mutation scope; the staged index commits on clean exit."""
        with self._thread_lock:
            with self._flock(exclusive=True, timeout=timeout):
                txn = RepoTransaction(self, self.load_index())
                yield txn
                txn._commit()

    # -- index io ----------------------------------------------------------

    def load_index(self) -> RepoIndex:
        path = self.root / INDEX_NAME
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise IntegrityError(f"not a repository: {self.root}") from None
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"corrupt index: {exc}") from None
        return _index_from_dict(doc)

    def _replace_index(self, index: RepoIndex) -> None:
        # Atomic replace: write-new then rename. The crash window before
        # the rename leaves orphan blobs only.
        index.stats = self._compute_stats(index)
        payload = json.dumps(_index_to_dict(index), indent=1, sort_keys=True) + "\n"
        tmp = self.root / f"{INDEX_NAME}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, self.root / INDEX_NAME)

    # -- blob store --------------------------------------------------------

    def blob_path(self, bid: str) -> Path:
        return self.root / BLOBS_DIR / bid[:2] / bid

    def has_blob(self, bid: str) -> bool:
        return self.blob_path(bid).is_file()

    def read_blob(self, bid: str) -> bytes:
        try:
            return self.blob_path(bid).read_bytes()
        except FileNotFoundError:
            raise NotFoundError(f"not found: blob {bid}") from None

    def write_blob(self, data: bytes) -> str:
        bid = blob_id(data)
        path = self.blob_path(bid)
        if path.is_file():
            return bid
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.parent / f".tmp.{os.getpid()}.{threading.get_ident()}"
        tmp.write_bytes(data)
        os.replace(tmp, path)
        return bid

    def _delete_blob(self, bid: str) -> None:
        try:
            self.blob_path(bid).unlink()
        except FileNotFoundError:
            pass

    def _iter_blob_files(self):
        blobs = self.root / BLOBS_DIR
        for shard in sorted(p for p in blobs.iterdir() if p.is_dir()):
            for f in sorted(p for p in shard.iterdir() if p.is_file()):
                yield f

    # -- accounting --------------------------------------------------------

    def _compute_stats(self, index: RepoIndex) -> dict[str, int]:
        refs = index.referenced_blobs()
        stats = {
            "package_blob_bytes": 0,
            "base_blob_bytes": 0,
            "data_blob_bytes": 0,
            "live_blob_bytes": 0,
            "live_blob_count": 0,
        }
        for bid, kinds in refs.items():
            try:
                size = self.blob_path(bid).stat().st_size
            except FileNotFoundError:
                # Caught later by fsck; count as zero here.
                continue
            stats["live_blob_bytes"] += size
            stats["live_blob_count"] += 1
            for kind in kinds:
                stats[f"{kind}_blob_bytes"] += size
        return stats

    def repo_size(self) -> int:
        """Total bytes of all live (referenced) blobs plus the index file."""
        with self.read_locked() as index:
            total = (self.root / INDEX_NAME).stat().st_size
            for bid in index.referenced_blobs():
                try:
                    total += self.blob_path(bid).stat().st_size
                except FileNotFoundError:
                    raise IntegrityError(f"missing blob: {bid}") from None
            return total

    # -- convenience single-operation API -----------------------------------

    def store_package(self, attrs: PackageAttrs, data: bytes) -> PackageRecord:
        with self.transaction() as txn:
            record, _ = txn.store_package(attrs, data)
        return record

    def exists_package(self, attrs: PackageAttrs) -> bool:
        with self.read_locked() as index:
            return attrs.identity in index.packages

    def get_package(self, key: PackageKey) -> PackageRecord:
        with self.read_locked() as index:
            try:
                return index.packages[key]
            except KeyError:
                raise NotFoundError(f"not found: package {key}") from None

    def store_base(self, attrs: BaseImageAttrs, fragment: GraphFragment, data: bytes) -> BaseRecord:
        with self.transaction() as txn:
            record, _ = txn.store_base(attrs, fragment, data)
        return record

    def get_base(self, key: BaseKey) -> BaseRecord:
        with self.read_locked() as index:
            try:
                return index.bases[key]
            except KeyError:
                raise NotFoundError(f"not found: base {key}") from None

    def remove_base(self, record: BaseRecord) -> None:
        with self.transaction() as txn:
            txn.remove_base(record)

    def store_data(self, label: str, data: bytes) -> str:
        with self.transaction() as txn:
            return txn.store_data(label, data)

    def get_data(self, label: str) -> str:
        with self.read_locked() as index:
            try:
                return index.data_blobs[label]
            except KeyError:
                raise NotFoundError(f"unknown data label: {label}") from None

    def list_bases(self) -> list[BaseRecord]:
        with self.read_locked() as index:
            return [index.bases[k] for k in sorted(index.bases)]

    def put_master(self, master: MasterGraph) -> None:
        with self.transaction() as txn:
            txn.put_master(master)

    def get_master(self, quadruple: BaseImageAttrs) -> MasterGraph:
        """The master graph for a quadruple; requires it to be unambiguous."""
        with self.read_locked() as index:
            found = [m for m in index.masters.values() if m.key == quadruple]
        if not found:
            raise NotFoundError(f"not found: master graph {quadruple.as_tuple()}")
        if len(found) > 1:
            raise IntegrityError(f"ambiguous master graph for {quadruple.as_tuple()}")
        return found[0]

    def master_for_base(self, record: BaseRecord) -> MasterGraph:
        with self.read_locked() as index:
            try:
                return index.masters[record.key]
            except KeyError:
                raise NotFoundError(f"not found: master graph for base {record.key}") from None

    # -- fsck ----------------------------------------------------------------

    def fsck(self, repair: bool = True) -> FsckReport:
        """Verify referential integrity; collect orphan blobs; check counters.

        An orphan blob (on disk, unreferenced) is garbage from an interrupted
        mutation and is deleted when ``repair`` is set. An index entry whose
        blob is missing, a blob whose content does not match its name, or a
        counter mismatch is an error: those states cannot be produced by the
        documented write ordering.
        """
        report = FsckReport()
        with self._thread_lock, self._flock(exclusive=True, timeout=30.0):
            index = self.load_index()
            refs = index.referenced_blobs()
            on_disk: dict[str, Path] = {}
            for f in self._iter_blob_files():
                on_disk[f.name] = f
                report.blobs_checked += 1
                if blob_id(f.read_bytes()) != f.name:
                    report.errors.append(f"blob content does not match name: {f.name}")
            for bid in sorted(refs):
                if bid not in on_disk:
                    report.errors.append(f"missing blob: {bid}")
            for bid in sorted(set(on_disk) - set(refs)):
                if repair:
                    self._delete_blob(bid)
                report.orphans_removed.append(bid)
            recomputed = self._compute_stats(index)
            if index.stats != recomputed:
                report.errors.append(f"stats counters stale: {index.stats} != {recomputed}")
            for key, master in sorted(index.masters.items()):
                if key not in index.bases:
                    report.errors.append(f"master graph without base record: {key}")
                elif index.bases[key].blob != master.base_blob:
                    report.errors.append(f"master graph references wrong base blob: {key}")
                for name, frag in sorted(master.package_fragments.items()):
                    for attrs in frag.packages.values():
                        if attrs.identity not in index.packages:
                            report.errors.append(f"fragment vertex without package record: {attrs.identity}")
            for rec in index.bases.values():
                for attrs in rec.fragment.packages.values():
                    if attrs.identity not in index.packages:
                        report.errors.append(f"base fragment vertex without package record: {attrs.identity}")
        return report


class RepoTransaction:
    """Staged mutation of the index; commits via atomic replace.

    Blob writes happen immediately (content-addressed writes are harmless
    if the transaction aborts); record changes land only on commit. Blobs
    left unreferenced by removals are deleted after the new index is
    durable.
    """

    def __init__(self, repo: Repository, index: RepoIndex):
        self.repo = repo
        self.index = index
        self._pending_gc: set[str] = set()

    # -- packages ------------------------------------------------------------

    def store_package(self, attrs: PackageAttrs, data: bytes) -> tuple[PackageRecord, bool]:
        """Idempotent per (pkg, ver, arch); returns (record, stored_new)."""
        existing = self.index.packages.get(attrs.identity)
        bid = blob_id(data)
        if existing is not None:
            if existing.blob != bid or existing.attrs.size != attrs.size:
                raise ValidationError(f"package content conflict: {attrs.identity}")
            return existing, False
        self.repo.write_blob(data)
        record = PackageRecord(attrs=attrs, blob=bid)
        self.index.packages[record.key] = record
        return record, True

    def exists_package(self, attrs: PackageAttrs) -> bool:
        return attrs.identity in self.index.packages

    def get_package(self, key: PackageKey) -> PackageRecord:
        try:
            return self.index.packages[key]
        except KeyError:
            raise NotFoundError(f"not found: package {key}") from None

    # -- bases ----------------------------------------------------------------

    def store_base(self, attrs: BaseImageAttrs, fragment: GraphFragment, data: bytes) -> tuple[BaseRecord, bool]:
        record = BaseRecord(attrs=attrs, blob=blob_id(data), fragment=fragment)
        existing = self.index.bases.get(record.key)
        if existing is not None:
            if existing.blob != record.blob:
                raise ValidationError(f"base content conflict: {record.key}")
            return existing, False
        self.repo.write_blob(data)
        self.index.bases[record.key] = record
        return record, True

    def remove_base(self, record: BaseRecord) -> None:
        """Drop a base record; its blob is collected if nothing else uses it.

        Refused while the base still owns a master graph: replacing a base
        must commit the replacement master in the same transaction.
        """
        key = record.key
        if key not in self.index.bases:
            raise NotFoundError(f"not found: base {key}")
        if key in self.index.masters:
            raise IntegrityError(f"base still referenced by master graph: {key}")
        removed = self.index.bases.pop(key)
        self._pending_gc.add(removed.blob)

    def bases_with_attrs(self, attrs: BaseImageAttrs) -> list[BaseRecord]:
        return [self.index.bases[k] for k in sorted(self.index.bases) if self.index.bases[k].attrs == attrs]

    # -- masters ----------------------------------------------------------------

    def put_master(self, master: MasterGraph) -> None:
        key = master.key.as_tuple() + (fragment_digest(master.base_fragment),)
        self.index.masters[key] = master

    def delete_master(self, record: BaseRecord) -> None:
        self.index.masters.pop(record.key, None)

    def master_for_base(self, record: BaseRecord) -> MasterGraph | None:
        return self.index.masters.get(record.key)

    def masters_with_key(self, quadruple: BaseImageAttrs) -> list[MasterGraph]:
        return [self.index.masters[k] for k in sorted(self.index.masters) if self.index.masters[k].key == quadruple]

    # -- data ----------------------------------------------------------------

    def store_data(self, label: str, data: bytes) -> str:
        bid = self.repo.write_blob(data)
        previous = self.index.data_blobs.get(label)
        if previous is not None and previous != bid:
            self._pending_gc.add(previous)
        self.index.data_blobs[label] = bid
        return bid

    # -- commit ----------------------------------------------------------------

    def _commit(self) -> None:
        self.repo._replace_index(self.index)
        still_referenced = self.index.referenced_blobs()
        for bid in self._pending_gc:
            if bid not in still_referenced:
                self.repo._delete_blob(bid)
