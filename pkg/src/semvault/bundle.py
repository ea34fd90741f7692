"""On-disk image-bundle format: manifest plus payload blobs.

A bundle is a directory (or tar archive) holding ``manifest.txt``, a JSON
document describing the base image, the packages with their dependency
edges, and an optional user-data blob, plus one payload file per declared
component under ``payloads/``. This is the unit users publish and
retrieve; parsing validates hashes and graph well-formedness.
"""

from __future__ import annotations

import hashlib
import json
import re
import tarfile
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

from .errors import ValidationError
from .graph import (
    BASE_VERTEX,
    BaseImageAttrs,
    PackageAttrs,
    SemanticGraph,
    build_graph,
    reachable_closure,
)

MANIFEST_NAME = "manifest.txt"
PAYLOAD_DIR = "payloads"
FORMAT_VERSION = 1

# Payload-map key for the user-data blob (package payloads use pkg names,
# the base payload uses BASE_VERTEX).
DATA_KEY = "@data"


@dataclass
class ImageBundle:
    """A loaded (or just-written) bundle: graph plus payload bytes.

    ``payloads`` maps pkg name / BASE_VERTEX / DATA_KEY to blob bytes.
    ``label`` names the image for the repository's user-data registry and
    defaults to the bundle directory's basename.
    """

    graph: SemanticGraph
    payloads: dict[str, bytes]
    path: Path | None = None
    label: str = ""


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _payload_ref(path: str, data: bytes) -> dict:
    return {"path": path, "sha256": _sha256(data), "bytes": len(data)}


class _DirSource:
    def __init__(self, root: Path):
        self.root = root

    def read(self, rel: str) -> bytes:
        try:
            return (self.root / rel).read_bytes()
        except FileNotFoundError:
            raise ValidationError(f"payload not found: {rel}") from None


class _TarSource:
    def __init__(self, path: Path):
        self._members: dict[str, bytes] = {}
        with tarfile.open(path, "r:*") as tar:
            for member in tar.getmembers():
                if member.isfile():
                    handle = tar.extractfile(member)
                    if handle is not None:
                        self._members[PurePosixPath(member.name).as_posix().lstrip("./")] = handle.read()

    def read(self, rel: str) -> bytes:
        try:
            return self._members[rel]
        except KeyError:
            raise ValidationError(f"payload not found: {rel}") from None


def _safe_rel(path: str) -> str:
    p = PurePosixPath(path)
    if p.is_absolute() or ".." in p.parts:
        raise ValidationError(f"manifest parse error: unsafe payload path {path!r}")
    return p.as_posix()


def _load_payload(source, ref: dict) -> bytes:
    rel = _safe_rel(ref["path"])
    data = source.read(rel)
    if len(data) != int(ref["bytes"]):
        raise ValidationError(f"payload size mismatch: {rel}")
    if _sha256(data) != ref["sha256"]:
        raise ValidationError(f"hash mismatch: {rel}")
    return data


def load_bundle(path: str | Path) -> ImageBundle:
    """Parse and validate a bundle directory or tar archive.

    Rejects hash mismatches, duplicate package names, dangling dependency
    references, missing primaries, and vertices unreachable from both the
    base and the primary set.
    """
    path = Path(path)
    if path.is_dir():
        source = _DirSource(path)
    elif path.is_file():
        try:
            source = _TarSource(path)
        except tarfile.TarError as exc:
            raise ValidationError(f"manifest parse error: not a bundle archive ({exc})") from None
    else:
        raise ValidationError(f"manifest parse error: no such bundle {path}")

    try:
        doc = json.loads(source.read(MANIFEST_NAME).decode("utf-8"))
    except ValidationError:
        raise ValidationError(f"manifest parse error: {MANIFEST_NAME} missing in {path}") from None
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"manifest parse error: {exc}") from None

    try:
        if int(doc["format_version"]) != FORMAT_VERSION:
            raise ValidationError(f"manifest parse error: unsupported format_version {doc['format_version']}")
        base_doc = doc["base"]
        base = BaseImageAttrs(base_doc["type"], base_doc["distro"], base_doc["ver"], base_doc["arch"])
        package_docs = doc["packages"]
        base_depends = list(doc.get("base_depends", []))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"manifest parse error: {exc}") from None

    names: set[str] = set()
    packages: list[PackageAttrs] = []
    primaries: set[str] = set()
    edges: set[tuple[str, str]] = set()
    for entry in package_docs:
        attrs = PackageAttrs(entry["pkg"], entry["ver"], entry["arch"], int(entry["size"]))
        if attrs.pkg in names:
            raise ValidationError(f"duplicate package: {attrs.pkg}")
        names.add(attrs.pkg)
        packages.append(attrs)
        if entry.get("primary", False):
            primaries.add(attrs.pkg)
    for entry in package_docs:
        for dep in entry.get("depends", []):
            if dep not in names:
                raise ValidationError(f"dangling dependency: {dep}")
            edges.add((entry["pkg"], dep))
    for dep in base_depends:
        if dep not in names:
            raise ValidationError(f"dangling dependency: {dep}")
    if not primaries:
        raise ValidationError("no primary package")

    payloads: dict[str, bytes] = {}
    payloads[BASE_VERTEX] = _load_payload(source, base_doc["payload"])
    for entry in package_docs:
        payloads[entry["pkg"]] = _load_payload(source, entry["payload"])
    data_ref = None
    if doc.get("data") is not None:
        data = _load_payload(source, doc["data"])
        payloads[DATA_KEY] = data
        data_ref = _sha256(data)

    graph = build_graph(base, packages, primaries, edges, base_depends, data_ref)
    reachable = reachable_closure(graph, set(graph.primaries) | {BASE_VERTEX})
    for name in sorted(names - reachable):
        raise ValidationError(f"unreachable vertex: {name}")

    return ImageBundle(graph=graph, payloads=payloads, path=path, label=path.name)


_UNSAFE = re.compile(r"[^A-Za-z0-9._+-]")


def _payload_filename(kind: str, name: str, used: set[str]) -> str:
    stem = _UNSAFE.sub("_", name) or "blob"
    candidate = f"{PAYLOAD_DIR}/{kind}-{stem}.bin"
    i = 1
    while candidate in used:
        candidate = f"{PAYLOAD_DIR}/{kind}-{stem}.{i}.bin"
        i += 1
    used.add(candidate)
    return candidate


def write_bundle(
    graph: SemanticGraph,
    payloads: dict[str, bytes],
    out_path: str | Path,
    label: str | None = None,
) -> ImageBundle:
    """Write a bundle directory; ``load_bundle`` reproduces the inputs.

    Every vertex needs a payload, as do the base and (when ``data_ref`` is
    set) the user data. The target directory must be empty or absent.
    """
    out = Path(out_path)
    if out.exists() and any(out.iterdir()):
        raise ValidationError(f"bundle target not empty: {out}")
    if BASE_VERTEX not in payloads:
        raise ValidationError(f"payload not found: {BASE_VERTEX}")
    for name in sorted(graph.packages):
        if name not in payloads:
            raise ValidationError(f"payload not found: {name}")

    used: set[str] = set()
    (out / PAYLOAD_DIR).mkdir(parents=True, exist_ok=True)

    def emit(kind: str, name: str, data: bytes) -> dict:
        rel = _payload_filename(kind, name, used)
        (out / rel).write_bytes(data)
        return _payload_ref(rel, data)

    depends: dict[str, list[str]] = {name: [] for name in graph.packages}
    for src, dst in sorted(graph.edges):
        depends[src].append(dst)

    manifest = {
        "format_version": FORMAT_VERSION,
        "base": {
            "type": graph.base.type,
            "distro": graph.base.distro,
            "ver": graph.base.ver,
            "arch": graph.base.arch,
            "payload": emit("base", "image", payloads[BASE_VERTEX]),
        },
        "packages": [
            {
                "pkg": attrs.pkg,
                "ver": attrs.ver,
                "arch": attrs.arch,
                "size": attrs.size,
                "primary": name in graph.primaries,
                "depends": depends[name],
                "payload": emit("pkg", name, payloads[name]),
            }
            for name, attrs in sorted(graph.packages.items())
        ],
        "base_depends": sorted(graph.base_depends),
        "data": None,
    }

    data_ref = None
    if graph.data_ref is not None:
        if DATA_KEY not in payloads:
            raise ValidationError(f"payload not found: {DATA_KEY}")
        manifest["data"] = emit("data", "user", payloads[DATA_KEY])
        data_ref = manifest["data"]["sha256"]

    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    normalized = SemanticGraph(
        base=graph.base,
        packages=dict(graph.packages),
        primaries=graph.primaries,
        edges=graph.edges,
        base_depends=graph.base_depends,
        data_ref=data_ref,
    )
    kept = {k: v for k, v in payloads.items() if k == BASE_VERTEX or k in graph.packages or (k == DATA_KEY and data_ref)}
    return ImageBundle(graph=normalized, payloads=kept, path=out, label=label or out.name)


def bundle_disk_size(path: Path) -> int:
    """Bytes of the manifest plus all payload files of an on-disk bundle."""
    total = (path / MANIFEST_NAME).stat().st_size
    payload_dir = path / PAYLOAD_DIR
    if payload_dir.is_dir():
        total += sum(f.stat().st_size for f in payload_dir.iterdir() if f.is_file())
    return total
