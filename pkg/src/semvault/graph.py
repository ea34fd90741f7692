"""Semantic dependency-graph model for machine images.

An image graph holds one base-image vertex plus package vertices, each
carrying an attribute quadruple. A directed edge (v, v') means v depends
on v'; cycles are allowed. Package vertices split into primary packages
(what the user asked for) and dependency packages (everything pulled in).

Two subgraph views drive the whole engine: the primary-package fragment
(primaries plus their forward closure, base excluded) and the base-image
fragment (base plus its closure, primaries cut out before the walk).
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

from .errors import NotFoundError, ValidationError

# Vertex id reserved for the base image in traversal root sets. Package
# names may not collide with it.
BASE_VERTEX = "@base"

# Architecture wildcard: package is portable across base architectures.
ARCH_ANY = "all"


@dataclass(frozen=True)
class BaseImageAttrs:
    """(type, distro, ver, arch) quadruple identifying a base-image flavor."""

    type: str
    distro: str
    ver: str
    arch: str

    def __post_init__(self) -> None:
        for name in ("type", "distro", "ver", "arch"):
            if not getattr(self, name):
                raise ValidationError(f"base image attribute {name!r} must be non-empty")

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.type, self.distro, self.ver, self.arch)


@dataclass(frozen=True)
class PackageAttrs:
    """(pkg, ver, arch, size) quadruple for one software package.

    ``size`` is the installed size in bytes; the payload blob backing the
    package may be smaller (packaged vs installed size).
    """

    pkg: str
    ver: str
    arch: str
    size: int

    def __post_init__(self) -> None:
        if not self.pkg:
            raise ValidationError("package name must be non-empty")
        if self.pkg == BASE_VERTEX:
            raise ValidationError(f"package name {BASE_VERTEX!r} is reserved")
        if self.size < 0:
            raise ValidationError(f"negative size for package {self.pkg!r}")

    @property
    def identity(self) -> tuple[str, str, str]:
        """Identity key (pkg, ver, arch); size and content are determined by it."""
        return (self.pkg, self.ver, self.arch)


def _check_vertices(
    packages: Mapping[str, PackageAttrs],
    edges: Iterable[tuple[str, str]],
    names: Iterable[str],
    what: str,
) -> None:
    for name in names:
        if name not in packages:
            raise ValidationError(f"{what} references unknown package {name!r}")
    for src, dst in edges:
        if src not in packages or dst not in packages:
            raise ValidationError(f"edge ({src!r}, {dst!r}) has an endpoint outside the graph")


@dataclass(frozen=True)
class SemanticGraph:
    """Full image graph: base vertex, package vertices, dependency edges.

    ``packages`` maps pkg name to attributes (names are unique per graph),
    ``edges`` are package-to-package dependencies, ``base_depends`` are the
    base vertex's out-edges. ``data_ref`` is the content hash of the
    image's user-data blob, when present. Instances are immutable values.
    """

    base: BaseImageAttrs
    packages: dict[str, PackageAttrs]
    primaries: frozenset[str]
    edges: frozenset[tuple[str, str]]
    base_depends: frozenset[str]
    data_ref: str | None = None

    def __post_init__(self) -> None:
        for name, attrs in self.packages.items():
            if attrs.pkg != name:
                raise ValidationError(f"package key {name!r} does not match attrs {attrs.pkg!r}")
        _check_vertices(self.packages, self.edges, self.primaries, "primary set")
        _check_vertices(self.packages, (), self.base_depends, "base dependency list")


@dataclass(frozen=True)
class GraphFragment:
    """Induced piece of a semantic graph.

    Base-image fragments carry ``base`` attributes plus the base vertex's
    surviving out-edges; primary-package fragments carry the primary roots
    in ``primaries`` and no base.
    """

    packages: dict[str, PackageAttrs]
    edges: frozenset[tuple[str, str]]
    primaries: frozenset[str] = frozenset()
    base: BaseImageAttrs | None = None
    base_depends: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        for name, attrs in self.packages.items():
            if attrs.pkg != name:
                raise ValidationError(f"package key {name!r} does not match attrs {attrs.pkg!r}")
        _check_vertices(self.packages, self.edges, self.primaries, "primary set")
        _check_vertices(self.packages, (), self.base_depends, "base dependency list")

    def total_size(self) -> int:
        return sum(p.size for p in self.packages.values())


def build_graph(
    base: BaseImageAttrs,
    packages: Iterable[PackageAttrs],
    primaries: Iterable[str],
    edges: Iterable[tuple[str, str]],
    base_depends: Iterable[str],
    data_ref: str | None = None,
) -> SemanticGraph:
    """Assemble a graph from loose parts, rejecting duplicate package names."""
    table: dict[str, PackageAttrs] = {}
    for attrs in packages:
        if attrs.pkg in table:
            raise ValidationError(f"duplicate package: {attrs.pkg}")
        table[attrs.pkg] = attrs
    return SemanticGraph(
        base=base,
        packages=table,
        primaries=frozenset(primaries),
        edges=frozenset(edges),
        base_depends=frozenset(base_depends),
        data_ref=data_ref,
    )


def _walk(adjacency: Mapping[str, list[str]], starts: Iterable[str]) -> set[str]:
    # Visited-set traversal: terminates on cycles.
    seen: set[str] = set()
    stack = list(starts)
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        stack.extend(adjacency.get(node, ()))
    return seen


def reachable_closure(g: SemanticGraph, roots: Iterable[str]) -> frozenset[str]:
    """Every vertex reachable from ``roots`` by following edges forward.

    Roots are included. ``BASE_VERTEX`` may appear as a root; its out-edges
    are the graph's ``base_depends``. Unknown roots raise "vertex not found".
    """
    root_list = list(roots)
    for r in root_list:
        if r != BASE_VERTEX and r not in g.packages:
            raise NotFoundError(f"vertex not found: {r}")
    adjacency: dict[str, list[str]] = {BASE_VERTEX: sorted(g.base_depends)}
    for src, dst in g.edges:
        adjacency.setdefault(src, []).append(dst)
    return frozenset(_walk(adjacency, root_list))


def primary_subgraph(g: SemanticGraph) -> GraphFragment:
    """Induced fragment on the primaries and everything reachable from them.

    Never contains the base vertex; its connected-component count is at
    most the number of primary packages.
    """
    kept = reachable_closure(g, g.primaries)
    return GraphFragment(
        packages={n: g.packages[n] for n in sorted(kept)},
        edges=frozenset(e for e in g.edges if e[0] in kept and e[1] in kept),
        primaries=g.primaries,
    )


def base_subgraph(g: SemanticGraph) -> GraphFragment:
    """Induced fragment on the base vertex and its dependency closure.

    Primary packages are removed before the walk, so content reachable
    only through a primary is not part of the base image.
    """
    adjacency: dict[str, list[str]] = {}
    for src, dst in g.edges:
        if src not in g.primaries and dst not in g.primaries:
            adjacency.setdefault(src, []).append(dst)
    starts = [d for d in g.base_depends if d not in g.primaries]
    kept = _walk(adjacency, starts)
    return GraphFragment(
        packages={n: g.packages[n] for n in sorted(kept)},
        edges=frozenset(e for e in g.edges if e[0] in kept and e[1] in kept),
        base=g.base,
        base_depends=frozenset(starts),
    )


def fragment_closure(frag: GraphFragment, roots: Iterable[str]) -> frozenset[str]:
    """Forward closure restricted to a fragment's own vertices and edges."""
    root_list = list(roots)
    for r in root_list:
        if r not in frag.packages:
            raise NotFoundError(f"vertex not found: {r}")
    adjacency: dict[str, list[str]] = {}
    for src, dst in frag.edges:
        adjacency.setdefault(src, []).append(dst)
    return frozenset(_walk(adjacency, root_list))


def induced_fragment(frag: GraphFragment, names: Iterable[str], primaries: Iterable[str] = ()) -> GraphFragment:
    kept = set(names)
    return GraphFragment(
        packages={n: frag.packages[n] for n in sorted(kept)},
        edges=frozenset(e for e in frag.edges if e[0] in kept and e[1] in kept),
        primaries=frozenset(primaries),
    )


def graph_union(f1: GraphFragment, f2: GraphFragment) -> GraphFragment:
    """Union of two fragments; vertices are identified by full quadruple.

    A pkg-name collision with differing (ver, arch, size) is rejected:
    one graph may not contain two packages with the same name, so picking
    a side silently would corrupt the result.
    """
    packages = dict(f1.packages)
    for name, attrs in f2.packages.items():
        ours = packages.get(name)
        if ours is not None and ours != attrs:
            raise ValidationError(
                f"package attribute conflict: {name} "
                f"({ours.ver}/{ours.arch}/{ours.size} vs {attrs.ver}/{attrs.arch}/{attrs.size})"
            )
        packages[name] = attrs
    base = f1.base or f2.base
    if f1.base is not None and f2.base is not None and f1.base != f2.base:
        raise ValidationError("base image attribute conflict in union")
    return GraphFragment(
        packages=packages,
        edges=f1.edges | f2.edges,
        primaries=f1.primaries | f2.primaries,
        base=base,
        base_depends=f1.base_depends | f2.base_depends,
    )


# --- serialization -------------------------------------------------------

def fragment_to_dict(frag: GraphFragment) -> dict:
    out: dict = {
        "packages": [
            {"pkg": p.pkg, "ver": p.ver, "arch": p.arch, "size": p.size}
            for _, p in sorted(frag.packages.items())
        ],
        "edges": sorted([a, b] for a, b in frag.edges),
        "primaries": sorted(frag.primaries),
        "base_depends": sorted(frag.base_depends),
    }
    if frag.base is not None:
        out["base"] = {
            "type": frag.base.type,
            "distro": frag.base.distro,
            "ver": frag.base.ver,
            "arch": frag.base.arch,
        }
    return out


def fragment_from_dict(doc: dict) -> GraphFragment:
    base = None
    if "base" in doc and doc["base"] is not None:
        b = doc["base"]
        base = BaseImageAttrs(b["type"], b["distro"], b["ver"], b["arch"])
    return GraphFragment(
        packages={p["pkg"]: PackageAttrs(p["pkg"], p["ver"], p["arch"], int(p["size"])) for p in doc["packages"]},
        edges=frozenset((a, b) for a, b in doc["edges"]),
        primaries=frozenset(doc.get("primaries", ())),
        base=base,
        base_depends=frozenset(doc.get("base_depends", ())),
    )


def fragment_digest(frag: GraphFragment) -> str:
    """Stable content hash of a fragment; used as part of base identity."""
    canon = json.dumps(fragment_to_dict(frag), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
