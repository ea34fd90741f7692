"""Per-flavor clustering index over stored images.

A master graph collects, for one (type, distro, ver, arch) base image,
the base fragment of the one stored base plus the primary-package
fragments of every compatible image merged so far. Comparing a new image
against the master replaces comparisons against every stored image.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IncompatibleError, NotFoundError, ValidationError
from .graph import (
    BaseImageAttrs,
    GraphFragment,
    SemanticGraph,
    fragment_closure,
    fragment_from_dict,
    fragment_to_dict,
    graph_union,
    induced_fragment,
)
from .similarity import compatibility, sim_graph


@dataclass(frozen=True)
class MasterGraph:
    """One base fragment plus primary-package fragments keyed by the
    contributing primary package's name. Immutable; merges return a new value."""

    key: BaseImageAttrs
    base_fragment: GraphFragment
    package_fragments: dict[str, GraphFragment]
    base_blob: str


def create_master(base_fragment: GraphFragment, base_blob: str) -> MasterGraph:
    if base_fragment.base is None:
        raise ValidationError("master graph requires a base-image fragment")
    return MasterGraph(
        key=base_fragment.base,
        base_fragment=base_fragment,
        package_fragments={},
        base_blob=base_blob,
    )


def merge_image(m: MasterGraph, base_frag: GraphFragment, pkg_frag: GraphFragment) -> MasterGraph:
    """Union an image's primary-package fragment into the master.

    The image's base attributes must match the master's key and the
    fragment must be semantically compatible with the master's own base
    fragment. The fragment is split per primary root so each primary
    package can later be extracted on its own.
    """
    if base_frag.base is None or base_frag.base != m.key:
        raise ValidationError("wrong master graph: base attributes do not match its key")
    if compatibility(m.base_fragment, pkg_frag) == 0:
        raise IncompatibleError("semantic conflict: fragment incompatible with master base")
    fragments = dict(m.package_fragments)
    for root in sorted(pkg_frag.primaries):
        closure = fragment_closure(pkg_frag, {root})
        piece = induced_fragment(pkg_frag, closure, primaries={root})
        existing = fragments.get(root)
        fragments[root] = graph_union(existing, piece) if existing is not None else piece
    return MasterGraph(key=m.key, base_fragment=m.base_fragment, package_fragments=fragments, base_blob=m.base_blob)


def extract_fragment(m: MasterGraph, primary_pkg: str) -> GraphFragment:
    """The stored fragment for one primary package."""
    try:
        return m.package_fragments[primary_pkg]
    except KeyError:
        raise NotFoundError(f"fragment not found: {primary_pkg}") from None


def flatten(m: MasterGraph) -> SemanticGraph:
    """Collapse base fragment and all package fragments into one graph."""
    merged = m.base_fragment
    for name in sorted(m.package_fragments):
        merged = graph_union(merged, m.package_fragments[name])
    return SemanticGraph(
        base=m.key,
        packages=dict(merged.packages),
        primaries=frozenset(m.package_fragments),
        edges=merged.edges,
        base_depends=merged.base_depends,
    )


def master_similarity(m: MasterGraph, g: SemanticGraph) -> float:
    """Graph similarity between the flattened master and an image graph."""
    return sim_graph(flatten(m), g)


# --- serialization -------------------------------------------------------

def master_to_dict(m: MasterGraph) -> dict:
    return {
        "key": {"type": m.key.type, "distro": m.key.distro, "ver": m.key.ver, "arch": m.key.arch},
        "base_blob": m.base_blob,
        "base_fragment": fragment_to_dict(m.base_fragment),
        "package_fragments": {
            name: fragment_to_dict(frag) for name, frag in sorted(m.package_fragments.items())
        },
    }


def master_from_dict(doc: dict) -> MasterGraph:
    key = doc["key"]
    return MasterGraph(
        key=BaseImageAttrs(key["type"], key["distro"], key["ver"], key["arch"]),
        base_fragment=fragment_from_dict(doc["base_fragment"]),
        package_fragments={
            name: fragment_from_dict(frag) for name, frag in doc["package_fragments"].items()
        },
        base_blob=doc["base_blob"],
    )
