"""Similarity and compatibility metrics over semantic graphs.

Base-image and package similarity are binary; the graph similarity is a
size-weighted intersection-over-union in [0, 1], gated on base equality.
Compatibility decides whether a package fragment can be installed on top
of a given base fragment.
"""

from __future__ import annotations

from .errors import ValidationError
from .graph import ARCH_ANY, BaseImageAttrs, GraphFragment, PackageAttrs, SemanticGraph


def sim_base(b1: BaseImageAttrs, b2: BaseImageAttrs) -> int:
    """1 iff all four base attributes match, else 0."""
    return 1 if b1 == b2 else 0


def sim_package(p1: PackageAttrs, p2: PackageAttrs) -> int:
    """1 iff name and version match and architectures are interchangeable.

    An architecture of "all" matches any architecture (portable package).
    Size does not participate.
    """
    if p1.pkg != p2.pkg or p1.ver != p2.ver:
        return 0
    if p1.arch == p2.arch or p1.arch == ARCH_ANY or p2.arch == ARCH_ANY:
        return 1
    return 0


def sim_size(p1: PackageAttrs, p2: PackageAttrs, max_size_all: int) -> float:
    """Pair weight: max of the two sizes over the global maximum size."""
    if max_size_all <= 0:
        raise ValidationError("degenerate size normalization: max package size is 0")
    return max(p1.size, p2.size) / max_size_all


def sim_graph(g1: SemanticGraph, g2: SemanticGraph) -> float:
    """Size-weighted Jaccard-style similarity of two image graphs.

    0 when the bases differ. Otherwise packages are matched by name, a
    matched pair contributes its max-size weight once, and every unmatched
    package (including both sides of a name collision whose attributes
    disagree) contributes its own normalized size to the union.
    """
    if sim_base(g1.base, g2.base) == 0:
        return 0.0
    sizes = [p.size for p in g1.packages.values()] + [p.size for p in g2.packages.values()]
    max_all = max(sizes, default=0)
    if max_all <= 0:
        raise ValidationError("degenerate size normalization: max package size is 0")
    matched = 0.0
    unmatched = 0.0
    # sorted iteration keeps float accumulation order-independent of the
    # argument order, so the score is exactly symmetric
    for name in sorted(set(g1.packages) | set(g2.packages)):
        p1 = g1.packages.get(name)
        p2 = g2.packages.get(name)
        if p1 is not None and p2 is not None and sim_package(p1, p2) == 1:
            matched += max(p1.size, p2.size) / max_all
        else:
            if p1 is not None:
                unmatched += p1.size / max_all
            if p2 is not None:
                unmatched += p2.size / max_all
    return matched / (matched + unmatched)


def compatibility(base_frag: GraphFragment, pkg_frag: GraphFragment) -> int:
    """1 iff every pkg name shared between the fragments agrees on (ver, arch).

    No shared names means compatible (empty product). The base vertex has
    no pkg name and never pairs.
    """
    for name in base_frag.packages.keys() & pkg_frag.packages.keys():
        if sim_package(base_frag.packages[name], pkg_frag.packages[name]) == 0:
            return 0
    return 1
