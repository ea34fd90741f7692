"""Publish, base-image selection, and retrieval pipelines.

Publishing decomposes an image bundle into non-redundant parts: primary
packages and their dependency closures become content-addressed package
blobs, user data becomes a data blob, and the remaining base image either
reuses a semantically compatible stored base or is stored fresh. The
base-selection step can also decide that the incoming base supersedes
stored ones, folding their package fragments into the incoming master
graph and dropping the obsolete base blobs.

Retrieval reassembles an image (possibly one never published as-is) from
a stored base and stored package fragments, provided they are compatible.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from pathlib import Path

from .bundle import BASE_VERTEX, DATA_KEY, ImageBundle, load_bundle, write_bundle
from .errors import IncompatibleError, IntegrityError, NotFoundError, ValidationError
from .graph import (
    BaseImageAttrs,
    GraphFragment,
    SemanticGraph,
    base_subgraph,
    fragment_digest,
    graph_union,
    primary_subgraph,
)
from .master import MasterGraph, create_master, master_similarity, merge_image
from .repo import BaseKey, BaseRecord, RepoIndex, Repository, RepoTransaction
from .similarity import compatibility

STORED_NEW = "stored_new"
REUSED_EXISTING = "reused_existing"


@dataclass
class PublishReport:
    """Outcome of one publish: what was stored, skipped, and replaced."""

    packages_stored: int
    packages_stored_bytes: int
    packages_skipped: int
    base_action: str
    bases_replaced: list[BaseKey]
    master_similarity: float
    durations_ms: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "packages_stored": self.packages_stored,
            "packages_stored_bytes": self.packages_stored_bytes,
            "packages_skipped": self.packages_skipped,
            "base_action": self.base_action,
            "bases_replaced": [list(key) for key in self.bases_replaced],
            "master_similarity": self.master_similarity,
            "durations_ms": self.durations_ms,
        }


@dataclass(frozen=True)
class RetrievalRequest:
    """An image to assemble: base attributes, primary identities, optional data.

    ``data`` is either a label from the repository's user-data registry or
    a raw blob id.
    """

    base: BaseImageAttrs
    primaries: tuple[tuple[str, str, str], ...]
    data: str | None = None

    def __post_init__(self) -> None:
        if not self.primaries:
            raise ValidationError("retrieval request needs at least one primary package")


# --- base selection ---------------------------------------------------------


@dataclass(frozen=True)
class BaseCandidate:
    """One row of the selection table: a base (stored or the incoming one)
    with its fragment and the package fragments riding on it."""

    identity: tuple
    fragment: GraphFragment
    pkg_fragments: tuple[GraphFragment, ...]
    record: BaseRecord | None = None  # None marks the incoming base

    @property
    def stored(self) -> bool:
        return self.record is not None


@dataclass(frozen=True)
class BaseSelection:
    chose_incoming: bool
    record: BaseRecord | None
    replace_stored: tuple[BaseRecord, ...]
    replace_includes_incoming: bool


def rank_base_candidates(incoming: BaseCandidate, stored: list[BaseCandidate]) -> BaseSelection:
    """Pick the base to keep and the bases it replaces.

    A candidate can replace another base only when every package fragment
    riding on that base is compatible with the candidate's own fragment.
    Candidates that replace nothing are dropped. The rest sort by
    (more replaced bases, smaller fragment size, already stored, identity)
    and the first one that is the incoming base or replaces it wins;
    with no winner the incoming base is kept as-is.
    """
    candidates = [incoming, *stored]
    table: list[tuple[BaseCandidate, list[BaseCandidate]]] = []
    for cand in candidates:
        replaceable = [
            other
            for other in candidates
            if other is not cand
            and all(compatibility(cand.fragment, frag) == 1 for frag in other.pkg_fragments)
        ]
        if replaceable:
            table.append((cand, replaceable))

    table.sort(
        key=lambda entry: (
            -len(entry[1]),
            entry[0].fragment.total_size(),
            0 if entry[0].stored else 1,
            entry[0].identity,
        )
    )

    for cand, replaceable in table:
        if cand is incoming or any(other is incoming for other in replaceable):
            return BaseSelection(
                chose_incoming=cand is incoming,
                record=cand.record,
                replace_stored=tuple(o.record for o in replaceable if o.record is not None),
                replace_includes_incoming=any(o is incoming for o in replaceable),
            )
    return BaseSelection(chose_incoming=True, record=None, replace_stored=(), replace_includes_incoming=False)


def _gather_candidates(
    txn: RepoTransaction,
    base_attrs: BaseImageAttrs,
    base_frag: GraphFragment,
    pkg_frag: GraphFragment,
) -> tuple[BaseCandidate, list[BaseCandidate]]:
    incoming = BaseCandidate(
        identity=base_attrs.as_tuple() + (fragment_digest(base_frag),),
        fragment=base_frag,
        pkg_fragments=(pkg_frag,),
    )
    stored: list[BaseCandidate] = []
    for record in txn.bases_with_attrs(base_attrs):
        master = txn.master_for_base(record)
        if master is None or not master.package_fragments:
            continue
        fragments = tuple(master.package_fragments[name] for name in sorted(master.package_fragments))
        stored.append(
            BaseCandidate(identity=record.key, fragment=record.fragment, pkg_fragments=fragments, record=record)
        )
    return incoming, stored


def select_base(
    txn: RepoTransaction,
    base_attrs: BaseImageAttrs,
    base_frag: GraphFragment,
    pkg_frag: GraphFragment,
) -> BaseSelection:
    """Base-image selection over the repository's stored bases."""
    incoming, stored = _gather_candidates(txn, base_attrs, base_frag, pkg_frag)
    return rank_base_candidates(incoming, stored)


# --- publish -----------------------------------------------------------------


def publish(repo: Repository, bundle: ImageBundle | str | Path, label: str | None = None) -> PublishReport:
    """Publish one bundle; stores only components the repository lacks.

    Atomic: blob writes are content-addressed and the metadata index is
    replaced in one step, so a failure part-way leaves the repository
    state unchanged (orphan blobs aside, which fsck collects).
    """
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    if not isinstance(bundle, ImageBundle):
        bundle = load_bundle(bundle)
    graph = bundle.graph
    pkg_frag = primary_subgraph(graph)
    base_frag = base_subgraph(graph)
    timings["graph_build"] = (time.perf_counter() - t0) * 1000.0

    label = label or bundle.label
    with repo.transaction() as txn:
        t1 = time.perf_counter()
        sims = [master_similarity(m, graph) for m in txn.masters_with_key(graph.base)]
        similarity_to_master = max(sims, default=0.0)
        timings["similarity"] = (time.perf_counter() - t1) * 1000.0

        t2 = time.perf_counter()
        stored_count = 0
        stored_bytes = 0
        skipped = 0
        for name in sorted(pkg_frag.packages):
            _, new = txn.store_package(pkg_frag.packages[name], bundle.payloads[name])
            if new:
                stored_count += 1
                stored_bytes += len(bundle.payloads[name])
            else:
                skipped += 1
        if DATA_KEY in bundle.payloads:
            txn.store_data(label, bundle.payloads[DATA_KEY])
        timings["export"] = (time.perf_counter() - t2) * 1000.0

        t3 = time.perf_counter()
        selection = select_base(txn, graph.base, base_frag, pkg_frag)
        if selection.chose_incoming:
            base_record, _ = txn.store_base(graph.base, base_frag, bundle.payloads[BASE_VERTEX])
            # The base image carries its dependency packages with it: their
            # payloads are stored as ordinary package blobs so retrieval can
            # reassemble a complete bundle.
            for name in sorted(base_frag.packages):
                txn.store_package(base_frag.packages[name], bundle.payloads[name])
            master = create_master(base_frag, base_record.blob)
            base_action = STORED_NEW
        else:
            base_record = selection.record
            existing = txn.master_for_base(base_record)
            if existing is None:
                raise IntegrityError(f"not found: master graph for base {base_record.key}")
            master = existing
            base_action = REUSED_EXISTING

        master = merge_image(master, base_frag, pkg_frag)

        replaced_keys: list[BaseKey] = []
        for old in selection.replace_stored:
            old_master = txn.master_for_base(old)
            if old_master is not None:
                for name in sorted(old_master.package_fragments):
                    master = merge_image(master, master.base_fragment, old_master.package_fragments[name])
                txn.delete_master(old)
            txn.remove_base(old)
            replaced_keys.append(old.key)
        txn.put_master(master)
        timings["base_selection"] = (time.perf_counter() - t3) * 1000.0

    return PublishReport(
        packages_stored=stored_count,
        packages_stored_bytes=stored_bytes,
        packages_skipped=skipped,
        base_action=base_action,
        bases_replaced=replaced_keys,
        master_similarity=similarity_to_master,
        durations_ms=timings,
    )


# --- retrieve ------------------------------------------------------------------

_BLOB_ID = re.compile(r"^[0-9a-f]{64}$")


def _resolve_fragments(
    index: RepoIndex, record: BaseRecord, primaries: tuple[tuple[str, str, str], ...]
) -> tuple[list[GraphFragment] | None, tuple[str, str, str] | None]:
    """Find one stored fragment per requested primary identity.

    The located base's own master is searched first, then masters sharing
    its quadruple, then every other master.
    """
    own = index.masters.get(record.key)
    ordered: list[MasterGraph] = [own] if own is not None else []
    for key in sorted(index.masters):
        m = index.masters[key]
        if m is not own and m.key == record.attrs:
            ordered.append(m)
    for key in sorted(index.masters):
        m = index.masters[key]
        if m is not own and m.key != record.attrs:
            ordered.append(m)

    fragments: list[GraphFragment] = []
    for identity in primaries:
        pkg = identity[0]
        found = None
        for master in ordered:
            frag = master.package_fragments.get(pkg)
            if frag is not None and frag.packages[pkg].identity == identity:
                found = frag
                break
        if found is None:
            return None, identity
        fragments.append(found)
    return fragments, None


def retrieve(repo: Repository, request: RetrievalRequest, out_path: str | Path) -> ImageBundle:
    """Assemble the requested image from stored parts and write it out.

    The base record, every requested package fragment, and their mutual
    compatibility are all required; the result is a valid bundle whose
    package set is the base fragment plus the requested closures.
    """
    out = Path(out_path)
    with repo.read_locked() as index:
        candidates = [index.bases[k] for k in sorted(index.bases) if index.bases[k].attrs == request.base]
        if not candidates:
            raise NotFoundError(f"unknown base: {','.join(request.base.as_tuple())}")

        chosen = None
        chosen_frags: list[GraphFragment] | None = None
        first_missing: tuple[str, str, str] | None = None
        saw_incompatible = False
        for record in candidates:
            fragments, missing = _resolve_fragments(index, record, request.primaries)
            if fragments is None:
                first_missing = first_missing or missing
                continue
            if all(compatibility(record.fragment, frag) == 1 for frag in fragments):
                chosen = record
                chosen_frags = fragments
                break
            saw_incompatible = True
        if chosen is None:
            if saw_incompatible:
                raise IncompatibleError("incompatible request: fragments conflict with the base image")
            assert first_missing is not None
            raise NotFoundError("unknown package: " + " ".join(first_missing))

        try:
            merged = chosen.fragment
            for frag in chosen_frags:
                merged = graph_union(merged, frag)
        except ValidationError as exc:
            raise IncompatibleError(f"incompatible request: {exc}") from None

        data_bytes = None
        data_ref = None
        if request.data is not None:
            bid = index.data_blobs.get(request.data)
            if bid is None and _BLOB_ID.match(request.data) and repo.has_blob(request.data):
                bid = request.data
            if bid is None:
                raise NotFoundError(f"unknown data label: {request.data}")
            data_bytes = repo.read_blob(bid)
            data_ref = bid

        payloads: dict[str, bytes] = {BASE_VERTEX: repo.read_blob(chosen.blob)}
        for name, attrs in merged.packages.items():
            record = index.packages.get(attrs.identity)
            if record is None:
                raise IntegrityError(f"missing package record: {attrs.identity}")
            payloads[name] = repo.read_blob(record.blob)
        if data_bytes is not None:
            payloads[DATA_KEY] = data_bytes

    graph = SemanticGraph(
        base=chosen.attrs,
        packages=dict(merged.packages),
        primaries=frozenset(identity[0] for identity in request.primaries),
        edges=merged.edges,
        base_depends=chosen.fragment.base_depends,
        data_ref=data_ref,
    )
    return write_bundle(graph, payloads, out)
