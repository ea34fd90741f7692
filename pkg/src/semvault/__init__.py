"""Semantics-aware image repository engine.

Decomposes image bundles into a base image plus software packages along
their semantic dependency graph, stores only non-redundant components in
a content-addressed repository, and reassembles images (including
never-published combinations) on demand.
"""

from .bundle import ImageBundle, load_bundle, write_bundle
from .corpus import CorpusSpec, generate_corpus
from .errors import (
    IncompatibleError,
    IntegrityError,
    NotFoundError,
    SemvaultError,
    UsageError,
    ValidationError,
)
from .graph import (
    ARCH_ANY,
    BASE_VERTEX,
    BaseImageAttrs,
    GraphFragment,
    PackageAttrs,
    SemanticGraph,
    base_subgraph,
    build_graph,
    graph_union,
    primary_subgraph,
    reachable_closure,
)
from .lifecycle import PublishReport, RetrievalRequest, publish, retrieve, select_base
from .master import MasterGraph, create_master, extract_fragment, flatten, master_similarity, merge_image
from .repo import BaseRecord, PackageRecord, Repository
from .similarity import compatibility, sim_base, sim_graph, sim_package, sim_size

__version__ = "0.1.0"

__all__ = [
    "ARCH_ANY",
    "BASE_VERTEX",
    "BaseImageAttrs",
    "BaseRecord",
    "CorpusSpec",
    "GraphFragment",
    "ImageBundle",
    "IncompatibleError",
    "IntegrityError",
    "MasterGraph",
    "NotFoundError",
    "PackageAttrs",
    "PackageRecord",
    "PublishReport",
    "Repository",
    "RetrievalRequest",
    "SemanticGraph",
    "SemvaultError",
    "UsageError",
    "ValidationError",
    "base_subgraph",
    "build_graph",
    "compatibility",
    "create_master",
    "extract_fragment",
    "flatten",
    "generate_corpus",
    "graph_union",
    "load_bundle",
    "master_similarity",
    "merge_image",
    "primary_subgraph",
    "publish",
    "reachable_closure",
    "retrieve",
    "select_base",
    "sim_base",
    "sim_graph",
    "sim_package",
    "sim_size",
    "write_bundle",
]
