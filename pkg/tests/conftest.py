"""Shared fixtures: the worked dependency-graph example and bundle builders."""

from __future__ import annotations

import hashlib
import random
from pathlib import Path

import pytest

from semvault.bundle import BASE_VERTEX, DATA_KEY, ImageBundle, write_bundle
from semvault.graph import BaseImageAttrs, PackageAttrs, SemanticGraph, build_graph

# One Debian-flavored image with two primaries (a database and an app
# server), nine dependencies, and a libc6/perl-base/dpkg dependency cycle.
EXAMPLE_BASE = BaseImageAttrs("Linux", "debian", "16.04", "x86_64")

EXAMPLE_PACKAGES = {
    "MariaDB": ("2.5", "multiarch", 1056),
    "Tomcat8": ("8.1.1", "multiarch", 4096),
    "bash": ("4.4", "x86_64", 640),
    "openjdk": ("8u162", "x86_64", 3800),
    "gawk": ("4.1.4", "x86_64", 520),
    "libc6": ("2.24", "x86_64", 2900),
    "dpkg": ("1.18.25", "x86_64", 1750),
    "debconf": ("1.5.61", "all", 390),
    "perl-base": ("5.24.1", "x86_64", 1480),
    "ucf": ("3.0036", "all", 210),
    "coreutils": ("8.26", "x86_64", 1400),
}

EXAMPLE_PRIMARIES = {"MariaDB", "Tomcat8"}

EXAMPLE_EDGES = [
    ("bash", "libc6"),
    ("coreutils", "libc6"),
    ("gawk", "libc6"),
    ("libc6", "perl-base"),
    ("perl-base", "dpkg"),
    ("dpkg", "libc6"),
    ("dpkg", "bash"),
    ("debconf", "perl-base"),
    ("Tomcat8", "openjdk"),
    ("Tomcat8", "ucf"),
    ("openjdk", "libc6"),
    ("ucf", "coreutils"),
    ("ucf", "debconf"),
    ("MariaDB", "libc6"),
    ("MariaDB", "perl-base"),
    ("MariaDB", "coreutils"),
]

EXAMPLE_BASE_DEPENDS = ["bash", "coreutils", "gawk", "debconf"]

# Hand-traced expectations for the fixture above.
TOMCAT_CLOSURE = {"Tomcat8", "openjdk", "libc6", "dpkg", "perl-base", "bash", "ucf", "debconf", "coreutils"}
PRIMARY_SUBGRAPH_PACKAGES = set(EXAMPLE_PACKAGES) - {"gawk"}
BASE_SUBGRAPH_PACKAGES = {"bash", "coreutils", "gawk", "libc6", "dpkg", "perl-base", "debconf"}


def make_example_graph() -> SemanticGraph:
    packages = [PackageAttrs(name, *attrs) for name, attrs in EXAMPLE_PACKAGES.items()]
    return build_graph(EXAMPLE_BASE, packages, EXAMPLE_PRIMARIES, EXAMPLE_EDGES, EXAMPLE_BASE_DEPENDS)


@pytest.fixture
def example_graph() -> SemanticGraph:
    return make_example_graph()


def payload_for(tag: str, n: int = 256) -> bytes:
    return random.Random(f"fixture:{tag}").randbytes(n)


def payloads_for(graph: SemanticGraph) -> dict[str, bytes]:
    payloads = {name: payload_for(name) for name in graph.packages}
    payloads[BASE_VERTEX] = payload_for("base", 2048)
    if graph.data_ref is not None:
        payloads[DATA_KEY] = payload_for("data", 512)
    return payloads


@pytest.fixture
def example_bundle(tmp_path, example_graph) -> ImageBundle:
    return write_bundle(example_graph, payloads_for(example_graph), tmp_path / "example-bundle")


def make_bundle(
    out_dir: Path,
    name: str,
    base: BaseImageAttrs,
    packages: list[tuple[str, str, str, int, bool, list[str]]],
    base_depends: list[str],
    data: bytes | None = None,
) -> ImageBundle:
    """Compact bundle builder: packages are (pkg, ver, arch, size, primary, depends).

    Payloads derive from package identities (and the base payload from the
    base quadruple plus its dependency closure), so bundles built here are
    mutually consistent: one identity key always carries one payload.
    """
    from semvault.graph import base_subgraph, fragment_digest

    attrs = [PackageAttrs(p[0], p[1], p[2], p[3]) for p in packages]
    primaries = {p[0] for p in packages if p[4]}
    edges = [(p[0], dep) for p in packages for dep in p[5]]
    data_ref = hashlib.sha256(data).hexdigest() if data is not None else None
    graph = build_graph(base, attrs, primaries, edges, base_depends, data_ref)
    payloads = {p.pkg: payload_for(f"pkg:{p.pkg}:{p.ver}:{p.arch}") for p in attrs}
    base_tag = ",".join(base.as_tuple()) + ":" + fragment_digest(base_subgraph(graph))
    payloads[BASE_VERTEX] = payload_for(f"base:{base_tag}", 1024)
    if data is not None:
        payloads[DATA_KEY] = data
    return write_bundle(graph, payloads, out_dir / name)
