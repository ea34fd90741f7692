"""Randomized generators used by unit tests and the acceptance suite.

The bundle universe fixes every package's quadruple, dependency list, and
payload per name, and fixes each base flavor's dependency closure, so any
mix of randomly composed images stays mutually consistent: one identity
key always maps to one payload, and images sharing a base flavor share
its fragment. That mirrors how real distributions behave and is what
makes publish/retrieve round trips exact.
"""

from __future__ import annotations

import hashlib
import random
from pathlib import Path

from semvault.bundle import BASE_VERTEX, DATA_KEY, ImageBundle, write_bundle
from semvault.graph import (
    BaseImageAttrs,
    GraphFragment,
    PackageAttrs,
    build_graph,
)


class BundleUniverse:
    """A fixed world of base flavors and packages to compose images from."""

    def __init__(self, seed: int, n_quads: int = 2, n_apps: int = 10, n_libs: int = 12):
        rng = random.Random(f"universe:{seed}")
        self.seed = seed
        self.quads = [
            BaseImageAttrs("Linux", "ubuntu" if i % 2 == 0 else "debian", f"{16 + 2 * (i // 2)}.04", "x86_64")
            for i in range(n_quads)
        ]
        self.attrs: dict[str, PackageAttrs] = {}
        self.depends: dict[str, list[str]] = {}
        libs = [f"lib{i:02d}" for i in range(n_libs)]
        for i, lib in enumerate(libs):
            arch = "all" if rng.random() < 0.2 else "x86_64"
            self.attrs[lib] = PackageAttrs(lib, f"{rng.randint(1, 5)}.{rng.randint(0, 9)}", arch, rng.randint(64, 4096))
            self.depends[lib] = sorted(rng.sample(libs[:i], k=rng.randint(0, min(2, i))))
        # a dependency cycle among three libraries
        if n_libs >= 3:
            self.depends[libs[0]] = sorted(set(self.depends[libs[0]]) | {libs[1]})
            self.depends[libs[1]] = sorted(set(self.depends[libs[1]]) | {libs[2]})
            self.depends[libs[2]] = sorted(set(self.depends[libs[2]]) | {libs[0]})
        self.apps = [f"app{i:02d}" for i in range(n_apps)]
        for app in self.apps:
            self.attrs[app] = PackageAttrs(app, f"{rng.randint(1, 9)}.{rng.randint(0, 9)}", "x86_64", rng.randint(256, 8192))
            self.depends[app] = sorted(rng.sample(libs, k=rng.randint(1, 3)))
        # each base flavor owns a fixed slice of the library pool
        self.base_depends: dict[BaseImageAttrs, list[str]] = {}
        for quad in self.quads:
            self.base_depends[quad] = sorted(rng.sample(libs, k=rng.randint(2, 4)))

    def closure(self, names: set[str]) -> set[str]:
        seen: set[str] = set()
        stack = list(names)
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self.depends[node])
        return seen

    def payload(self, name: str) -> bytes:
        a = self.attrs[name]
        return random.Random(f"payload:{self.seed}:{a.pkg}:{a.ver}:{a.arch}").randbytes(max(32, a.size // 2))

    def base_payload(self, quad: BaseImageAttrs) -> bytes:
        return random.Random(f"basepayload:{self.seed}:{quad.as_tuple()}").randbytes(4096)

    def random_bundle(self, rng: random.Random, out_dir: Path, name: str) -> ImageBundle:
        quad = rng.choice(self.quads)
        primaries = set(rng.sample(self.apps, k=rng.randint(1, 4)))
        vertex_names = self.closure(primaries | set(self.base_depends[quad]))
        payloads = {n: self.payload(n) for n in vertex_names}
        payloads[BASE_VERTEX] = self.base_payload(quad)
        data_ref = None
        if rng.random() < 0.5:
            data = rng.randbytes(rng.randint(16, 512))
            payloads[DATA_KEY] = data
            data_ref = hashlib.sha256(data).hexdigest()
        graph = build_graph(
            base=quad,
            packages=[self.attrs[n] for n in sorted(vertex_names)],
            primaries=primaries,
            edges={(n, d) for n in vertex_names for d in self.depends[n] if d in vertex_names},
            base_depends=self.base_depends[quad],
            data_ref=data_ref,
        )
        return write_bundle(graph, payloads, out_dir / name)


def random_fragment(
    rng: random.Random,
    pool: dict[str, PackageAttrs],
    k: int,
    base: BaseImageAttrs | None = None,
    primaries: int = 0,
) -> GraphFragment:
    """Induced-looking fragment over a sample of a fixed package pool."""
    names = sorted(rng.sample(sorted(pool), k=min(k, len(pool))))
    edges = set()
    for a in names:
        for b in names:
            if a != b and rng.random() < 0.2:
                edges.add((a, b))
    roots = frozenset(rng.sample(names, k=min(primaries, len(names)))) if primaries else frozenset()
    return GraphFragment(
        packages={n: pool[n] for n in names},
        edges=frozenset(edges),
        primaries=roots,
        base=base,
        base_depends=frozenset(rng.sample(names, k=min(2, len(names)))) if base is not None else frozenset(),
    )


def package_pool(rng: random.Random, n: int, prefix: str = "pkg") -> dict[str, PackageAttrs]:
    """One quadruple per name: samples of this pool never conflict."""
    pool = {}
    for i in range(n):
        name = f"{prefix}{i:02d}"
        arch = "all" if rng.random() < 0.25 else "x86_64"
        pool[name] = PackageAttrs(name, f"{rng.randint(1, 4)}.{rng.randint(0, 9)}", arch, rng.randint(1, 2048))
    return pool


# --- base-selection oracle ----------------------------------------------------


def comp_brute_force(base_frag: GraphFragment, pkg_frag: GraphFragment) -> int:
    """Compatibility as a literal product over all homonym cross pairs."""
    from semvault.similarity import sim_package

    product = 1
    for p1 in base_frag.packages.values():
        for p2 in pkg_frag.packages.values():
            if p1.pkg == p2.pkg:
                product *= sim_package(p1, p2)
    return product


def selection_oracle(incoming, stored):
    """Exhaustive re-derivation of the base-selection outcome.

    Mirrors the documented rules with independent code: brute-force
    compatibility, explicit replace-list enumeration, the documented sort
    key, and the first-match scan. Returns (winner_candidate, replaced
    candidates) or None for the keep-incoming fallback.
    """
    pool = [incoming, *stored]
    rows = []
    for cand in pool:
        replaced = []
        for other in pool:
            if other is cand:
                continue
            if all(comp_brute_force(cand.fragment, frag) == 1 for frag in other.pkg_fragments):
                replaced.append(other)
        if replaced:
            size = sum(p.size for p in cand.fragment.packages.values())
            rows.append((cand, replaced, size))
    ordered = sorted(
        rows,
        key=lambda row: (-len(row[1]), row[2], 0 if row[0].record is not None else 1, row[0].identity),
    )
    for cand, replaced, _ in ordered:
        if cand is incoming or incoming in replaced:
            return cand, replaced
    return None


def random_selection_case(rng: random.Random, quad: BaseImageAttrs):
    """A synthetic selection problem: an incoming base plus stored bases.

    Masters stay internally consistent (each riding fragment compatible
    with its own base fragment), while cross-base conflicts arise freely
    from differing dependency versions.
    """
    from semvault.lifecycle import BaseCandidate
    from semvault.repo import BaseRecord
    from semvault.graph import fragment_digest

    lib_names = [f"lib{i}" for i in range(5)]
    app_names = [f"app{i}" for i in range(6)]
    sizes = {n: rng.choice((10, 20)) for n in lib_names + app_names}

    def lib(name, ver):
        return PackageAttrs(name, f"{ver}.0", "x86_64", sizes[name])

    def base_fragment():
        chosen = rng.sample(lib_names, k=rng.randint(1, 3))
        pkgs = {n: lib(n, rng.randint(1, 2)) for n in chosen}
        return GraphFragment(
            packages=pkgs, edges=frozenset(), base=quad, base_depends=frozenset(pkgs)
        )

    def riding_fragment(base_frag, app):
        pkgs = {app: PackageAttrs(app, "1.0", "x86_64", sizes[app])}
        for name in rng.sample(lib_names, k=rng.randint(0, 2)):
            if name in base_frag.packages:
                pkgs[name] = base_frag.packages[name]  # homonym copies stay compatible
            else:
                pkgs[name] = lib(name, rng.randint(1, 2))
        return GraphFragment(packages=pkgs, edges=frozenset(), primaries=frozenset({app}))

    incoming_frag = base_fragment()
    incoming = BaseCandidate(
        identity=quad.as_tuple() + (fragment_digest(incoming_frag),),
        fragment=incoming_frag,
        pkg_fragments=(riding_fragment(incoming_frag, rng.choice(app_names)),),
    )
    stored = []
    seen = set()
    for i in range(rng.randint(0, 5)):
        frag = base_fragment()
        record = BaseRecord(attrs=quad, blob=f"blob-{i}", fragment=frag)
        if record.key in seen:
            continue
        seen.add(record.key)
        roots = rng.sample(app_names, k=rng.randint(1, 3))
        fragments = tuple(riding_fragment(frag, app) for app in roots)
        stored.append(
            BaseCandidate(identity=record.key, fragment=frag, pkg_fragments=fragments, record=record)
        )
    return incoming, stored
