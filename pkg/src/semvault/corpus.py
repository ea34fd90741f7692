"""Deterministic synthetic image corpora for the benchmark scenarios.

Three scenario shapes: ``four`` (nested stacks sharing one base flavor),
``nineteen`` (a larger fleet drawing primaries from a shared pool with a
configurable overlap fraction), and ``clones`` (N bit-identical images).
Every derived quantity (package attributes, dependency lists, payload
bytes) is a pure function of the corpus seed and the package identity,
so the same (pkg, ver, arch) always carries the same payload and two runs
with one seed emit byte-identical corpora.

Payload bytes default to pseudo-random (incompressible) so the
whole-bundle compression baseline is honest; ``compressible=True``
switches to repetitive payloads.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from pathlib import Path

from .bundle import BASE_VERTEX, DATA_KEY, ImageBundle, write_bundle
from .errors import ValidationError
from .graph import BaseImageAttrs, PackageAttrs, build_graph

SCENARIOS = ("four", "nineteen", "clones")


@dataclass(frozen=True)
class CorpusSpec:
    """Shape parameters for one generated corpus."""

    scenario: str
    count: int = 0  # images for clones/nineteen; `four` is fixed at 4
    pool_size: int = 36  # primary/dependency name pool for `nineteen`
    overlap: float = 0.5  # fraction of each image's primaries drawn from the popular core
    payload_scale: int = 64 * 1024  # typical package payload size in bytes
    compressible: bool = False

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario: {self.scenario}")
        if self.scenario != "four" and self.count <= 0:
            raise ValidationError("corpus count must be positive")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValidationError("overlap must be in [0, 1]")


def _rng(*parts) -> random.Random:
    return random.Random(":".join(str(p) for p in parts))


def _payload(spec: CorpusSpec, seed: int, tag: str, n: int) -> bytes:
    rng = _rng("payload", seed, tag)
    if spec.compressible:
        chunk = rng.randbytes(48)
        reps = n // len(chunk) + 1
        return (chunk * reps)[:n]
    return rng.randbytes(n)


class _Universe:
    """Fixed per-seed package world: each name owns one quadruple, one
    dependency list, and one payload."""

    def __init__(self, spec: CorpusSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self._attrs: dict[str, PackageAttrs] = {}
        self._depends: dict[str, list[str]] = {}
        self._payloads: dict[str, bytes] = {}

    def define(self, name: str, depends: list[str], *, ver: str | None = None, arch: str = "x86_64") -> None:
        if name in self._attrs:
            return
        rng = _rng("pkg", self.seed, name)
        size = int(self.spec.payload_scale * (0.5 + 1.5 * rng.random()))
        self._attrs[name] = PackageAttrs(
            pkg=name,
            ver=ver or f"{rng.randint(1, 9)}.{rng.randint(0, 20)}.{rng.randint(0, 9)}",
            arch=arch,
            size=size,
        )
        self._depends[name] = list(depends)

    def attrs(self, name: str) -> PackageAttrs:
        return self._attrs[name]

    def payload(self, name: str) -> bytes:
        if name not in self._payloads:
            attrs = self._attrs[name]
            # Packaged blob is smaller than the declared installed size.
            n = max(1, int(attrs.size * 0.7))
            tag = f"{attrs.pkg}:{attrs.ver}:{attrs.arch}"
            self._payloads[name] = _payload(self.spec, self.seed, tag, n)
        return self._payloads[name]

    def base_payload(self, base: BaseImageAttrs) -> bytes:
        tag = f"base:{base.as_tuple()}"
        if tag not in self._payloads:
            self._payloads[tag] = _payload(self.spec, self.seed, tag, self.spec.payload_scale * 4)
        return self._payloads[tag]

    def closure(self, names: set[str]) -> set[str]:
        seen: set[str] = set()
        stack = list(names)
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self._depends[node])
        return seen

    def edges_for(self, names: set[str]) -> set[tuple[str, str]]:
        return {(n, d) for n in names for d in self._depends[n] if d in names}


def _emit(
    universe: _Universe,
    spec: CorpusSpec,
    seed: int,
    out_dir: Path,
    name: str,
    base: BaseImageAttrs,
    base_depends: list[str],
    primaries: set[str],
    data_tag: str | None,
) -> ImageBundle:
    vertex_names = universe.closure(set(base_depends) | primaries)
    payloads = {n: universe.payload(n) for n in vertex_names}
    payloads[BASE_VERTEX] = universe.base_payload(base)
    data_ref = None
    if data_tag is not None:
        data = _payload(spec, seed, f"data:{data_tag}", max(1, spec.payload_scale // 4))
        payloads[DATA_KEY] = data
        data_ref = hashlib.sha256(data).hexdigest()
    graph = build_graph(
        base=base,
        packages=[universe.attrs(n) for n in sorted(vertex_names)],
        primaries=primaries,
        edges=universe.edges_for(vertex_names),
        base_depends=base_depends,
        data_ref=data_ref,
    )
    return write_bundle(graph, payloads, out_dir / name, label=name)


_BASE_DEPS = {
    "sys-libc": [],
    "pkg-tool": ["sys-libc"],
    "core-utils": ["sys-libc"],
    "shell": ["sys-libc"],
    "init-scripts": ["shell", "pkg-tool"],
    "ca-certs": [],
}

# sys-libc / pkg-tool / init-scripts form no cycle above; wire one in so
# cyclic dependencies are exercised by every generated corpus.
_BASE_CYCLE = ("sys-libc", "init-scripts")

_FOUR_APPS = {
    "ssh-daemon": ["crypto-lib", "sys-libc"],
    "http-server": ["event-lib", "crypto-lib"],
    "db-engine": ["readline-lib", "sys-libc"],
    "script-runtime": ["sys-libc"],
    "window-system": ["render-lib", "event-lib"],
    "office-suite": ["render-lib", "font-lib"],
    "mail-daemon": ["crypto-lib"],
    "code-editor": ["render-lib"],
    "java-kit": ["sys-libc"],
    "py-runtime": ["readline-lib", "sys-libc"],
}

_FOUR_LIBS = {
    "crypto-lib": ["sys-libc"],
    "event-lib": ["sys-libc"],
    "readline-lib": ["sys-libc"],
    "render-lib": ["sys-libc", "font-lib"],
    "font-lib": [],
}


def _define_base(universe: _Universe) -> list[str]:
    for name, deps in _BASE_DEPS.items():
        universe.define(name, deps)
    src, dst = _BASE_CYCLE
    universe._depends[src] = sorted(set(universe._depends[src]) | {dst})
    return ["shell", "core-utils", "init-scripts", "ca-certs"]


def _default_base() -> BaseImageAttrs:
    return BaseImageAttrs(type="Linux", distro="ubuntu", ver="16.04", arch="x86_64")


def _gen_four(spec: CorpusSpec, seed: int, out_dir: Path) -> list[ImageBundle]:
    universe = _Universe(spec, seed)
    base_depends = _define_base(universe)
    for name, deps in _FOUR_LIBS.items():
        universe.define(name, deps)
    for name, deps in _FOUR_APPS.items():
        universe.define(name, deps)
    base = _default_base()
    mini = {"ssh-daemon"}
    web = mini | {"http-server", "db-engine", "script-runtime"}
    desktop = web | {"window-system", "office-suite", "mail-daemon"}
    ide = mini | {"code-editor", "java-kit", "py-runtime"}
    images = [
        ("four-01-mini", mini, None),
        ("four-02-web-stack", web, None),
        ("four-03-desktop", desktop, "desktop"),
        ("four-04-ide", ide, "ide"),
    ]
    return [
        _emit(universe, spec, seed, out_dir, name, base, base_depends, primaries, data_tag)
        for name, primaries, data_tag in images
    ]


def _gen_nineteen(spec: CorpusSpec, seed: int, out_dir: Path) -> list[ImageBundle]:
    universe = _Universe(spec, seed)
    base_depends = _define_base(universe)
    rng = _rng("nineteen", seed)
    n_libs = max(4, spec.pool_size // 3)
    libs = [f"lib-{i:02d}" for i in range(n_libs)]
    for i, lib in enumerate(libs):
        # Libraries may depend on earlier libraries: acyclic chains of varying depth.
        earlier = ["sys-libc"] + libs[:i]
        universe.define(lib, sorted(rng.sample(earlier, k=rng.randint(0, min(2, len(earlier))))))
    apps = [f"app-{i:02d}" for i in range(max(4, spec.pool_size - n_libs))]
    for app in apps:
        universe.define(app, sorted(rng.sample(libs, k=rng.randint(1, min(4, n_libs)))))
    base = _default_base()
    popular = apps[: max(2, len(apps) // 4)]
    bundles = []
    for i in range(spec.count):
        img_rng = _rng("image", seed, i)
        k = img_rng.randint(3, 6)
        core = max(1, round(k * spec.overlap))
        primaries = set(img_rng.sample(popular, k=min(core, len(popular))))
        rest = [a for a in apps if a not in primaries]
        primaries |= set(img_rng.sample(rest, k=min(k - len(primaries), len(rest))))
        data_tag = f"img-{i}" if img_rng.random() < 0.4 else None
        name = f"nineteen-{i + 1:02d}"
        bundles.append(_emit(universe, spec, seed, out_dir, name, base, base_depends, primaries, data_tag))
    return bundles


def _gen_clones(spec: CorpusSpec, seed: int, out_dir: Path) -> list[ImageBundle]:
    universe = _Universe(spec, seed)
    base_depends = _define_base(universe)
    for name, deps in _FOUR_LIBS.items():
        universe.define(name, deps)
    for name, deps in _FOUR_APPS.items():
        universe.define(name, deps)
    base = _default_base()
    primaries = {"code-editor", "java-kit", "py-runtime", "ssh-daemon"}
    return [
        _emit(universe, spec, seed, out_dir, f"clone-{i + 1:02d}", base, base_depends, primaries, "clone")
        for i in range(spec.count)
    ]


def generate_corpus(spec: CorpusSpec, seed: int, out_dir: str | Path) -> list[ImageBundle]:
    """Write the corpus for ``spec`` under ``out_dir``; deterministic in seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if spec.scenario == "four":
        return _gen_four(spec, seed, out)
    if spec.scenario == "nineteen":
        return _gen_nineteen(spec, seed, out)
    return _gen_clones(spec, seed, out)
