"""Master graph: merge, extraction, flatten oracle, similarity."""

from __future__ import annotations

import itertools
import random

import pytest

from semvault.errors import IncompatibleError, NotFoundError, ValidationError
from semvault.graph import (
    BaseImageAttrs,
    PackageAttrs,
    base_subgraph,
    build_graph,
    graph_union,
    primary_subgraph,
)
from semvault.master import (
    create_master,
    extract_fragment,
    flatten,
    master_from_dict,
    master_similarity,
    master_to_dict,
    merge_image,
)
from semvault.similarity import sim_graph

QUAD = BaseImageAttrs("Linux", "ubuntu", "16.04", "x86_64")


def _image(primary_deps: dict[str, list[str]], pool: dict[str, PackageAttrs], base_names: list[str]):
    """Graph with the given primaries (name -> dep names) over a shared pool."""
    vertex_names = set(base_names)
    edges = set()
    for prim, deps in primary_deps.items():
        vertex_names.add(prim)
        for d in deps:
            vertex_names.add(d)
            edges.add((prim, d))
    g = build_graph(
        QUAD,
        [pool[n] for n in sorted(vertex_names)],
        set(primary_deps),
        edges,
        base_names,
    )
    return g, primary_subgraph(g), base_subgraph(g)


@pytest.fixture
def pool():
    rng = random.Random(2)
    names = [f"p{i:02d}" for i in range(20)]
    return {n: PackageAttrs(n, f"{rng.randint(1, 3)}.0", "x86_64", rng.randint(10, 500)) for n in names}


class TestMergeExtract:
    def test_merge_identical_image_is_noop(self, pool):
        g, ps, bs = _image({"p05": ["p06"]}, pool, ["p00", "p01"])
        m = create_master(bs, "blob0")
        m1 = merge_image(m, bs, ps)
        m2 = merge_image(m1, bs, ps)
        assert m1 == m2

    def test_disjoint_closure_grows_by_its_size(self, pool):
        g1, ps1, bs1 = _image({"p05": ["p06"]}, pool, ["p00"])
        g2, ps2, bs2 = _image({"p07": ["p08", "p09"]}, pool, ["p00"])
        m = merge_image(create_master(bs1, "b"), bs1, ps1)
        before = set(flatten(m).packages)
        m = merge_image(m, bs2, ps2)
        after = set(flatten(m).packages)
        assert after - before == {"p07", "p08", "p09"}
        # set-union oracle on the flattened vertex set
        assert after == set(bs1.packages) | set(ps1.packages) | set(ps2.packages)

    def test_incompatible_homonym_rejected(self, pool):
        g1, ps1, bs1 = _image({"p05": ["p06"]}, pool, ["p00"])
        m = merge_image(create_master(bs1, "b"), bs1, ps1)
        clash = dict(pool)
        clash["p00"] = PackageAttrs("p00", "9.9", "x86_64", 11)
        g2, ps2, bs2 = _image({"p07": ["p00"]}, clash, ["p01"])
        with pytest.raises(IncompatibleError, match="semantic conflict"):
            merge_image(m, bs1, ps2)

    def test_wrong_key_rejected(self, pool):
        g, ps, bs = _image({"p05": []}, pool, ["p00"])
        m = create_master(bs, "b")
        other = build_graph(
            BaseImageAttrs("Linux", "ubuntu", "18.04", "x86_64"),
            [pool["p05"]],
            {"p05"},
            [],
            [],
        )
        with pytest.raises(ValidationError, match="wrong master graph"):
            merge_image(m, base_subgraph(other), primary_subgraph(other))

    def test_extract_round_trip(self, pool):
        g, ps, bs = _image({"p05": ["p06"], "p07": []}, pool, ["p00"])
        m = merge_image(create_master(bs, "b"), bs, ps)
        frag = extract_fragment(m, "p05")
        assert set(frag.packages) == {"p05", "p06"}
        assert frag.primaries == {"p05"}
        assert extract_fragment(m, "p07").packages.keys() == {"p07"}

    def test_extract_unknown(self, pool):
        g, ps, bs = _image({"p05": []}, pool, ["p00"])
        m = merge_image(create_master(bs, "b"), bs, ps)
        with pytest.raises(NotFoundError, match="fragment not found"):
            extract_fragment(m, "nope")

    def test_single_fragment_master(self, pool):
        g, ps, bs = _image({"p05": ["p06"]}, pool, ["p00"])
        m = merge_image(create_master(bs, "b"), bs, ps)
        assert set(m.package_fragments) == {"p05"}
        assert extract_fragment(m, "p05") == m.package_fragments["p05"]


class TestFlattenOracle:
    def _random_images(self, rng, pool, n_images):
        base_names = sorted(rng.sample(sorted(pool), k=3))
        images = []
        for _ in range(n_images):
            prim_names = rng.sample([n for n in sorted(pool) if n not in base_names], k=rng.randint(1, 3))
            prims = {
                p: rng.sample([n for n in sorted(pool) if n != p], k=rng.randint(0, 3))
                for p in prim_names
            }
            images.append(_image(prims, pool, base_names))
        return images

    def test_flatten_equals_brute_force_union(self, pool):
        rng = random.Random(4)
        for _ in range(30):
            images = self._random_images(rng, pool, rng.randint(1, 5))
            _, _, bs = images[0]
            m = create_master(bs, "b")
            expected = bs
            for _, ps, ibs in images:
                m = merge_image(m, ibs, ps)
                expected = graph_union(expected, ps)
            flat = flatten(m)
            assert set(flat.packages) == set(expected.packages)
            assert flat.edges == expected.edges

    def test_merge_order_irrelevant(self, pool):
        rng = random.Random(6)
        images = self._random_images(rng, pool, 4)
        _, _, bs = images[0]
        results = []
        for order in itertools.islice(itertools.permutations(images), 6):
            m = create_master(bs, "b")
            for _, ps, ibs in order:
                m = merge_image(m, ibs, ps)
            results.append(flatten(m))
        assert all(r == results[0] for r in results)


class TestMasterSimilarity:
    def test_exact_source_image(self, pool):
        g, ps, bs = _image({"p05": ["p06"]}, pool, ["p00", "p01"])
        m = merge_image(create_master(bs, "b"), bs, ps)
        assert master_similarity(m, g) == 1.0

    def test_key_mismatch_is_zero(self, pool):
        g, ps, bs = _image({"p05": []}, pool, ["p00"])
        m = merge_image(create_master(bs, "b"), bs, ps)
        other = build_graph(
            BaseImageAttrs("Linux", "ubuntu", "18.04", "x86_64"), [pool["p05"]], {"p05"}, [], []
        )
        assert master_similarity(m, other) == 0.0

    def test_union_query_matches_brute_force(self, pool):
        g1, ps1, bs = _image({"p05": ["p06"]}, pool, ["p00"])
        g2, ps2, _ = _image({"p07": ["p08"]}, pool, ["p00"])
        m = merge_image(merge_image(create_master(bs, "b"), bs, ps1), bs, ps2)
        manual = graph_union(graph_union(bs, ps1), ps2)
        manual_graph = build_graph(
            QUAD, manual.packages.values(), {"p05", "p07"}, manual.edges, manual.base_depends
        )
        assert master_similarity(m, g1) == pytest.approx(sim_graph(manual_graph, g1))


class TestSerialization:
    def test_round_trip(self, pool):
        g, ps, bs = _image({"p05": ["p06"], "p09": []}, pool, ["p00", "p01"])
        m = merge_image(create_master(bs, "blob-id"), bs, ps)
        assert master_from_dict(master_to_dict(m)) == m
