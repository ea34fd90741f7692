#!/usr/bin/env python3
"""Narrative tour of the engine: publish a small fleet, inspect what the
repository actually stored, then assemble an image that was never uploaded.

Run from the repository root after `pip install -e .`:

    python demos/walkthrough.py
"""

import tempfile
from pathlib import Path

from semvault import (
    CorpusSpec,
    RetrievalRequest,
    Repository,
    generate_corpus,
    load_bundle,
    publish,
    retrieve,
    sim_graph,
)

work = Path(tempfile.mkdtemp(prefix="semvault-demo-"))
print(f"working under {work}\n")

# Four images sharing one Ubuntu-flavored base: a minimal box, a web
# stack that extends it, a desktop on top of that, and an IDE variant.
bundles = generate_corpus(CorpusSpec("four", payload_scale=64 * 1024), seed=7, out_dir=work / "bundles")
for a in bundles:
    for b in bundles:
        if a.label < b.label:
            print(f"similarity {a.label} vs {b.label}: {sim_graph(a.graph, b.graph):.4f}")

# Publish them in order. The first image pays full price; later ones only
# store the packages the repository has not seen yet, and every image
# reuses the one stored base.
repo = Repository.init(work / "repo")
print("\npublishing:")
for bundle in bundles:
    report = publish(repo, bundle.path)
    print(
        f"  {bundle.label:<22} stored {report.packages_stored:>2} packages "
        f"({report.packages_stored_bytes:>8} bytes), skipped {report.packages_skipped:>2}, "
        f"base {report.base_action}"
    )

raw = sum(sum(len(p) for p in b.payloads.values()) for b in bundles)
print(f"\nraw corpus payload bytes: {raw}")
print(f"repository size:          {repo.repo_size()}")

# Assemble a combination that was never uploaded: the shared base plus
# only the database engine from the web-stack image.
web = next(b for b in bundles if "web" in b.label)
db = web.graph.packages["db-engine"]
request = RetrievalRequest(base=web.graph.base, primaries=(db.identity,))
out = retrieve(repo, request, work / "db-only")
assembled = load_bundle(out.path)
print(f"\nassembled never-published image with {len(assembled.graph.packages)} packages:")
for name in sorted(assembled.graph.packages):
    marker = "*" if name in assembled.graph.primaries else " "
    print(f"  {marker} {name}")
print("\n(*) requested primary; everything else is its dependency closure",
      "plus the base image's own packages.")
