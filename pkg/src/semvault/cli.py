"""Command-line surface.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 repository
integrity error, 5 semantic incompatibility. Failures print one
machine-parseable line: ``error: <code>: <message>``. The ``SEMVAULT_REPO``
environment variable supplies the default for ``--repo``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench as bench_mod
from .bundle import load_bundle
from .corpus import SCENARIOS, CorpusSpec, generate_corpus
from .errors import SemvaultError, UsageError
from .graph import BaseImageAttrs
from .lifecycle import RetrievalRequest, publish, retrieve
from .repo import Repository
from .similarity import sim_graph

REPO_ENV = "SEMVAULT_REPO"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        print(f"error: 2: {message}", file=sys.stderr)
        raise SystemExit(2)


def _require_repo(value: str | None) -> Repository:
    target = value or os.environ.get(REPO_ENV)
    if not target:
        raise UsageError(f"--repo is required (or set {REPO_ENV})")
    return Repository.open(target)


def _parse_base(text: str) -> BaseImageAttrs:
    parts = text.split(",")
    if len(parts) != 4 or not all(parts):
        raise UsageError(f"--base expects type,distro,ver,arch, got {text!r}")
    return BaseImageAttrs(*parts)


def _parse_pkg(text: str) -> tuple[str, str, str | None]:
    if "=" not in text:
        raise UsageError(f"--pkg expects name=ver[/arch], got {text!r}")
    name, _, rest = text.partition("=")
    ver, slash, arch = rest.partition("/")
    if not name or not ver or (slash and not arch):
        raise UsageError(f"--pkg expects name=ver[/arch], got {text!r}")
    return name, ver, (arch or None)


def _resolve_arch(repo: Repository, name: str, ver: str) -> str:
    # Arch omitted on the command line: unambiguous stored identity wins.
    with repo.read_locked() as index:
        matches = sorted({key[2] for key in index.packages if key[0] == name and key[1] == ver})
    if len(matches) == 1:
        return matches[0]
    if not matches:
        raise SemvaultError(f"unknown package: {name} {ver}")
    raise UsageError(f"ambiguous architecture for {name}={ver}: {', '.join(matches)}")


def _cmd_repo_init(args) -> int:
    Repository.init(args.dir)
    print(f"initialized empty repository at {args.dir}")
    return 0


def _cmd_publish(args) -> int:
    repo = _require_repo(args.repo)
    report = publish(repo, args.bundle)
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(f"packages stored:  {report.packages_stored} ({report.packages_stored_bytes} bytes)")
        print(f"packages skipped: {report.packages_skipped}")
        print(f"base action:      {report.base_action}")
        print(f"bases replaced:   {len(report.bases_replaced)}")
        print(f"master similarity: {report.master_similarity:.4f}")
        for phase, ms in report.durations_ms.items():
            print(f"  {phase:<14} {ms:8.1f} ms")
    return 0


def _cmd_retrieve(args) -> int:
    repo = _require_repo(args.repo)
    base = _parse_base(args.base)
    primaries = []
    for text in args.pkg:
        name, ver, arch = _parse_pkg(text)
        if arch is None:
            arch = _resolve_arch(repo, name, ver)
        primaries.append((name, ver, arch))
    request = RetrievalRequest(base=base, primaries=tuple(primaries), data=args.data)
    bundle = retrieve(repo, request, args.out)
    print(f"assembled {len(bundle.graph.packages)} packages into {args.out}")
    return 0


def _cmd_similarity(args) -> int:
    a = load_bundle(args.bundle_a)
    b = load_bundle(args.bundle_b)
    print(f"{sim_graph(a.graph, b.graph):.4f}")
    return 0


def _cmd_list(args) -> int:
    repo = _require_repo(args.repo)
    with repo.read_locked() as index:
        doc = {
            "bases": [
                {"attrs": list(rec.attrs.as_tuple()), "fragment_sha256": rec.key[4], "blob": rec.blob}
                for _, rec in sorted(index.bases.items())
            ],
            "packages": [
                {"pkg": r.attrs.pkg, "ver": r.attrs.ver, "arch": r.attrs.arch, "size": r.attrs.size, "blob": r.blob}
                for _, r in sorted(index.packages.items())
            ],
            "masters": [
                {"key": list(m.key.as_tuple()), "fragments": sorted(m.package_fragments)}
                for _, m in sorted(index.masters.items())
            ],
            "data": dict(sorted(index.data_blobs.items())),
        }
    if args.json:
        print(json.dumps(doc, sort_keys=True))
        return 0
    print(f"bases ({len(doc['bases'])}):")
    for b in doc["bases"]:
        print(f"  {','.join(b['attrs'])}  fragment {b['fragment_sha256'][:12]}  blob {b['blob'][:12]}")
    print(f"packages ({len(doc['packages'])}):")
    for p in doc["packages"]:
        print(f"  {p['pkg']} {p['ver']} {p['arch']}  {p['size']} bytes")
    print(f"master graphs ({len(doc['masters'])}):")
    for m in doc["masters"]:
        print(f"  {','.join(m['key'])}  primaries: {', '.join(m['fragments'])}")
    if doc["data"]:
        print(f"data labels ({len(doc['data'])}):")
        for label, bid in doc["data"].items():
            print(f"  {label}  {bid[:12]}")
    return 0


def _cmd_stats(args) -> int:
    repo = _require_repo(args.repo)
    with repo.read_locked() as index:
        stats = dict(index.stats)
    index_bytes = (repo.root / "index.txt").stat().st_size
    doc = {**stats, "index_bytes": index_bytes, "total_bytes": stats.get("live_blob_bytes", 0) + index_bytes}
    if args.json:
        print(json.dumps(doc, sort_keys=True))
        return 0
    for key in sorted(doc):
        print(f"{key:<22} {doc[key]}")
    return 0


def _cmd_fsck(args) -> int:
    repo = _require_repo(args.repo)
    report = repo.fsck(repair=not args.no_repair)
    print(f"blobs checked: {report.blobs_checked}")
    if report.orphans_removed:
        print(f"orphan blobs collected: {len(report.orphans_removed)}")
    for err in report.errors:
        print(f"integrity violation: {err}", file=sys.stderr)
    if not report.ok:
        print(f"error: 4: fsck found {len(report.errors)} violation(s)", file=sys.stderr)
        return 4
    print("ok")
    return 0


def _corpus_spec(args) -> CorpusSpec:
    counts = {"four": 4, "nineteen": 19, "clones": 40}
    count = args.n if args.n is not None else counts[args.scenario]
    return CorpusSpec(
        scenario=args.scenario,
        count=count,
        payload_scale=args.payload_scale,
        compressible=args.compressible,
    )


def _cmd_gen(args) -> int:
    bundles = generate_corpus(_corpus_spec(args), args.seed, args.out)
    print(f"wrote {len(bundles)} bundles under {args.out}")
    return 0


def _cmd_bench(args) -> int:
    report = bench_mod.run_scenario(
        args.scenario,
        args.seed,
        args.repo,
        spec=_corpus_spec(args),
        trials=args.trials,
    )
    if args.csv:
        bench_mod.emit_csv(report, args.csv)
    print(bench_mod.emit_table(report), end="")
    problems = bench_mod.check_invariants(report)
    for problem in problems:
        print(f"invariant violation: {problem}", file=sys.stderr)
    if problems:
        print(f"error: 4: bench invariants violated ({len(problems)})", file=sys.stderr)
        return 4
    return 0


def _add_corpus_flags(p: argparse.ArgumentParser, require_out: bool) -> None:
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--n", type=int, default=None, help="image count (clones/nineteen)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--payload-scale", type=int, default=64 * 1024, help="typical package payload bytes")
    p.add_argument("--compressible", action="store_true", help="repetitive payloads instead of random")
    if require_out:
        p.add_argument("-o", "--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semvault", description="semantics-aware image repository")
    sub = parser.add_subparsers(dest="command", required=True)

    repo_cmd = sub.add_parser("repo", help="repository management")
    repo_sub = repo_cmd.add_subparsers(dest="repo_command", required=True)
    p = repo_sub.add_parser("init", help="create an empty repository")
    p.add_argument("dir")
    p.set_defaults(func=_cmd_repo_init)

    p = sub.add_parser("publish", help="decompose and store a bundle")
    p.add_argument("bundle")
    p.add_argument("--repo")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_publish)

    p = sub.add_parser("retrieve", help="assemble an image from stored parts")
    p.add_argument("--repo")
    p.add_argument("--base", required=True, help="type,distro,ver,arch")
    p.add_argument("--pkg", action="append", required=True, help="name=ver[/arch]; repeatable")
    p.add_argument("--data", default=None, help="data label or blob id")
    p.add_argument("-o", "--out", required=True, help="output bundle directory")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("similarity", help="graph similarity of two bundles")
    p.add_argument("bundle_a")
    p.add_argument("bundle_b")
    p.set_defaults(func=_cmd_similarity)

    p = sub.add_parser("list", help="bases, packages, master graphs")
    p.add_argument("--repo")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_list)

    p = sub.add_parser("stats", help="repository size breakdown")
    p.add_argument("--repo")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("fsck", help="integrity check; collects orphan blobs")
    p.add_argument("--repo")
    p.add_argument("--no-repair", action="store_true", help="report orphans without deleting")
    p.set_defaults(func=_cmd_fsck)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    _add_corpus_flags(p, require_out=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("bench", help="run a benchmark scenario")
    _add_corpus_flags(p, require_out=False)
    p.add_argument("--repo", required=True, help="fresh repository directory")
    p.add_argument("--csv", default=None, help="write per-step CSV here")
    p.add_argument("--trials", type=int, default=1)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SemvaultError as exc:
        print(f"error: {exc.exit_code}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
