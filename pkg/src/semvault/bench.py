"""Cumulative repository-growth benchmark across four encoding schemes.

For one scenario the harness generates a corpus, publishes the images in
order, and tracks after each publish:

* raw: sum of on-disk bundle sizes so far;
* compressed: sum of per-bundle DEFLATE-compressed sizes (each bundle
  compressed independently at the default level);
* filededup: bytes of the union of distinct payload blobs by content
  hash across all bundles so far, plus the sum of manifest sizes, a
  file-granularity deduplication accounting model where every base's
  content is kept;
* semantic: the live engine's repository size.

Afterwards every image is retrieved once. Timings are reported, never
asserted: they are hardware-specific. Size columns are deterministic for
a fixed seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import tempfile
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from .bundle import MANIFEST_NAME, PAYLOAD_DIR, ImageBundle, bundle_disk_size
from .corpus import SCENARIOS, CorpusSpec, generate_corpus
from .errors import ValidationError
from .lifecycle import RetrievalRequest, publish, retrieve
from .repo import Repository

CSV_COLUMNS = (
    "scenario",
    "image_index",
    "image_name",
    "raw_bytes",
    "compressed_bytes",
    "filededup_bytes",
    "semantic_bytes",
    "publish_ms",
    "retrieve_ms",
)

# Index bytes tolerated on top of the blob subset argument when comparing
# the semantic column against the file-dedup baseline.
INDEX_OVERHEAD_TOLERANCE = 0.05


@dataclass
class BenchRow:
    image_index: int
    image_name: str
    raw_bytes: int
    compressed_bytes: int
    filededup_bytes: int
    semantic_bytes: int
    publish_ms: float
    retrieve_ms: float = 0.0


@dataclass
class BenchReport:
    scenario: str
    rows: list[BenchRow] = field(default_factory=list)

    def ratios(self) -> dict[str, float]:
        if not self.rows:
            return {}
        last = self.rows[-1]
        return {
            "raw_over_semantic": last.raw_bytes / last.semantic_bytes,
            "compressed_over_semantic": last.compressed_bytes / last.semantic_bytes,
            "filededup_over_semantic": last.filededup_bytes / last.semantic_bytes,
        }


def _bundle_files(path: Path) -> list[Path]:
    files = [path / MANIFEST_NAME]
    payload_dir = path / PAYLOAD_DIR
    if payload_dir.is_dir():
        files.extend(sorted(f for f in payload_dir.iterdir() if f.is_file()))
    return files


def _compressed_size(path: Path) -> int:
    # Whole-bundle compression, one stream per bundle, default level.
    compressor = zlib.compressobj()
    total = 0
    for f in _bundle_files(path):
        total += len(compressor.compress(f.read_bytes()))
    total += len(compressor.flush())
    return total


def _request_for(bundle: ImageBundle) -> RetrievalRequest:
    g = bundle.graph
    primaries = tuple(sorted(g.packages[name].identity for name in g.primaries))
    return RetrievalRequest(base=g.base, primaries=primaries, data=bundle.label if g.data_ref else None)


def run_scenario(
    scenario: str,
    seed: int,
    repo_dir: str | Path,
    spec: CorpusSpec | None = None,
    work_dir: str | Path | None = None,
    trials: int = 1,
) -> BenchReport:
    """Generate, publish, and retrieve one scenario; return the report.

    ``repo_dir`` must be a fresh (empty or absent) directory. With
    ``trials`` > 1 the whole run repeats on fresh repositories and the
    timing columns are averaged; size columns must agree across trials.
    """
    if scenario not in SCENARIOS:
        raise ValidationError(f"unknown scenario: {scenario}")
    if spec is None:
        default_counts = {"four": 4, "nineteen": 19, "clones": 40}
        spec = CorpusSpec(scenario=scenario, count=default_counts[scenario])
    report: BenchReport | None = None
    for trial in range(max(1, trials)):
        trial_repo = Path(repo_dir) if trial == 0 else Path(f"{repo_dir}.trial{trial}")
        current = _run_once(scenario, seed, trial_repo, spec, work_dir if trial == 0 else None)
        if report is None:
            report = current
        else:
            for have, new in zip(report.rows, current.rows):
                if (have.raw_bytes, have.compressed_bytes, have.filededup_bytes, have.semantic_bytes) != (
                    new.raw_bytes,
                    new.compressed_bytes,
                    new.filededup_bytes,
                    new.semantic_bytes,
                ):
                    raise ValidationError("size columns differ across trials: nondeterministic run")
                have.publish_ms += new.publish_ms
                have.retrieve_ms += new.retrieve_ms
    assert report is not None
    if trials > 1:
        for row in report.rows:
            row.publish_ms /= trials
            row.retrieve_ms /= trials
    return report


def _run_once(
    scenario: str,
    seed: int,
    repo_dir: Path,
    spec: CorpusSpec,
    work_dir: str | Path | None,
) -> BenchReport:
    repo = Repository.init(repo_dir)
    cleanup = None
    if work_dir is None:
        cleanup = tempfile.TemporaryDirectory(prefix="semvault-bench-")
        work_dir = cleanup.name
    work = Path(work_dir)
    try:
        bundles = generate_corpus(spec, seed, work / "bundles")
        # keep only paths and retrieval requests; payload bytes stream from
        # disk so large corpora do not stay resident
        items = [(b.path, b.label, _request_for(b)) for b in bundles]
        del bundles
        report = BenchReport(scenario=scenario)
        raw = compressed = 0
        seen_blobs: dict[str, int] = {}
        manifest_bytes = 0
        for i, (path, label, _) in enumerate(items, start=1):
            raw += bundle_disk_size(path)
            compressed += _compressed_size(path)
            manifest_bytes += (path / MANIFEST_NAME).stat().st_size
            for f in _bundle_files(path):
                if f.name == MANIFEST_NAME:
                    continue
                data = f.read_bytes()
                seen_blobs.setdefault(hashlib.sha256(data).hexdigest(), len(data))
            t0 = time.perf_counter()
            publish(repo, path)
            publish_ms = (time.perf_counter() - t0) * 1000.0
            report.rows.append(
                BenchRow(
                    image_index=i,
                    image_name=label,
                    raw_bytes=raw,
                    compressed_bytes=compressed,
                    filededup_bytes=sum(seen_blobs.values()) + manifest_bytes,
                    semantic_bytes=repo.repo_size(),
                    publish_ms=publish_ms,
                )
            )
        for row, (path, label, request) in zip(report.rows, items):
            out = work / "retrieved" / path.name
            t0 = time.perf_counter()
            retrieve(repo, request, out)
            row.retrieve_ms = (time.perf_counter() - t0) * 1000.0
        return report
    finally:
        if cleanup is not None:
            cleanup.cleanup()


def check_invariants(report: BenchReport, tolerance: float = INDEX_OVERHEAD_TOLERANCE) -> list[str]:
    """Violations of the scheme-ordering and monotonicity properties."""
    problems: list[str] = []
    previous: BenchRow | None = None
    for row in report.rows:
        if row.semantic_bytes * (1.0 - tolerance) > row.filededup_bytes:
            problems.append(
                f"step {row.image_index}: semantic {row.semantic_bytes} exceeds filededup {row.filededup_bytes}"
            )
        if row.filededup_bytes > row.raw_bytes:
            problems.append(f"step {row.image_index}: filededup {row.filededup_bytes} exceeds raw {row.raw_bytes}")
        if previous is not None:
            for column in ("raw_bytes", "compressed_bytes", "filededup_bytes", "semantic_bytes"):
                if getattr(row, column) < getattr(previous, column):
                    problems.append(f"step {row.image_index}: {column} decreased")
        previous = row
    if report.scenario == "clones" and report.rows:
        last = report.rows[-1]
        n = len(report.rows)
        if last.raw_bytes / last.semantic_bytes < 0.9 * n:
            problems.append(
                f"clones ratio too small: raw/semantic = {last.raw_bytes / last.semantic_bytes:.2f} < {0.9 * n:.1f}"
            )
    return problems


def emit_csv(report: BenchReport, path: str | Path) -> None:
    Path(path).write_text(emit_csv_text(report), encoding="utf-8")


def emit_csv_text(report: BenchReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow(
            [
                report.scenario,
                row.image_index,
                row.image_name,
                row.raw_bytes,
                row.compressed_bytes,
                row.filededup_bytes,
                row.semantic_bytes,
                f"{row.publish_ms:.3f}",
                f"{row.retrieve_ms:.3f}",
            ]
        )
    return out.getvalue()


def emit_table(report: BenchReport) -> str:
    lines = [f"scenario: {report.scenario}"]
    header = f"{'idx':>4} {'image':<24} {'raw':>14} {'compressed':>14} {'filededup':>14} {'semantic':>14} {'pub ms':>10} {'get ms':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in report.rows:
        lines.append(
            f"{row.image_index:>4} {row.image_name:<24} {row.raw_bytes:>14} {row.compressed_bytes:>14}"
            f" {row.filededup_bytes:>14} {row.semantic_bytes:>14} {row.publish_ms:>10.1f} {row.retrieve_ms:>10.1f}"
        )
    for name, value in report.ratios().items():
        lines.append(f"{name}: {value:.2f}")
    return "\n".join(lines) + "\n"
