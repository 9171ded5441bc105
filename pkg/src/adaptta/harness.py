"""Benchmark runner: accuracy, average inferences, latency, and FPS per mode.

Latency accounting comes in two flavors. Simulated accounting prices each run
with a :class:`~adaptta.backend.LatencyModel` (per-inference cost or batch
curve, plus per-crop and per-flip charges for the views actually
materialized), which reproduces published arithmetic relationships on any
machine. Wall-clock accounting times the real per-sample pipeline with a
monotonic clock, single-threaded, and additionally reports median and p95.

Both flavors cover resize, crop, flip, and inference; image decoding happens
before the timed region and is excluded (see ``LATENCY_SCOPE``).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .backend import LatencyModel, TraceBackend
from .engine import AdapttaConfig, Mode, decide_label, run
from .imaging import Image, TransformPolicy, crop, decode_ppm, prepare_source

LATENCY_SCOPE = "resize+crop+flip+inference; image decode excluded"


@dataclass(frozen=True)
class ManifestEntry:
    """One evaluation sample: id, optional image path, ground-truth label."""

    sample_id: str
    source: str | None
    label: int


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered evaluation set with its class count."""

    entries: tuple[ManifestEntry, ...]
    num_classes: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        seen = set()
        for e in self.entries:
            if e.sample_id in seen:
                raise ValueError(f"duplicate sample id {e.sample_id!r}")
            seen.add(e.sample_id)
            if not 0 <= e.label < self.num_classes:
                raise ValueError(
                    f"sample {e.sample_id!r}: label {e.label} outside 0..{self.num_classes - 1}"
                )

    @classmethod
    def from_trace(cls, backend: TraceBackend) -> "DatasetManifest":
        """Manifest over every sample of a trace, in trace order."""
        entries = tuple(
            ManifestEntry(sample_id=sid, source=None, label=backend.label(sid))
            for sid in backend.samples
        )
        return cls(entries=entries, num_classes=backend.num_classes)

    @classmethod
    def load_tsv(cls, path, num_classes: int) -> "DatasetManifest":
        """Read ``sample_id<TAB>path<TAB>label`` lines; path "-" means no image."""
        entries = []
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            sample_id, source, label_str = parts
            try:
                label = int(label_str)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: invalid label {label_str!r}") from None
            entries.append(
                ManifestEntry(sample_id=sample_id, source=None if source == "-" else source, label=label)
            )
        return cls(entries=tuple(entries), num_classes=num_classes)


@dataclass(frozen=True)
class BenchmarkReport:
    """One evaluation run's metrics; field names match the emitted JSON/CSV."""

    mode: str
    policy: str
    tau: float
    samples: int
    top1_accuracy: float
    accuracy_gain_vs_single: float
    avg_inferences: float
    avg_latency_ms: float
    avg_fps: float
    speedup_vs_seq: float | None
    latency_source: str
    median_latency_ms: float
    p95_latency_ms: float
    latency_scope: str = LATENCY_SCOPE

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "policy": self.policy,
            "tau": self.tau,
            "samples": self.samples,
            "top1_accuracy": self.top1_accuracy,
            "accuracy_gain_vs_single": self.accuracy_gain_vs_single,
            "avg_inferences": self.avg_inferences,
            "avg_latency_ms": self.avg_latency_ms,
            "avg_fps": self.avg_fps,
            "speedup_vs_seq": self.speedup_vs_seq,
            "latency_source": self.latency_source,
            "median_latency_ms": self.median_latency_ms,
            "p95_latency_ms": self.p95_latency_ms,
            "latency_scope": self.latency_scope,
        }


@dataclass(frozen=True)
class ModeComparison:
    """Reports of the three executors over the same samples."""

    batch: BenchmarkReport
    sequential: BenchmarkReport
    adaptive: BenchmarkReport

    def reports(self) -> list[BenchmarkReport]:
        return [self.batch, self.sequential, self.adaptive]

    def to_dict(self) -> dict:
        return {
            "batch": self.batch.to_dict(),
            "sequential": self.sequential.to_dict(),
            "adaptive": self.adaptive.to_dict(),
        }


def _resolve_sample(entry: ManifestEntry, backend):
    if entry.source is None:
        if not isinstance(backend, TraceBackend):
            raise ValueError(
                f"sample {entry.sample_id!r} has no image source and the backend is not a trace"
            )
        return entry.sample_id
    return decode_ppm(Path(entry.source).read_bytes())


def _flips_among(policy: TransformPolicy, used: int) -> int:
    return sum(1 for v in policy.views[:used] if v.hflip)


def _simulated_ms(model: LatencyModel, policy: TransformPolicy, mode: Mode, inferences_used: int) -> float:
    if mode is Mode.BATCH:
        used = policy.num_views
        inference_ms = model.batch_ms(used)
    else:
        used = inferences_used
        inference_ms = used * model.per_inference_ms
    return inference_ms + used * model.per_crop_ms + _flips_among(policy, used) * model.per_flip_ms


def _sequential_ms(model: LatencyModel, policy: TransformPolicy) -> float:
    n = policy.num_views
    return n * model.per_inference_ms + n * model.per_crop_ms + policy.num_flips * model.per_flip_ms


def baseline_single(backend, manifest: DatasetManifest, policy: TransformPolicy | None = None) -> float:
    """Top-1 accuracy of the single-view baseline (view 0, the center crop).

    For trace backends this replays view 0 of every sample; for image
    backends it applies the policy's first view, which by canonical order is
    the center crop, i.e. the standard no-TTA preprocessing.
    """
    if not manifest.entries:
        raise ValueError("empty manifest")
    correct = 0
    for entry in manifest.entries:
        sample = _resolve_sample(entry, backend)
        if isinstance(sample, str):
            probs = backend.predict(sample, 0)
        else:
            if policy is None:
                raise ValueError("image evaluation needs a policy for the center view")
            src = prepare_source(sample, policy.source_side)
            probs = backend.predict(crop(src, policy.views[0]))
        correct += decide_label(probs) == entry.label
    return correct / len(manifest.entries)


def evaluate(
    backend,
    manifest: DatasetManifest,
    cfg: AdapttaConfig,
    latency: LatencyModel | None = None,
) -> BenchmarkReport:
    """Run the configured executor over every manifest sample and report.

    ``latency=None`` selects wall-clock accounting; passing a
    :class:`LatencyModel` selects simulated accounting, under which the
    report is fully deterministic for a trace backend and
    ``speedup_vs_seq`` is derived from the model's sequential counterfactual.
    """
    if not manifest.entries:
        raise ValueError("empty manifest")
    if manifest.num_classes != backend.num_classes:
        raise ValueError(
            f"manifest declares {manifest.num_classes} classes, backend has {backend.num_classes}"
        )
    per_sample_ms = []
    inference_counts = []
    correct = 0
    for entry in manifest.entries:
        sample = _resolve_sample(entry, backend)
        t0 = time.perf_counter()
        outcome = run(backend, sample, cfg)
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        if latency is not None:
            per_sample_ms.append(_simulated_ms(latency, cfg.policy, cfg.mode, outcome.inferences_used))
        else:
            per_sample_ms.append(elapsed_ms)
        inference_counts.append(outcome.inferences_used)
        correct += outcome.label == entry.label

    top1 = correct / len(manifest.entries)
    base = baseline_single(backend, manifest, cfg.policy)
    avg_ms = float(np.mean(per_sample_ms))
    if latency is not None:
        speedup = _sequential_ms(latency, cfg.policy) / avg_ms
    else:
        speedup = None
    return BenchmarkReport(
        mode=cfg.mode.value,
        policy=cfg.policy.name,
        tau=cfg.tau,
        samples=len(manifest.entries),
        top1_accuracy=top1,
        accuracy_gain_vs_single=top1 - base,
        avg_inferences=float(np.mean(inference_counts)),
        avg_latency_ms=avg_ms,
        avg_fps=1000.0 / avg_ms,
        speedup_vs_seq=speedup,
        latency_source="simulated" if latency is not None else "wall_clock",
        median_latency_ms=float(np.median(per_sample_ms)),
        p95_latency_ms=float(np.percentile(per_sample_ms, 95)),
    )


def sweep_tau(
    backend,
    manifest: DatasetManifest,
    cfg: AdapttaConfig,
    taus: Sequence[float],
    latency: LatencyModel | None = None,
) -> list[BenchmarkReport]:
    """Evaluate the adaptive executor once per threshold, reports in tau order."""
    if not taus:
        raise ValueError("taus must be non-empty")
    for t in taus:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {t}")
    return [
        evaluate(backend, manifest, replace(cfg, tau=t, mode=Mode.ADAPTIVE), latency)
        for t in sorted(taus)
    ]


def compare_modes(
    backend,
    manifest: DatasetManifest,
    policy: TransformPolicy,
    tau: float,
    latency: LatencyModel | None = None,
) -> ModeComparison:
    """Run batch, sequential, and adaptive over the same samples.

    ``speedup_vs_seq`` on every returned report is recomputed against the
    measured sequential latency, so it is meaningful under wall-clock
    accounting too.
    """
    by_mode = {}
    for mode in (Mode.BATCH, Mode.SEQUENTIAL, Mode.ADAPTIVE):
        cfg = AdapttaConfig(policy=policy, tau=tau, mode=mode)
        by_mode[mode] = evaluate(backend, manifest, cfg, latency)
    seq_ms = by_mode[Mode.SEQUENTIAL].avg_latency_ms
    batch, seq, adaptive = (
        replace(by_mode[m], speedup_vs_seq=seq_ms / by_mode[m].avg_latency_ms)
        for m in (Mode.BATCH, Mode.SEQUENTIAL, Mode.ADAPTIVE)
    )
    return ModeComparison(batch=batch, sequential=seq, adaptive=adaptive)


# --- report emission ---------------------------------------------------------


def reports_to_json(obj: BenchmarkReport | ModeComparison | Iterable[BenchmarkReport]) -> str:
    """Serialize a report, report list, or mode comparison as JSON."""
    if isinstance(obj, BenchmarkReport):
        payload = obj.to_dict()
    elif isinstance(obj, ModeComparison):
        payload = obj.to_dict()
    else:
        payload = [r.to_dict() for r in obj]
    return json.dumps(payload, indent=2)


def write_reports_csv(reports: Iterable[BenchmarkReport], f: IO[str]) -> None:
    """Write one CSV row per report; columns are the report's JSON field names."""
    rows = [r.to_dict() for r in reports]
    if not rows:
        raise ValueError("no reports to write")
    writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
