"""Classifier backends producing per-view class probabilities.

Two concrete backends are provided. ``ToyClassifier`` is a seeded
linear-softmax model over downsampled pixel intensities: deterministic,
input-dependent, and cheap, which makes it the stand-in model for tests and
end-to-end smoke runs. ``TraceBackend`` replays per-view probability rows
recorded from any real model, so evaluation protocols can run at desk scale
without a neural-network runtime.

Backends are immutable after construction; prediction is read-only and safe
to call from multiple threads.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .imaging import Image, resize

PROB_SUM_TOL = 1e-6

TRACE_POLICY_VIEWS = {"5C": 5, "10C": 10}


class TraceError(ValueError):
    """Raised when a trace file or record set violates the trace schema."""


class ProbVector:
    """Length-C vector of non-negative class probabilities summing to one.

    The sum must be within ``PROB_SUM_TOL`` of 1 and C must be at least 2;
    both are enforced at construction. The underlying array is float64 and
    read-only.
    """

    __slots__ = ("probs",)

    def __init__(self, probs: Sequence[float] | np.ndarray):
        arr = np.array(probs, dtype=np.float64, copy=True)
        if arr.ndim != 1:
            raise ValueError(f"probabilities must be one-dimensional, got shape {arr.shape}")
        if arr.size < 2:
            raise ValueError(f"need at least 2 classes, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("probabilities must be finite")
        if np.any(arr < 0.0):
            raise ValueError("probabilities must be non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1 within {PROB_SUM_TOL}")
        arr.flags.writeable = False
        self.probs = arr

    @property
    def num_classes(self) -> int:
        return self.probs.size

    def __len__(self) -> int:
        return self.probs.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbVector):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        return f"ProbVector({self.probs.tolist()!r})"


@dataclass(frozen=True)
class TraceRecord:
    """One replayable inference: probabilities of one view of one sample."""

    sample_id: str
    view_index: int
    probs: ProbVector
    true_label: int


@dataclass(frozen=True)
class LatencyModel:
    """Parametric cost model for simulated latency accounting.

    Defaults follow published embedded-CPU measurements: 53.1 ms per single
    inference, 0.8 ms per crop, 0.9 ms per flip, and a batch curve whose
    batch-5 and batch-10 totals scale at the measured 290.6/53.1 and
    569.9/53.1 ratios of the single-inference cost.
    """

    per_inference_ms: float = 53.1
    per_crop_ms: float = 0.8
    per_flip_ms: float = 0.9
    batch_curve: dict[int, float] | None = None

    _BATCH5_RATIO = 290.6 / 53.1
    _BATCH10_RATIO = 569.9 / 53.1

    def __post_init__(self) -> None:
        for name in ("per_inference_ms", "per_crop_ms", "per_flip_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        curve = self.batch_curve
        if curve is None:
            p = self.per_inference_ms
            curve = {1: p, 5: p * self._BATCH5_RATIO, 10: p * self._BATCH10_RATIO}
        else:
            curve = dict(curve)
            curve.setdefault(1, self.per_inference_ms)
        if any(ms < 0 for ms in curve.values()):
            raise ValueError("batch_curve values must be >= 0")
        if curve[1] != self.per_inference_ms:
            raise ValueError(
                f"batch_curve[1] = {curve[1]} must equal per_inference_ms = {self.per_inference_ms}"
            )
        object.__setattr__(self, "batch_curve", curve)

    def batch_ms(self, batch_size: int) -> float:
        """Total inference cost of one batched pass of ``batch_size`` views."""
        try:
            return self.batch_curve[batch_size]
        except KeyError:
            raise ValueError(
                f"batch_curve has no entry for batch size {batch_size}; "
                f"known sizes: {sorted(self.batch_curve)}"
            ) from None


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


class ImageBackend:
    """Base class for image-input classifiers: predict one view or a batch.

    ``predict_batch`` must be value-equivalent to element-wise ``predict``;
    batching only ever changes latency accounting, never results.
    """

    num_classes: int
    view_side: int

    def predict(self, img: Image) -> ProbVector:
        raise NotImplementedError

    def predict_batch(self, imgs: Sequence[Image]) -> list[ProbVector]:
        return [self.predict(img) for img in imgs]


class ToyClassifier(ImageBackend):
    """Seeded random linear map over downsampled intensities, then softmax.

    The zero image maps to zero logits and therefore a uniform output. Two
    instances with the same seed agree on every input.
    """

    def __init__(
        self,
        seed: int,
        num_classes: int,
        view_side: int,
        feature_grid: int = 8,
        gain: float = 12.0,
    ):
        if num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {num_classes}")
        if view_side < 1:
            raise ValueError(f"view_side must be positive, got {view_side}")
        self.seed = seed
        self.num_classes = num_classes
        self.view_side = view_side
        self.feature_grid = feature_grid
        n_features = feature_grid * feature_grid * 3
        rng = np.random.default_rng(seed)
        weights = rng.standard_normal((num_classes, n_features)) * (gain / math.sqrt(n_features))
        weights.flags.writeable = False
        self.weights = weights

    def _features(self, img: Image) -> np.ndarray:
        small = resize(img, self.feature_grid, self.feature_grid)
        return small.to_array().astype(np.float64).ravel() / 255.0

    def predict(self, img: Image) -> ProbVector:
        if img.width != self.view_side or img.height != self.view_side:
            raise ValueError(
                f"backend expects {self.view_side}x{self.view_side} views, "
                f"got {img.width}x{img.height}"
            )
        logits = self.weights @ self._features(img)
        return ProbVector(_softmax(logits))


class TraceBackend:
    """Replays recorded per-view probabilities keyed by (sample_id, view_index)."""

    def __init__(
        self,
        num_classes: int,
        policy_name: str,
        num_views: int,
        rows: dict[tuple[str, int], ProbVector],
        labels: dict[str, int],
        sample_order: tuple[str, ...],
    ):
        self.num_classes = num_classes
        self.policy_name = policy_name
        self.num_views = num_views
        self._rows = rows
        self._labels = labels
        self._samples = sample_order

    @classmethod
    def from_records(
        cls,
        num_classes: int,
        policy_name: str,
        num_views: int,
        records: Iterable[TraceRecord],
    ) -> "TraceBackend":
        """Validate a record set and build the replay backend.

        Every sample must cover view indices 0..num_views-1 exactly once,
        all rows must share ``num_classes``, and labels must be consistent
        per sample and within [0, num_classes).
        """
        if num_classes < 2:
            raise TraceError(f"need at least 2 classes, got {num_classes}")
        expected_views = TRACE_POLICY_VIEWS.get(policy_name)
        if expected_views is None:
            raise TraceError(f"unknown trace policy {policy_name!r} (expected '5C' or '10C')")
        if num_views != expected_views:
            raise TraceError(f"policy {policy_name!r} implies {expected_views} views, got {num_views}")

        rows: dict[tuple[str, int], ProbVector] = {}
        labels: dict[str, int] = {}
        order: list[str] = []
        for rec in records:
            key = (rec.sample_id, rec.view_index)
            if not 0 <= rec.view_index < num_views:
                raise TraceError(f"sample {rec.sample_id!r}: view index {rec.view_index} outside 0..{num_views - 1}")
            if rec.probs.num_classes != num_classes:
                raise TraceError(
                    f"sample {rec.sample_id!r} view {rec.view_index}: "
                    f"{rec.probs.num_classes} classes, expected {num_classes}"
                )
            if not 0 <= rec.true_label < num_classes:
                raise TraceError(f"sample {rec.sample_id!r}: label {rec.true_label} outside 0..{num_classes - 1}")
            if key in rows:
                raise TraceError(f"duplicate record for sample {rec.sample_id!r} view {rec.view_index}")
            if rec.sample_id in labels:
                if labels[rec.sample_id] != rec.true_label:
                    raise TraceError(f"sample {rec.sample_id!r}: conflicting labels")
            else:
                labels[rec.sample_id] = rec.true_label
                order.append(rec.sample_id)
            rows[key] = rec.probs
        if not order:
            raise TraceError("trace contains no records")
        for sid in order:
            missing = [k for k in range(num_views) if (sid, k) not in rows]
            if missing:
                raise TraceError(f"sample {sid!r}: missing views {missing}")
        return cls(num_classes, policy_name, num_views, rows, labels, tuple(order))

    @property
    def samples(self) -> tuple[str, ...]:
        """Sample ids in first-appearance order."""
        return self._samples

    def label(self, sample_id: str) -> int:
        try:
            return self._labels[sample_id]
        except KeyError:
            raise KeyError(f"unknown sample {sample_id!r}") from None

    def predict(self, sample_id: str, view_index: int) -> ProbVector:
        """Stored probability row of one view of one sample."""
        try:
            return self._rows[(sample_id, view_index)]
        except KeyError:
            raise KeyError(f"no record for sample {sample_id!r} view {view_index}") from None

    def predict_batch(self, sample_id: str, view_indices: Sequence[int]) -> list[ProbVector]:
        return [self.predict(sample_id, k) for k in view_indices]


# --- trace file I/O (JSON Lines) --------------------------------------------


def _require(obj: dict, key: str, types: type | tuple, where: str):
    if key not in obj:
        raise TraceError(f"{where}: missing key {key!r}")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise TraceError(f"{where}: key {key!r} has invalid type {type(value).__name__}")
    return value


def load_trace(path: str | os.PathLike) -> TraceBackend:
    """Load a JSON Lines trace file into a replay backend.

    Line 1 is the header object ``{"classes": C, "policy": ..., "num_views": N}``;
    each following line is one record ``{"sample": ..., "view": ..., "label": ...,
    "probs": [...]}``. Any schema violation raises :class:`TraceError` with the
    offending line number.
    """
    with open(path, "r", encoding="utf-8") as f:
        return read_trace(f)


def read_trace(f: IO[str]) -> TraceBackend:
    """Parse an open trace stream; see :func:`load_trace`."""
    header_line = f.readline()
    if not header_line.strip():
        raise TraceError("line 1: missing header")
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as e:
        raise TraceError(f"line 1: invalid JSON header: {e}") from None
    if not isinstance(header, dict):
        raise TraceError("line 1: header must be a JSON object")
    num_classes = _require(header, "classes", int, "header")
    policy_name = _require(header, "policy", str, "header")
    num_views = _require(header, "num_views", int, "header")

    def records():
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            where = f"line {lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise TraceError(f"{where}: invalid JSON: {e}") from None
            if not isinstance(row, dict):
                raise TraceError(f"{where}: record must be a JSON object")
            sample = _require(row, "sample", str, where)
            view = _require(row, "view", int, where)
            label = _require(row, "label", int, where)
            probs = _require(row, "probs", list, where)
            try:
                pv = ProbVector(probs)
            except (ValueError, TypeError) as e:
                raise TraceError(f"{where}: invalid probability row: {e}") from None
            yield TraceRecord(sample_id=sample, view_index=view, probs=pv, true_label=label)

    try:
        return TraceBackend.from_records(num_classes, policy_name, num_views, records())
    except TraceError:
        raise
    except ValueError as e:
        raise TraceError(str(e)) from None


def write_trace(
    f: IO[str],
    num_classes: int,
    policy_name: str,
    num_views: int,
    records: Iterable[TraceRecord],
) -> None:
    """Write header and records as JSON Lines.

    Floats go through ``json`` default serialization (``repr``), which prints
    every digit needed for an exact round-trip, so rewriting the same records
    reproduces the file byte for byte.
    """
    header = {"classes": num_classes, "policy": policy_name, "num_views": num_views}
    f.write(json.dumps(header) + "\n")
    for rec in records:
        row = {
            "sample": rec.sample_id,
            "view": rec.view_index,
            "label": rec.true_label,
            "probs": rec.probs.probs.tolist(),
        }
        f.write(json.dumps(row) + "\n")
