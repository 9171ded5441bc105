"""TTA executors: adaptive early-exit plus the static sequential/batch baselines.

The adaptive executor feeds views to the classifier one at a time, keeps a
running class-wise average of the probability vectors, and stops as soon as
the confidence score (gap between the two highest averaged probabilities)
strictly exceeds the configured threshold. If no prefix clears the threshold
it degenerates to the sequential baseline, bit for bit: both paths accumulate
in the same order and divide once at the end.

Samples are either :class:`~adaptta.imaging.Image` values (live view
generation through an image backend) or sample-id strings (replay through a
:class:`~adaptta.backend.TraceBackend`). View transforms in adaptive mode are
lazy: a view is cropped and flipped only if the loop actually reaches it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .backend import ImageBackend, ProbVector, TraceBackend
from .imaging import Image, TransformPolicy, crop, prepare_source

Sample = Union[Image, str]


class Mode(str, Enum):
    SEQUENTIAL = "sequential"
    BATCH = "batch"
    ADAPTIVE = "adaptive"


class InferenceError(RuntimeError):
    """Backend failure during a run, annotated with the failing view index."""

    def __init__(self, view_index: int, message: str):
        super().__init__(f"view {view_index}: {message}")
        self.view_index = view_index


@dataclass(frozen=True)
class AdapttaConfig:
    """Execution configuration: crop policy, confidence threshold, mode."""

    policy: TransformPolicy
    tau: float = 0.8
    mode: Mode = Mode.ADAPTIVE

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")


@dataclass(frozen=True)
class AggregationState:
    """Running sum of probability vectors; the average is taken on demand.

    Keeping the raw sum in float64 and dividing only when asked avoids the
    drift of incremental-mean updates and makes exhausted adaptive runs agree
    exactly with the sequential baseline.
    """

    total: np.ndarray
    count: int

    @classmethod
    def empty(cls, num_classes: int) -> "AggregationState":
        if num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {num_classes}")
        return cls(total=np.zeros(num_classes, dtype=np.float64), count=0)

    def average(self) -> np.ndarray:
        if self.count < 1:
            raise ValueError("no views aggregated yet")
        return self.total / self.count


def aggregate(state: AggregationState, p: ProbVector) -> AggregationState:
    """Fold one per-view probability vector into the running average."""
    if p.num_classes != state.total.size:
        raise ValueError(f"expected {state.total.size} classes, got {p.num_classes}")
    return AggregationState(total=state.total + p.probs, count=state.count + 1)


def confidence_score(avg: ProbVector | np.ndarray | Sequence[float]) -> float:
    """Gap between the largest and second-largest entries of the average.

    Ranges over [0, 1] for probability vectors; exact ties at the top yield 0.
    """
    arr = avg.probs if isinstance(avg, ProbVector) else np.asarray(avg, dtype=np.float64)
    if arr.size < 2:
        raise ValueError(f"need at least 2 classes, got {arr.size}")
    part = np.partition(arr, arr.size - 2)
    return float(part[-1] - part[-2])


def decide_label(avg: ProbVector | np.ndarray | Sequence[float]) -> int:
    """Index of the maximum entry; ties break toward the lowest class index."""
    arr = avg.probs if isinstance(avg, ProbVector) else np.asarray(avg, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty probability vector")
    return int(np.argmax(arr))


@dataclass(frozen=True)
class PredictionOutcome:
    """Result of one executor run over one sample."""

    label: int
    confidence: float
    inferences_used: int
    per_view_probs: tuple[ProbVector, ...]
    avg_probs: ProbVector


# --- view providers ----------------------------------------------------------


class _ImageViews:
    """Lazy view generation from a decoded image through an image backend."""

    def __init__(self, backend: ImageBackend, img: Image, policy: TransformPolicy):
        if policy.view_side != backend.view_side:
            raise ValueError(
                f"policy emits {policy.view_side}px views but backend expects {backend.view_side}px"
            )
        self._backend = backend
        self._policy = policy
        self._src = prepare_source(img, policy.source_side)

    def probs(self, k: int) -> ProbVector:
        return self._backend.predict(crop(self._src, self._policy.views[k]))

    def probs_batch(self) -> list[ProbVector]:
        views = [crop(self._src, spec) for spec in self._policy.views]
        return self._backend.predict_batch(views)


class _TraceViews:
    """Replay of recorded rows; the policy indexes into the trace's view grid."""

    def __init__(self, backend: TraceBackend, sample_id: str, policy: TransformPolicy):
        n = policy.num_views
        if n > backend.num_views:
            raise ValueError(
                f"policy {policy.name!r} needs {n} views but trace holds {backend.num_views}"
            )
        if n < backend.num_views and (policy.name, backend.policy_name) != ("5C", "10C"):
            # 5C is by construction the unflipped prefix of 10C; any other
            # shorter-than-trace policy has no defined view correspondence.
            raise ValueError(
                f"policy {policy.name!r} ({n} views) does not match trace policy "
                f"{backend.policy_name!r} ({backend.num_views} views)"
            )
        self._backend = backend
        self._sample_id = sample_id
        self._n = n

    def probs(self, k: int) -> ProbVector:
        return self._backend.predict(self._sample_id, k)

    def probs_batch(self) -> list[ProbVector]:
        return self._backend.predict_batch(self._sample_id, range(self._n))


def _make_views(backend, sample: Sample, policy: TransformPolicy):
    if isinstance(sample, Image):
        if not isinstance(backend, ImageBackend):
            raise TypeError(f"{type(backend).__name__} cannot classify image samples")
        return _ImageViews(backend, sample, policy)
    if isinstance(sample, str):
        if not isinstance(backend, TraceBackend):
            raise TypeError(f"{type(backend).__name__} cannot replay sample ids")
        return _TraceViews(backend, sample, policy)
    raise TypeError(f"sample must be an Image or a sample id, got {type(sample).__name__}")


# --- executors ---------------------------------------------------------------


def run_adaptta(backend, sample: Sample, cfg: AdapttaConfig) -> PredictionOutcome:
    """Adaptive run: stop at the first prefix whose confidence score exceeds tau.

    The comparison is strict (score == tau continues), the gate is evaluated
    after every inference including the first, and a run that exhausts all
    views returns exactly what :func:`run_static` in sequential mode would.
    """
    if cfg.mode is not Mode.ADAPTIVE:
        raise ValueError(f"run_adaptta requires adaptive mode, got {cfg.mode.value}")
    views = _make_views(backend, sample, cfg.policy)
    state = AggregationState.empty(backend.num_classes)
    collected: list[ProbVector] = []
    for k in range(cfg.policy.num_views):
        try:
            p = views.probs(k)
        except Exception as e:
            raise InferenceError(k, str(e)) from e
        collected.append(p)
        state = aggregate(state, p)
        avg = state.average()
        score = confidence_score(avg)
        if score > cfg.tau:
            break
    return PredictionOutcome(
        label=decide_label(avg),
        confidence=score,
        inferences_used=state.count,
        per_view_probs=tuple(collected),
        avg_probs=ProbVector(avg),
    )


def run_static(backend, sample: Sample, cfg: AdapttaConfig) -> PredictionOutcome:
    """Static run: always evaluate every view, sequentially or as one batch.

    Sequential and batch modes return identical values; they differ only in
    how the harness accounts latency.
    """
    if cfg.mode not in (Mode.SEQUENTIAL, Mode.BATCH):
        raise ValueError(f"run_static requires sequential or batch mode, got {cfg.mode.value}")
    views = _make_views(backend, sample, cfg.policy)
    if cfg.mode is Mode.BATCH:
        probs = views.probs_batch()
    else:
        probs = [views.probs(k) for k in range(cfg.policy.num_views)]
    state = AggregationState.empty(backend.num_classes)
    for p in probs:
        state = aggregate(state, p)
    avg = state.average()
    return PredictionOutcome(
        label=decide_label(avg),
        confidence=confidence_score(avg),
        inferences_used=state.count,
        per_view_probs=tuple(probs),
        avg_probs=ProbVector(avg),
    )


def run(backend, sample: Sample, cfg: AdapttaConfig) -> PredictionOutcome:
    """Dispatch to the executor matching ``cfg.mode``."""
    if cfg.mode is Mode.ADAPTIVE:
        return run_adaptta(backend, sample, cfg)
    return run_static(backend, sample, cfg)
