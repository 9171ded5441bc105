"""Shared test helpers: independent oracles and synthetic data builders.

The oracles here deliberately avoid the library's own code paths: prefix
averages are recomputed from scratch per prefix with ``np.mean``, and top-2
gaps come from a full sort, so they stay valid checks of the running-sum and
partition-based implementations.
"""

from __future__ import annotations

import numpy as np

from adaptta import Image, ProbVector, TraceBackend, TraceRecord

POLICY_SIZES = {"5C": 5, "10C": 10}


def sorted_gap(values) -> float:
    """Sort-based top-2 gap: the confidence-score oracle."""
    ordered = sorted(float(v) for v in values)
    return ordered[-1] - ordered[-2]


def oracle_stop_index(rows: list[ProbVector], tau: float) -> int:
    """Number of views a threshold-gated run consumes, by brute force.

    Every prefix average is recomputed independently; the first prefix whose
    sorted top-2 gap strictly exceeds ``tau`` wins, else all views are used.
    """
    n = len(rows)
    for k in range(1, n + 1):
        avg = np.mean(np.stack([r.probs for r in rows[:k]]), axis=0)
        if sorted_gap(avg) > tau:
            return k
    return n


def dirichlet_rows(rng: np.random.Generator, n: int, num_classes: int, alpha: float) -> list[ProbVector]:
    """Random probability rows; small alpha gives spiky rows, large gives flat."""
    return [ProbVector(rng.dirichlet(np.full(num_classes, alpha))) for _ in range(n)]


def synthetic_trace(
    rng: np.random.Generator,
    num_samples: int,
    num_classes: int,
    policy_name: str = "10C",
    alpha: float = 0.5,
) -> TraceBackend:
    """Trace of dirichlet rows with random true labels."""
    n = POLICY_SIZES[policy_name]
    records = []
    for i in range(num_samples):
        sid = f"s{i:04d}"
        label = int(rng.integers(num_classes))
        for k, row in enumerate(dirichlet_rows(rng, n, num_classes, alpha)):
            records.append(TraceRecord(sid, k, row, label))
    return TraceBackend.from_records(num_classes, policy_name, n, records)


def labeled_trace(
    rng: np.random.Generator,
    num_samples: int,
    num_classes: int,
    policy_name: str = "10C",
) -> TraceBackend:
    """Trace whose rows lean toward the true label with per-sample difficulty.

    Easy samples get sharply peaked rows (early exits, usually correct);
    hard ones get nearly flat rows, so accuracy and exit depth both vary.
    """
    n = POLICY_SIZES[policy_name]
    records = []
    for i in range(num_samples):
        sid = f"s{i:04d}"
        label = int(rng.integers(num_classes))
        difficulty = rng.uniform()
        alpha = np.full(num_classes, 0.3)
        alpha[label] += 8.0 * (1.0 - difficulty) ** 2
        for k in range(n):
            records.append(TraceRecord(sid, k, ProbVector(rng.dirichlet(alpha)), label))
    return TraceBackend.from_records(num_classes, policy_name, n, records)


def trace_from_rows(rows_by_sample: dict[str, list[list[float]]], labels: dict[str, int],
                    num_classes: int, policy_name: str) -> TraceBackend:
    """Trace with explicit per-view rows, for hand-crafted stop behavior."""
    n = POLICY_SIZES[policy_name]
    records = []
    for sid, rows in rows_by_sample.items():
        assert len(rows) == n, f"{sid}: need {n} rows"
        for k, row in enumerate(rows):
            records.append(TraceRecord(sid, k, ProbVector(row), labels[sid]))
    return TraceBackend.from_records(num_classes, policy_name, n, records)


def stop_at_rows(stop: int, n: int) -> list[list[float]]:
    """Two-class rows making a tau=0.8 gated run stop at view ``stop`` exactly.

    The first ``stop - 1`` rows hold the running top-2 gap at 0.78; the
    decisive ``[1, 0]`` row lifts the prefix mean to 0.89 + 0.11/stop, whose
    gap 0.78 + 0.22/stop strictly exceeds 0.8 for any stop up to 10. Views
    after the stop are unreachable and filled with a neutral row.
    """
    assert 1 <= stop <= min(n, 10)
    rows = [[0.89, 0.11]] * (stop - 1) + [[1.0, 0.0]]
    rows += [[0.5, 0.5]] * (n - stop)
    return rows


def random_image(rng: np.random.Generator, width: int, height: int) -> Image:
    arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    return Image.from_array(arr)


def smooth_image(rng: np.random.Generator, width: int, height: int) -> Image:
    """Low-frequency image, closer to natural statistics than iid noise."""
    from adaptta import resize

    base = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    return resize(Image.from_array(base), width, height)
