"""
Attention scoring functions between the target vector y and one column g.

These back the comparison methods; production weights come from the
least-squares solve in weighting.regression.
"""

import numpy as np

from autodiff.graph import ShapeMismatchError


class DegenerateScoreError(ValueError):
    pass


def _pair(y, g) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if y.shape != g.shape:
        raise ShapeMismatchError(f"Score vectors differ in length: {y.size} and {g.size}")
    return y, g


def score_dot(y, g) -> float:
    y, g = _pair(y, g)
    return float(y @ g)


def score_cosine(y, g) -> float:
    y, g = _pair(y, g)
    y_norm = np.linalg.norm(y)
    g_norm = np.linalg.norm(g)
    if y_norm == 0.0 or g_norm == 0.0:
        raise DegenerateScoreError("Cosine score is undefined for a zero vector")
    return float(np.clip((y @ g) / (y_norm * g_norm), -1.0, 1.0))


def score_pearson(y, g) -> float:
    """Centered cosine, so adding a constant to y or g leaves the score unchanged."""
    y, g = _pair(y, g)
    y_centered = y - y.mean()
    g_centered = g - g.mean()
    y_norm = np.linalg.norm(y_centered)
    g_norm = np.linalg.norm(g_centered)
    if y_norm == 0.0 or g_norm == 0.0:
        raise DegenerateScoreError("Pearson score is undefined for a zero-variance vector")
    return float(np.clip((y_centered @ g_centered) / (y_norm * g_norm), -1.0, 1.0))


def softmax_weights(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(scores)):
        raise ValueError("softmax_weights needs finite scores")
    shifted = np.exp(scores - scores.max())
    # entries far below the maximum would underflow to exactly zero
    return np.maximum(shifted / shifted.sum(), np.finfo(np.float64).tiny)
