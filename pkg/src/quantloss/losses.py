"""Scalar loss family with exact derivatives, plus the quantile-crossing penalty.

Residual convention, used everywhere in this package: ``r = prediction - target``.
Scalar evaluators return derivatives with respect to the residual; because
d r / d prediction = 1, these are also the per-example prediction gradients.
``batch_loss`` applies the mean reduction over examples, so its gradient array
is d(mean loss)/d(predictions).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

_LOG2 = math.log(2.0)


class LossKind(str, enum.Enum):
    LOG_COSH = "logcosh"
    TILTED_LOG_COSH = "tilted-logcosh"
    CHECK = "check"
    HUBER = "huber"
    MSE = "mse"
    MAE = "mae"


#: kinds with a derivative defined everywhere (check/MAE have subgradient kinks)
SMOOTH_KINDS = frozenset(
    {LossKind.LOG_COSH, LossKind.TILTED_LOG_COSH, LossKind.MSE, LossKind.HUBER}
)


@dataclass(frozen=True)
class LossSpec:
    """Selects a loss family member and its parameters.

    ``h`` scales log-cosh as logcosh(r / h); ``tau`` is the quantile marker of
    the tilted/check losses; ``delta`` is the Huber knot.
    """

    kind: LossKind
    h: float = 1.0
    tau: float = 0.5
    delta: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind is LossKind.LOG_COSH and not self.h > 0.0:
            raise ValueError(f"h must be > 0, got {self.h}")
        if self.kind in (LossKind.TILTED_LOG_COSH, LossKind.CHECK):
            if not 0.0 < self.tau < 1.0:
                raise ValueError(f"tau must be inside (0, 1), got {self.tau}")
        if self.kind is LossKind.HUBER and not self.delta > 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta}")

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        known = {"kind", "h", "tau", "delta"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown loss fields: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class LossEval:
    """Loss value with first and, where defined, second derivative in r.

    ``curvature`` is None for kinds that are not twice differentiable at the
    evaluated point (MAE, check loss, Huber exactly at the knot).
    """

    value: float
    grad: float
    curvature: float | None


def log_cosh(x):
    """Numerically stable log(cosh(x)).

    Evaluates |x| - log 2 + log1p(exp(-2|x|)); the naive form overflows near
    |x| ~ 710 in double precision.
    """
    ax = np.abs(np.asarray(x, dtype=float))
    return ax - _LOG2 + np.log1p(np.exp(-2.0 * ax))


def _sech_sq(x):
    """sech^2(x) without overflow: 4 e^{-2|x|} / (1 + e^{-2|x|})^2."""
    e = np.exp(-2.0 * np.abs(np.asarray(x, dtype=float)))
    return 4.0 * e / (1.0 + e) ** 2


def eval_loss(spec: LossSpec, residual: float) -> LossEval:
    """Evaluate one loss family member at a scalar residual."""
    r = float(residual)
    if not math.isfinite(r):
        raise ValueError(f"residual must be finite, got {residual}")
    k = spec.kind
    if k is LossKind.LOG_COSH:
        u = r / spec.h
        return LossEval(
            value=float(log_cosh(u)),
            grad=math.tanh(u) / spec.h,
            curvature=float(_sech_sq(u)) / spec.h**2,
        )
    if k is LossKind.TILTED_LOG_COSH:
        return tilted_log_cosh(r, spec.tau)
    if k is LossKind.CHECK:
        # r >= 0 uses the tau branch, matching the tilted case split
        w = spec.tau if r >= 0 else spec.tau - 1.0
        return LossEval(value=w * r, grad=w, curvature=None)
    if k is LossKind.HUBER:
        d = spec.delta
        if abs(r) < d:
            return LossEval(value=0.5 * r * r, grad=r, curvature=1.0)
        if abs(r) == d:
            return LossEval(value=0.5 * r * r, grad=r, curvature=None)
        return LossEval(value=d * (abs(r) - 0.5 * d), grad=d * math.copysign(1.0, r), curvature=0.0)
    if k is LossKind.MSE:
        # no 1/2 factor; per-example loss is (p - t)^2
        return LossEval(value=r * r, grad=2.0 * r, curvature=2.0)
    if k is LossKind.MAE:
        g = 0.0 if r == 0 else math.copysign(1.0, r)
        return LossEval(value=abs(r), grad=g, curvature=None)
    raise ValueError(f"unknown loss kind {k!r}")


def tilted_log_cosh(residual: float, tau: float) -> LossEval:
    """Asymmetric log-cosh: (1-tau) logcosh(r) for r < 0, tau logcosh(r) for r >= 0.

    Smooth surrogate for the check loss; tau = 0.5 gives exactly half of the
    symmetric log-cosh.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be inside (0, 1), got {tau}")
    r = float(residual)
    if not math.isfinite(r):
        raise ValueError(f"residual must be finite, got {residual}")
    w = tau if r >= 0 else 1.0 - tau
    return LossEval(
        value=w * float(log_cosh(r)),
        grad=w * math.tanh(r),
        curvature=w * float(_sech_sq(r)),
    )


def quantile_crossing_penalty(q) -> float:
    """Sum over rows and adjacent quantile columns of max(0, Q[:, p] - Q[:, p+1]).

    Columns must be ordered by ascending quantile level; the result is zero
    iff every row is non-decreasing.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise ValueError(f"expected a 2-d latent matrix, got shape {q.shape}")
    if q.shape[1] < 2:
        raise ValueError(f"need at least 2 quantile columns, got {q.shape[1]}")
    return float(np.maximum(0.0, q[:, :-1] - q[:, 1:]).sum())


def quantile_crossing_grad(q) -> np.ndarray:
    """Gradient of quantile_crossing_penalty with respect to the latent matrix."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[1] < 2:
        raise ValueError(f"expected a 2-d matrix with >= 2 columns, got shape {q.shape}")
    g = np.zeros_like(q)
    crossing = (q[:, :-1] - q[:, 1:]) > 0.0
    g[:, :-1] += crossing
    g[:, 1:] -= crossing
    return g


def _batch_value_grad(spec: LossSpec, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise (value, d value / d r) for a residual array."""
    k = spec.kind
    if k is LossKind.LOG_COSH:
        u = r / spec.h
        return log_cosh(u), np.tanh(u) / spec.h
    if k is LossKind.TILTED_LOG_COSH:
        w = np.where(r >= 0, spec.tau, 1.0 - spec.tau)
        return w * log_cosh(r), w * np.tanh(r)
    if k is LossKind.CHECK:
        w = np.where(r >= 0, spec.tau, spec.tau - 1.0)
        return w * r, w.astype(float)
    if k is LossKind.HUBER:
        d = spec.delta
        small = np.abs(r) <= d
        value = np.where(small, 0.5 * r * r, d * (np.abs(r) - 0.5 * d))
        grad = np.where(small, r, d * np.sign(r))
        return value, grad
    if k is LossKind.MSE:
        return r * r, 2.0 * r
    if k is LossKind.MAE:
        return np.abs(r), np.sign(r)
    raise ValueError(f"unknown loss kind {k!r}")


def batch_loss(spec: LossSpec, predictions, targets, reduction: str = "mean"):
    """Batch loss and gradient with respect to the predictions.

    Arrays may be (m,) or (m, d); multi-output rows are summed per example.
    With ``reduction="mean"`` returns (scalar mean-over-examples loss,
    gradient array shaped like predictions, already divided by m).  With
    ``reduction="none"`` returns (per-example loss array, per-element gradient
    without the 1/m factor).
    """
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: predictions {p.shape} vs targets {t.shape}")
    if p.size == 0:
        raise ValueError("empty batch")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ValueError("non-finite predictions or targets")
    value, grad = _batch_value_grad(spec, p - t)
    per_example = value if value.ndim == 1 else value.sum(axis=-1)
    if reduction == "none":
        return per_example, grad
    if reduction == "mean":
        m = per_example.shape[0]
        return float(per_example.mean()), grad / m
    raise ValueError(f"unknown reduction {reduction!r}")
