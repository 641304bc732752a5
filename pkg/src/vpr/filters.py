"""Temporal filtering of match hypotheses.

Two stages refine the per-frame argmin matches. The spatial continuity
check keeps a hypothesis only when the matched training indices of the
recent past move smoothly (no consecutive jump above epsilon across the
window). The sequential filter then fits a line to the recent training
indices by ordinary least squares and accepts the frame when the line's
slope angle is close enough to the expected traverse-speed angle.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from vpr.features import FormatError
from vpr.matching import MatchHypothesis


@dataclass(frozen=True)
class FilterParams:
    """Knobs for both filter stages.

    epsilon: largest allowed jump, in training frames, between the argmin
        indices of consecutive testing frames inside the window.
    window: how many consecutive index differences feed each decision
        (the window touches frames j-window .. j).
    sigma: expected slope angle, atan of the training/testing frame-rate
        ratio (pi/4 when the traverses move at the same speed).
    phi: accepted deviation from sigma, in radians.
    """

    epsilon: int = 3
    window: int = 5
    sigma: float = math.pi / 4
    phi: float = 0.1

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if not math.isfinite(self.sigma) or not -math.pi / 2 < self.sigma < math.pi / 2:
            raise ValueError(f"sigma must lie in (-pi/2, pi/2), got {self.sigma}")
        if not self.phi >= 0:
            raise ValueError(f"phi must be >= 0, got {self.phi}")


@dataclass(frozen=True)
class LinearFit:
    """Least-squares line i = alpha * j + beta over a window of matches."""

    alpha: float
    beta: float
    residual_rms: float


@dataclass(frozen=True)
class FinalMatch:
    """Outcome of the sequential filter for one testing frame."""

    test_index: int
    predicted_train_index: int
    fit: LinearFit | None
    plausible: bool
    accepted: bool
    distance: float


def spatial_continuity(
    hyps: list[MatchHypothesis], epsilon: int, window: int
) -> list[MatchHypothesis]:
    """Flag hypotheses whose recent argmin trajectory is smooth.

    Testing frame j is plausible when every consecutive jump
    |m(u-1) - m(u)| for u in {j-window+1, ..., j} is at most epsilon,
    so the decision reads frames j-window through j. Frames with an
    incomplete window (j < window) stay implausible.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    _check_sequence(hyps)
    flagged = []
    for j in range(len(hyps)):
        if j < window:
            flagged.append(dataclasses.replace(hyps[j], plausible=False))
            continue
        ok = True
        for u in range(j - window + 1, j + 1):
            if abs(hyps[u - 1].train_index - hyps[u].train_index) > epsilon:
                ok = False
                break
        flagged.append(dataclasses.replace(hyps[j], plausible=ok))
    return flagged


def fit_sequence(matches) -> LinearFit:
    """Ordinary least squares line through a window of match hypotheses.

    x is the test index and y the matched training index of each entry.
    """
    x = np.array([m.test_index for m in matches], dtype=np.float64)
    y = np.array([m.train_index for m in matches], dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"line fit needs at least 2 points, got {n}")
    sx = float(np.sum(x))
    sy = float(np.sum(y))
    sxx = float(np.sum(x * x))
    sxy = float(np.sum(x * y))
    denom = n * sxx - sx * sx
    if denom == 0.0:
        raise ValueError("degenerate fit: all test indices identical")
    alpha = (n * sxy - sx * sy) / denom
    beta = (sy - alpha * sx) / n
    resid = y - (alpha * x + beta)
    return LinearFit(alpha=alpha, beta=beta, residual_rms=float(np.sqrt(np.mean(resid * resid))))


def _round_half_away(v: float) -> int:
    return int(math.floor(v + 0.5)) if v >= 0 else int(math.ceil(v - 0.5))


def sequential_filter(
    hyps: list[MatchHypothesis],
    params: FilterParams,
    train_count: int,
) -> list[FinalMatch]:
    """Accept frames whose recent matches move at the expected speed.

    For each j >= window the line i = alpha*j + beta is fitted over the
    window+1 hypotheses ending at j; the frame is accepted when it is
    spatially plausible and |atan(alpha) - sigma| <= phi, and its
    reported training index is the fitted prediction at j, rounded half
    away from zero and clamped to [0, train_count-1]. Frames without a
    full window keep their raw argmin index and are never accepted.
    """
    _check_sequence(hyps)
    if train_count < 1:
        raise ValueError(f"train_count must be >= 1, got {train_count}")
    out = []
    for j in range(len(hyps)):
        h = hyps[j]
        if j < params.window:
            out.append(
                FinalMatch(
                    test_index=j,
                    predicted_train_index=min(max(h.train_index, 0), train_count - 1),
                    fit=None,
                    plausible=h.plausible,
                    accepted=False,
                    distance=h.distance,
                )
            )
            continue
        fit = fit_sequence(hyps[j - params.window : j + 1])
        predicted = _round_half_away(fit.alpha * j + fit.beta)
        predicted = min(max(predicted, 0), train_count - 1)
        accepted = h.plausible and abs(math.atan(fit.alpha) - params.sigma) <= params.phi
        out.append(
            FinalMatch(
                test_index=j,
                predicted_train_index=predicted,
                fit=fit,
                plausible=h.plausible,
                accepted=accepted,
                distance=h.distance,
            )
        )
    return out


def _check_sequence(hyps) -> None:
    for j, h in enumerate(hyps):
        if h.test_index != j:
            raise ValueError(
                f"hypotheses must be ordered by test index starting at 0, "
                f"position {j} holds test_index {h.test_index}"
            )


_FINAL_HEADER = [
    "test_index",
    "predicted_train_index",
    "alpha",
    "beta",
    "plausible",
    "accepted",
    "distance",
]


def write_final_matches(matches: list[FinalMatch], path) -> None:
    """CSV dump of filter output; alpha/beta are nan for short-window rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FINAL_HEADER)
        for m in matches:
            alpha = m.fit.alpha if m.fit is not None else math.nan
            beta = m.fit.beta if m.fit is not None else math.nan
            writer.writerow(
                [
                    m.test_index,
                    m.predicted_train_index,
                    "%.9g" % alpha,
                    "%.9g" % beta,
                    int(m.plausible),
                    int(m.accepted),
                    "%.9g" % m.distance,
                ]
            )


def read_final_matches(path) -> list[FinalMatch]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header != _FINAL_HEADER:
            raise FormatError(f"{path}: unexpected header {header!r}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(_FINAL_HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(_FINAL_HEADER)} fields, got {len(row)}")
            try:
                test_index = int(row[0])
                predicted = int(row[1])
                alpha = float(row[2])
                beta = float(row[3])
                plausible = bool(int(row[4]))
                accepted = bool(int(row[5]))
                distance = float(row[6])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            fit = None
            if not (math.isnan(alpha) and math.isnan(beta)):
                fit = LinearFit(alpha=alpha, beta=beta, residual_rms=math.nan)
            out.append(
                FinalMatch(
                    test_index=test_index,
                    predicted_train_index=predicted,
                    fit=fit,
                    plausible=plausible,
                    accepted=accepted,
                    distance=distance,
                )
            )
    return out
