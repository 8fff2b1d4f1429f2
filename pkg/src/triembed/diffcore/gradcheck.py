"""Central finite-difference gradient checking for piecewise-smooth graphs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, record_branches


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.checked > 0 and self.max_rel_error < tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-5) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _eval(fn: Callable[[], Tensor]) -> tuple[float, bytes]:
    with record_branches() as rec:
        out = fn()
    return out.item(), rec.signature()


def gradcheck(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    kink_distance: float = 1e-3,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-5,
) -> GradCheckResult:
    """Compare backward() against central differences of ``fn``.

    ``fn`` rebuilds the scalar graph from the current values of ``params``.
    A coordinate is skipped when moving it by ``kink_distance`` in either
    direction changes any ReLU/hinge/max branch, i.e. the point lies within
    ``kink_distance`` of a kink along that coordinate. ``max_coords`` caps
    the number of probed coordinates per parameter (sampled with ``rng``).
    """
    for p in params:
        p.zero_grad()
    out = fn()
    backward(out, params)
    analytic = [p.grad.copy() for p in params]
    _, base_sig = _eval(fn)

    rng = rng if rng is not None else np.random.default_rng(0)
    worst, checked, skipped = 0.0, 0, 0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for c in coords:
            orig = flat[c]
            flat[c] = orig + kink_distance
            _, sig_hi = _eval(fn)
            flat[c] = orig - kink_distance
            _, sig_lo = _eval(fn)
            if sig_hi != base_sig or sig_lo != base_sig:
                flat[c] = orig
                skipped += 1
                continue
            flat[c] = orig + step
            f_hi = fn().item()
            flat[c] = orig - step
            f_lo = fn().item()
            flat[c] = orig
            numeric = (f_hi - f_lo) / (2 * step)
            worst = max(worst, relative_error(float(ga.reshape(-1)[c]), numeric, floor))
            checked += 1
    return GradCheckResult(worst, checked, skipped)
