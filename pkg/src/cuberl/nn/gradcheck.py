"""Central finite-difference verification of tape gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tape, Tensor


def finite_difference_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    n_coords: int = 20,
    rng: np.random.Generator | None = None,
    floor: float = 1e-5,
    noise_ulps: float = 4.0,
) -> float:
    """Largest relative error between tape and central-difference gradients.

    ``f`` rebuilds the scalar output from the current parameter values.  Up to
    ``n_coords`` coordinates per parameter are probed.  The relative error is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps gradients that are
    exactly zero (a key bias under softmax, for instance) from turning
    round-off into a large relative error.

    A central difference cannot resolve slopes below ``ulp(f) / (2 h)``: when
    ``f`` is around 100, one unit in the last place already reads as a slope
    of about 7e-10.  ``noise_ulps`` such units are subtracted from
    ``|a - n|`` before dividing, so a flat coordinate is not reported as a
    mismatch just because the two evaluations of ``f`` rounded differently.

    ReLU networks are only piecewise smooth, and a step of ``h`` can straddle
    a kink.  Each coordinate is therefore also differenced with ``h / 10``;
    when the two estimates disagree by more than ``1e-6`` relative (and
    ``1e-8`` absolute, which is above the round-off of the finer step), the
    larger step is not trustworthy and the smaller one is used.  The choice
    looks only at the numeric estimates, never at the analytic value.
    """
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    with Tape() as tape:
        out = f()
    tape.backward(out)
    worst = 0.0
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        coords = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for c in coords:
            numeric, resolution = _central(f, flat, c, h, noise_ulps)
            fine, fine_res = _central(f, flat, c, h / 10, noise_ulps)
            spread = abs(numeric - fine) - resolution - fine_res
            if spread > max(1e-6 * max(abs(numeric), abs(fine)), 1e-8):
                numeric, resolution = fine, fine_res
            a = float(analytic.reshape(-1)[c])
            err = max(abs(a - numeric) - resolution, 0.0) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst


def _central(f: Callable[[], Tensor], flat: np.ndarray, c: int, h: float,
             noise_ulps: float) -> tuple[float, float]:
    orig = flat[c]
    flat[c] = orig + h
    up = float(f().data)
    flat[c] = orig - h
    down = float(f().data)
    flat[c] = orig
    resolution = noise_ulps * float(np.spacing(max(abs(up), abs(down)))) / (2 * h)
    return (up - down) / (2 * h), resolution
