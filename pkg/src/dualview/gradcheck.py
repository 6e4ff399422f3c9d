"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    passed: bool
    worst_rel_error: float
    tolerance: float
    checked: int = 0
    excluded: int = 0
    per_input: list = field(default_factory=list)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: worst relative error {self.worst_rel_error:.3e} "
                f"(tol {self.tolerance:.0e}, {self.checked} checked, {self.excluded} excluded)")


def _rel_err(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], tolerance: float = 1e-3,
               eps: float = 1e-5, max_coords: int | None = 200, kink_width: float = 0.0,
               kink_inputs: Sequence[int] = (), seed: int = 0) -> GradCheckReport:
    """Compare the tape's gradients of scalar ``fn(*tensors)`` to central differences.

    Everything runs in float64. ``kink_inputs`` marks inputs whose coordinates
    within ``kink_width`` of zero sit on a non-differentiable point; those are
    reported as excluded rather than compared. ``max_coords`` caps the number of
    sampled coordinates per input.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a.copy(), requires_grad=True, dtype=np.float64) for a in arrays]
    out = fn(*tensors)
    out.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    rng = np.random.default_rng(seed)
    worst, checked, excluded = 0.0, 0, 0
    per_input = []
    for k, base in enumerate(arrays):
        flat_idx = np.arange(base.size)
        if max_coords is not None and base.size > max_coords:
            flat_idx = rng.choice(base.size, size=max_coords, replace=False)
        scale = max(np.abs(analytic[k]).max(), 1e-6)
        input_worst = 0.0
        for i in flat_idx:
            if k in kink_inputs and abs(base.flat[i]) <= kink_width:
                excluded += 1
                continue
            plus, minus = base.copy(), base.copy()
            plus.flat[i] += eps
            minus.flat[i] -= eps
            f_plus = _eval(fn, arrays, k, plus)
            f_minus = _eval(fn, arrays, k, minus)
            numeric = (f_plus - f_minus) / (2 * eps)
            # tiny components are compared against the input's gradient scale
            err = _rel_err(float(analytic[k].flat[i]), numeric, 1e-3 * scale)
            input_worst = max(input_worst, err)
            checked += 1
        per_input.append(input_worst)
        worst = max(worst, input_worst)
    return GradCheckReport(worst < tolerance, worst, tolerance, checked, excluded, per_input)


def _eval(fn, arrays, k, replacement) -> float:
    ts = [Tensor(replacement if j == k else a, dtype=np.float64) for j, a in enumerate(arrays)]
    return float(fn(*ts).data)
