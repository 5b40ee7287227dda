"""Finite-difference verification of backpropagated gradients.

The numeric side is fully independent of autograd: it perturbs parameter
payloads in place and re-runs the forward closure. Large tensors are sampled
at a fixed seeded subset of coordinates. Frozen parameters are reported with
a zero gradient and skipped numerically (freezing is an update contract, not
a claim that the loss ignores them).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
from torch import Tensor

from .kernel import ParamDict


@dataclass
class TensorCheck:
    name: str
    max_rel_error: float
    checked: int
    frozen: bool = False


@dataclass
class GradCheckReport:
    tolerance: float
    results: list[TensorCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.results), default=0.0)

    @property
    def passed(self) -> bool:
        return all(r.max_rel_error < self.tolerance for r in self.results)

    def summary(self) -> str:
        lines = [f"gradient check tolerance {self.tolerance:g}: {'PASS' if self.passed else 'FAIL'}"]
        for r in self.results:
            tag = " (frozen)" if r.frozen else ""
            lines.append(f"  {r.name}: max rel err {r.max_rel_error:.3e} over {r.checked} coords{tag}")
        return "\n".join(lines)


def check_gradients(
    forward_fn: Callable[[], Tensor],
    params: ParamDict,
    tolerance: float = 1e-5,
    h: float = 1e-5,
    samples_per_tensor: int = 6,
    seed: int = 0,
    atol: float = 1e-4,
) -> GradCheckReport:
    """Compare backprop gradients against central finite differences.

    forward_fn must be a deterministic scalar-valued closure over params.
    Coordinates where both sides fall below atol count as agreeing: a central
    difference carries rounding noise of roughly eps * |loss| / (2h), so
    derivatives near that floor cannot be compared relatively (same reason
    torch.autograd.gradcheck pairs rtol with an atol).
    """
    for p in params.values():
        if p.grad is not None:
            p.grad = None
    loss = forward_fn()
    if not torch.isfinite(loss):
        raise ValueError(f"non-finite loss {float(loss)!r}")
    if loss.requires_grad:
        loss.backward()

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        if not p.requires_grad:
            grad_mag = 0.0 if p.grad is None else float(p.grad.abs().max())
            report.results.append(TensorCheck(name, grad_mag, checked=0, frozen=True))
            continue
        grad = torch.zeros_like(p) if p.grad is None else p.grad
        flat_grad = grad.reshape(-1)
        numel = p.numel()
        if numel <= samples_per_tensor:
            coords = np.arange(numel)
        else:
            coords = rng.choice(numel, size=samples_per_tensor, replace=False)
        worst = 0.0
        data = p.data.reshape(-1)
        for idx in coords:
            idx = int(idx)
            original = data[idx].item()
            with torch.no_grad():
                data[idx] = original + h
                f_plus = float(forward_fn())
                data[idx] = original - h
                f_minus = float(forward_fn())
                data[idx] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(flat_grad[idx])
            if abs(numeric) < atol and abs(analytic) < atol:
                continue
            rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, rel)
        report.results.append(TensorCheck(name, worst, checked=len(coords)))
    return report
