"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .tensor import backward, fresh_tape, no_grad


@dataclass
class GradCheckReport:
    """Per-parameter worst relative error between analytic and FD gradients."""

    per_param: dict = field(default_factory=dict)
    max_rel_err: float = 0.0

    def passed(self, tol):
        return self.max_rel_err <= tol


def grad_check(f, params, eps=1e-5):
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must be a deterministic closure over ``params`` (a dict name ->
    Tensor with requires_grad) returning a scalar Tensor.  Parameter storage
    is perturbed in place for the FD probes and restored bit-exactly.
    Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ContractError(f"grad_check eps {eps} outside [1e-7, 1e-3]")

    def run():
        with fresh_tape(), no_grad():
            return float(f().data)

    if run() != run():
        raise ContractError("f is not deterministic between forward passes")

    tensors = list(params.values())
    with fresh_tape():
        loss = f()
        backward(loss, tensors)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradCheckReport()
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = run()
            flat[i] = orig - eps
            f_minus = run()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = a_flat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
        report.per_param[name] = worst
        if worst > report.max_rel_err:
            report.max_rel_err = worst
    return report
