"""Central finite-difference gradient checking.

``gradcheck`` only ever calls the loss as a black box: it perturbs one
coordinate at a time and compares ``(f(t + d) - f(t - d)) / 2d`` with the
analytic gradient that the loss function reports at the unperturbed point.
Run it in float64 with dropout disabled or masks frozen.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

REL_FLOOR = 1e-8


@dataclass
class TensorCheck:
    max_rel_error: float
    argmax: tuple
    analytic: float
    numeric: float
    checked: int


@dataclass
class GradCheckReport:
    step: float
    tol: float
    tensors: dict = field(default_factory=dict)

    @property
    def max_rel_error(self):
        return max((t.max_rel_error for t in self.tensors.values()), default=0.0)

    @property
    def passed(self):
        return self.max_rel_error < self.tol

    def summary(self):
        lines = [f"step={self.step:g} tol={self.tol:g} -> {'PASS' if self.passed else 'FAIL'}"]
        for name, t in self.tensors.items():
            lines.append(
                f"  {name:<24} max_rel={t.max_rel_error:.3e} at {t.argmax} "
                f"(analytic={t.analytic:.6e}, numeric={t.numeric:.6e}, coords={t.checked})"
            )
        return "\n".join(lines)

    def to_dict(self):
        return {
            "step": self.step,
            "tol": self.tol,
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "tensors": {
                k: {
                    "max_rel_error": v.max_rel_error,
                    "argmax": list(v.argmax),
                    "analytic": v.analytic,
                    "numeric": v.numeric,
                    "checked": v.checked,
                }
                for k, v in self.tensors.items()
            },
        }


def relative_error(analytic, numeric):
    a, n = np.abs(analytic), np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), REL_FLOOR)


def gradcheck(loss_fn, params, step=1e-5, tol=1e-5, max_coords=2000, seed=0, value_fn=None):
    """Compare analytic and central-difference gradients for every tensor in ``params``.

    ``loss_fn(params) -> (loss, grads)`` where ``grads`` has the keys of
    ``params``. Tensors are perturbed in place and restored. Tensors with more
    than ``max_coords`` entries are checked on a random coordinate subset.

    ``value_fn(params) -> loss``, when given, replaces ``loss_fn`` for the
    finite differences. The difference quotient is formed in the precision of
    the returned value, so a value function that evaluates in extended
    precision lowers the rounding floor of the numeric gradient.
    """
    _, analytic = loss_fn(params)
    if value_fn is None:
        value_fn = lambda p: loss_fn(p)[0]  # noqa: E731
    value = lambda p: np.asarray(value_fn(p))[()]  # noqa: E731
    if value(params) != value(params):
        raise ContractError("loss function is not deterministic; disable dropout or freeze masks")
    rng = np.random.default_rng(seed)
    report = GradCheckReport(step=step, tol=tol)
    for name, theta in params.items():
        flat = theta.reshape(-1)
        if not np.shares_memory(flat, theta):
            raise ContractError(f"parameter {name!r} must be contiguous to perturb in place")
        g_an = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        g_num = np.empty(coords.size)
        for c, idx in enumerate(coords):
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = value(params)
            flat[idx] = orig - step
            f_minus = value(params)
            flat[idx] = orig
            g_num[c] = (f_plus - f_minus) / (2 * step)
        if coords.size == 0:
            continue
        err = relative_error(g_an[coords], g_num)
        worst = int(np.argmax(err))
        report.tensors[name] = TensorCheck(
            max_rel_error=float(err[worst]),
            argmax=tuple(int(i) for i in np.unravel_index(coords[worst], theta.shape)),
            analytic=float(g_an[coords[worst]]),
            numeric=float(g_num[worst]),
            checked=int(coords.size),
        )
    return report
