"""Finite-difference verification of analytic gradients.

Central differences with h = 1e-5 at float64 resolve true gradients to
roughly 1e-9 absolute, so a relative-error gate of 1e-4 has ample
margin for any gradient of sane magnitude. Coordinates whose analytic
and numerical values are both below ``atol`` count as agreeing.

ReLU makes the loss only piecewise smooth, and batch norm centers
preactivations at zero, so a small fraction of probes straddle a kink
where central differences measure an average of two slopes rather
than the derivative. The probed function may therefore return a
fingerprint of its active ReLU pattern alongside its value; probes
whose two evaluations disagree on the fingerprint sit on a kink and
are skipped (and counted, so callers can bound how much the guard is
doing).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ujscc.nn.layers import Param


def numerical_gradient(
    f: Callable[[], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Full central-difference gradient of scalar-valued f w.r.t. x (in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = _value(f())
        flat[i] = orig - h
        fm = _value(f())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def _value(result):
    return result[0] if isinstance(result, tuple) else result


def _tag(result):
    return result[1] if isinstance(result, tuple) else None


def _rel_err(a: float, n: float, floor: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


@dataclass
class GradcheckReport:
    max_rel_err: float = 0.0
    checked: int = 0
    skipped: int = 0
    worst: str = ""
    per_param: dict = field(default_factory=dict)

    def passed(self, rtol: float = 1e-4) -> bool:
        return self.max_rel_err < rtol


def gradcheck_params(
    f: Callable[[], float | tuple[float, object]],
    params: list[Param],
    analytic: list[np.ndarray],
    rng: np.random.Generator,
    samples: int = 24,
    h: float = 1e-5,
    denom_floor: float = 1e-7,
) -> GradcheckReport:
    """Compare analytic gradients against central differences.

    For each parameter, up to ``samples`` coordinates are drawn without
    replacement and probed with +-h; f() must be a pure function of the
    current parameter values. f may return (value, fingerprint); probes
    whose +-h fingerprints differ cross a nonsmooth point and are
    skipped rather than measured.

    The relative error divides by ``max(|analytic|, |numeric|,
    denom_floor)``: central differences of a loss of magnitude L carry
    absolute noise around eps*L/h, so gradients below that floor cannot
    be certified in relative terms, only bounded. Callers checking an
    O(1) loss should keep denom_floor a few decades above eps*L/h.
    """
    report = GradcheckReport()
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        aflat = np.asarray(a).reshape(-1)
        n_coords = min(samples, flat.size)
        idx = (
            np.arange(flat.size)
            if flat.size <= samples
            else rng.choice(flat.size, size=n_coords, replace=False)
        )
        worst_here = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            rp = f()
            flat[i] = orig - h
            rm = f()
            flat[i] = orig
            if _tag(rp) != _tag(rm):
                report.skipped += 1
                continue
            num = (_value(rp) - _value(rm)) / (2.0 * h)
            err = _rel_err(aflat[i], num, denom_floor)
            worst_here = max(worst_here, err)
            report.checked += 1
            if err > report.max_rel_err:
                report.max_rel_err = err
                report.worst = f"{p.name}[{i}]: analytic={aflat[i]:.6g} numeric={num:.6g}"
        report.per_param[p.name] = worst_here
    return report
