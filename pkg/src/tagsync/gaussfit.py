"""Peak fitting and precision models for coincidence histograms.

The offset estimate is the center of a four-parameter Gaussian-plus-floor
model fitted to (bin center, count) pairs by damped Gauss-Newton
(Levenberg-style) least squares. A quadratic fit of offset versus bin width
extrapolates to the resolution-independent offset, and a closed-form model
predicts the attainable offset spread from pair rate and acquisition time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoPeakError, ValidationError

FWHM_SIGMA_RATIO = 2 * math.sqrt(2 * math.log(2))  # 2.3548200450309493

_MIN_PEAK_BINS = 8
_MIN_CONTRAST = 3.0
_DAMPING_STEP = 10.0


@dataclass(frozen=True)
class GaussianFitResult:
    center_ps: float
    sigma_ps: float
    amplitude: float
    baseline: float
    fwhm_ps: float
    residual_rms: float
    converged: bool
    iterations: int
    cost_history: tuple = field(default=(), repr=False, compare=False)

    def to_kv(self) -> str:
        """Key-value text report of the fit."""
        return (
            f"center_ps={self.center_ps:.6f}\n"
            f"fwhm_ps={self.fwhm_ps:.6f}\n"
            f"amplitude={self.amplitude:.6f}\n"
            f"baseline={self.baseline:.6f}\n"
            f"residual_rms={self.residual_rms:.6f}\n"
            f"converged={'true' if self.converged else 'false'}\n"
        )


@dataclass(frozen=True)
class PrecisionPrediction:
    delta_tau_prime_ps: float
    rc_cps: float
    ta_s: float
    sd_ps: float


def _model(x, amp, center, sigma, base):
    return amp * np.exp(-((x - center) ** 2) / (2.0 * sigma**2)) + base


def _initial_guess(x, y, res):
    base = float(np.median(y))
    amp = float(y.max()) - base
    center = float(x[np.argmax(y)])
    above = np.nonzero(y > base + amp / 2.0)[0]
    span = (above[-1] - above[0] + 1) * res if above.size else res
    sigma = max(span / FWHM_SIGMA_RATIO, res / FWHM_SIGMA_RATIO)
    return np.array([amp, center, sigma, base], dtype=np.float64)


def fit_gaussian(hist, weighted: bool = False, max_iter: int = 200,
                 rel_tol: float = 1e-8) -> GaussianFitResult:
    """Least-squares Gaussian-plus-baseline fit to a coincidence histogram.

    Plain (unweighted) residuals by default; ``weighted=True`` switches to
    1/max(count, 1) Poisson-style weights. Iterates damped Gauss-Newton from
    a median/argmax/half-maximum initial guess; the damping factor grows by
    10x whenever a step would increase the residual. Convergence is declared
    when the relative parameter change of an accepted step drops below
    ``rel_tol``; otherwise the result is returned with ``converged=False``.
    """
    x = hist.centers().astype(np.float64)
    y = hist.counts.astype(np.float64)
    res = float(hist.resolution_ps)

    if int(np.count_nonzero(y)) < _MIN_PEAK_BINS:
        raise NoPeakError(
            f"only {int(np.count_nonzero(y))} nonzero bins, need {_MIN_PEAK_BINS}"
        )
    base0 = float(np.median(y))
    contrast = (float(y.max()) - base0) / max(base0, 1.0)
    if contrast < _MIN_CONTRAST:
        raise NoPeakError(f"peak-to-baseline contrast {contrast:.2f} below {_MIN_CONTRAST}")

    w = 1.0 / np.maximum(y, 1.0) if weighted else np.ones_like(y)
    params = _initial_guess(x, y, res)

    def cost_of(p):
        r = _model(x, *p) - y
        return float(np.dot(w * r, r)), r

    cost, resid = cost_of(params)
    history = [cost]
    damping = 1e-3
    converged = False
    iterations = 0

    while iterations < max_iter:
        iterations += 1
        amp, center, sigma, base = params
        core = np.exp(-((x - center) ** 2) / (2.0 * sigma**2))
        jac = np.empty((x.size, 4))
        jac[:, 0] = core
        jac[:, 1] = amp * core * (x - center) / sigma**2
        jac[:, 2] = amp * core * (x - center) ** 2 / sigma**3
        jac[:, 3] = 1.0

        jw = jac * w[:, None]
        hess = jw.T @ jac
        grad = jw.T @ resid
        hess_damped = hess + damping * np.diag(np.diag(hess))
        try:
            step = np.linalg.solve(hess_damped, -grad)
        except np.linalg.LinAlgError:
            damping *= _DAMPING_STEP
            continue

        trial = params + step
        trial[2] = abs(trial[2])
        if trial[2] < 1e-6 * res:
            damping *= _DAMPING_STEP
            continue
        new_cost, new_resid = cost_of(trial)
        if new_cost <= cost:
            rel_change = float(np.linalg.norm(step)) / max(
                float(np.linalg.norm(params)), 1e-300
            )
            params, cost, resid = trial, new_cost, new_resid
            history.append(cost)
            damping = max(damping / _DAMPING_STEP, 1e-12)
            if rel_change < rel_tol:
                converged = True
                break
        else:
            damping *= _DAMPING_STEP
            if damping > 1e12:
                break

    amp, center, sigma, base = (float(v) for v in params)
    sigma = abs(sigma)
    if amp <= 0.0:
        converged = False
    if converged and not (x[0] - res <= center <= x[-1] + res):
        converged = False
    final_resid = _model(x, amp, center, sigma, base) - y
    return GaussianFitResult(
        center_ps=center,
        sigma_ps=sigma,
        amplitude=amp,
        baseline=base,
        fwhm_ps=FWHM_SIGMA_RATIO * sigma,
        residual_rms=float(np.sqrt(np.mean(final_resid**2))),
        converged=converged,
        iterations=iterations,
        cost_history=tuple(history),
    )


def fit_quadratic_offset(resolutions_ps, offsets_ps) -> tuple:
    """Ordinary least squares of offset = c0 + c1*r + c2*r^2.

    c0 is the resolution-independent offset. Needs at least four distinct
    resolutions.
    """
    r = np.asarray(resolutions_ps, dtype=np.float64)
    t = np.asarray(offsets_ps, dtype=np.float64)
    if r.size != t.size:
        raise ValidationError("resolutions and offsets must have equal length")
    if np.unique(r).size < 4:
        raise ValidationError(
            f"need >= 4 distinct resolutions, got {np.unique(r).size}"
        )
    vand = np.column_stack([np.ones_like(r), r, r * r])
    coeffs, _, rank, _ = np.linalg.lstsq(vand, t, rcond=None)
    if rank < 3:
        raise ValidationError("quadratic fit is rank deficient")
    return float(coeffs[0]), float(coeffs[1]), float(coeffs[2])


def predict_precision(delta_tau_ps: float, jitter_fwhm_ps: float,
                      rc_cps: float, ta_s: float) -> PrecisionPrediction:
    """Expected offset SD: combined correlation width over sqrt(2 * rate * time).

    The intrinsic pair-correlation width and the detector jitter combine in
    quadrature.
    """
    if rc_cps <= 0.0 or ta_s <= 0.0:
        raise ValidationError("rc_cps and ta_s must be positive")
    if delta_tau_ps < 0.0 or jitter_fwhm_ps < 0.0:
        raise ValidationError("widths must be nonnegative")
    width = math.hypot(delta_tau_ps, jitter_fwhm_ps)
    if width <= 0.0:
        raise ValidationError("combined correlation width must be positive")
    sd = width / math.sqrt(2.0 * rc_cps * ta_s)
    return PrecisionPrediction(
        delta_tau_prime_ps=width, rc_cps=float(rc_cps), ta_s=float(ta_s), sd_ps=sd
    )
