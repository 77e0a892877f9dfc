"""Multi-exponential decay fitting and error-rate extraction.

Averaged survival curves follow a sum of geometric modes, some of which may
be complex when the error channel rotates coherences between the retained
subspaces. Fitting proceeds in two stages: a Hankel matrix pencil on the
uniformly spaced length grid proposes decay rates, then bounded nonlinear
least squares refines rates and amplitudes together, with complex rates tied
into conjugate pairs so the model stays real. The model order is chosen by
the Bayesian information criterion.

Scalar summaries derived from a fit: the error per gate, a conservative
bound that inflates it to cover decay the protocol cannot attribute to the
measured subspace, and interleaved-run estimates with algebraic bounds.
Uncertainty comes from a sequence-level bootstrap.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import SequenceResult, VarianceCurve
from .exceptions import ConfigError, IntegrityError, NumericalError

__all__ = [
    "DecaySample",
    "DecayFit",
    "IrbEstimate",
    "VarianceShapeFit",
    "MultiExponentialDecay",
    "VarianceShapeModel",
    "fit_decay",
    "error_per_gate",
    "safe_error_bound",
    "irb_estimate",
    "fit_variance_shape",
    "samples_from_results",
    "bootstrap_error_ci",
    "fit_report",
]

UNIT_MODE_TOL = 1e-6

_PAIR_TOL = 1e-9      # imaginary parts below this count as real modes
_PENCIL_RCOND = 1e-13  # singular-value ratio below this means rank deficient
_RSS_FLOOR = 1e-24     # per-point floor keeps BIC finite on exact fits
_SNAP_TOL = 1e-9       # rates this close to the unit circle get snapped onto it
_AMPLITUDE_CAP = 5.0   # survival weights live in [0, 1]; beyond this the mode
                       # is fitting noise through a column the grid cannot see
_VISIBILITY = 3.0      # a mode must rise above this many median stderrs
                       # somewhere on the grid to count as evidenced


@dataclass(frozen=True)
class DecaySample:
    """Survival statistics pooled over all sequences of one length."""

    y: int
    phi_mean: float
    phi_stderr: float
    n_sequences: int = 1

    def __post_init__(self) -> None:
        if self.y < 0:
            raise IntegrityError(f"negative sequence length {self.y}")
        if not 0.0 <= self.phi_mean <= 1.0 + UNIT_MODE_TOL:
            raise IntegrityError(f"mean survival {self.phi_mean} outside [0, 1]")
        if not np.isfinite(self.phi_stderr) or self.phi_stderr < 0.0:
            raise IntegrityError(f"bad standard error {self.phi_stderr}")
        if self.n_sequences < 1:
            raise IntegrityError("sample must pool at least one sequence")


@dataclass(frozen=True)
class DecayFit:
    """Fitted model phi(y) = sum_i a_i * lambda_i**y.

    Modes are (amplitude, rate) pairs. Complex rates always appear together
    with their conjugates, so predictions are real. ``unit_mode_present``
    records whether a rate sits within ``UNIT_MODE_TOL`` of one, which is
    what a curve that plateaus at long lengths produces.
    """

    modes: tuple[tuple[complex, complex], ...]
    residual_rms: float
    model_order: int
    unit_mode_present: bool
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.model_order != len(self.modes):
            raise IntegrityError("model_order must equal the number of modes")
        if not np.isfinite(self.residual_rms) or self.residual_rms < 0.0:
            raise IntegrityError(f"bad residual rms {self.residual_rms}")
        for _, lam in self.modes:
            if abs(lam) > 1.0 + UNIT_MODE_TOL:
                raise IntegrityError(f"decay rate {lam} outside the unit disk")
        _check_conjugate_pairs(self.modes)
        unit = any(abs(lam - 1.0) <= UNIT_MODE_TOL for _, lam in self.modes)
        if unit != self.unit_mode_present:
            raise IntegrityError("unit_mode_present inconsistent with modes")

    def predict(self, lengths: Iterable[float]) -> np.ndarray:
        """Evaluate the fitted curve at the given sequence lengths."""
        ys = np.asarray(list(lengths) if not isinstance(lengths, np.ndarray) else lengths, dtype=float)
        return _eval_modes(self.modes, ys)


@dataclass(frozen=True)
class IrbEstimate:
    """Interleaved-gate error estimate with algebraic bounds.

    The point estimate is the difference of the combined and reference
    errors per gate; the bounds are (sqrt(e_c) -+ sqrt(e_r))**2. When the
    combined error falls below the reference (a statistical fluctuation)
    the point estimate and lower bound are clamped to zero and a
    diagnostic records the clamp.
    """

    eps_ref: float
    eps_combined: float
    eps_v_point: float
    eps_v_lower: float
    eps_v_upper: float
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ordered = self.eps_v_lower <= self.eps_v_point <= self.eps_v_upper
        if not ordered:
            raise IntegrityError("estimate bounds must bracket the point value")


def _check_conjugate_pairs(modes: Sequence[tuple[complex, complex]]) -> None:
    claimed = set()
    for i, (a, lam) in enumerate(modes):
        if abs(lam.imag) <= _PAIR_TOL or i in claimed:
            continue
        partner = next(
            (
                j
                for j, (b, mu) in enumerate(modes)
                if j != i
                and j not in claimed
                and abs(mu - lam.conjugate()) <= 1e-8
                and abs(b - a.conjugate()) <= 1e-8 * max(1.0, abs(a))
            ),
            None,
        )
        if partner is None:
            raise IntegrityError("complex modes must occur in conjugate pairs")
        claimed.update((i, partner))


def _eval_modes(modes: Sequence[tuple[complex, complex]], ys: np.ndarray) -> np.ndarray:
    amps = np.array([a for a, _ in modes], dtype=complex)
    lams = np.array([lam for _, lam in modes], dtype=complex)
    return np.real(np.power(lams[None, :], ys[:, None]) @ amps)


def _prepare(
    samples: Sequence[DecaySample],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, bool]:
    """Sort by length, validate the uniform grid, and build fit weights.

    The trailing flag says whether the weights carry real spread estimates
    (1/stderr) or are the unit fallback for single-sequence data.
    """
    ordered = sorted(samples, key=lambda s: s.y)
    y = np.array([s.y for s in ordered], dtype=float)
    if np.unique(y).size != y.size:
        raise ConfigError("duplicate sequence lengths in fit input")
    steps = np.diff(y)
    if steps.size and np.any(np.abs(steps - steps[0]) > 1e-9):
        raise ConfigError(
            "sequence lengths must form a uniform grid; the rate-candidate "
            "pencil has no interpolation support"
        )
    step = float(steps[0]) if steps.size else 1.0
    phi = np.array([s.phi_mean for s in ordered], dtype=float)
    stderr = np.array([s.phi_stderr for s in ordered], dtype=float)
    calibrated = bool(np.all(stderr > 0.0))
    if calibrated:
        weights = 1.0 / stderr
    else:
        # single-sequence runs carry no spread estimate; weight uniformly
        weights = np.ones_like(phi)
    return y, phi, weights, step, calibrated


def _pencil_candidates(values: np.ndarray, order: int) -> np.ndarray:
    """Rate**step candidates from a rank-truncated Hankel pencil."""
    m = values.size
    cols = m // 2
    if cols < order or m - cols < order:
        raise NumericalError(f"grid too short for pencil order {order}")
    window = np.lib.stride_tricks.sliding_window_view(values, cols + 1)
    y0, y1 = window[:, :-1], window[:, 1:]
    u, s, vt = np.linalg.svd(y0, full_matrices=False)
    if s[0] <= 0.0 or s[order - 1] < _PENCIL_RCOND * s[0]:
        raise NumericalError(f"Hankel pencil is rank deficient at order {order}")
    # eigenvalues of pinv(y0) @ y1 restricted to the leading rank-r block
    reduced = (u[:, :order].T @ y1 @ vt[:order].T) / s[:order, None]
    return np.linalg.eigvals(reduced)


def _roots_from_pencil(z: np.ndarray, step: float) -> np.ndarray:
    lams = np.empty(z.shape, dtype=complex)
    for i, zi in enumerate(z):
        if abs(zi.imag) <= _PAIR_TOL and zi.real < 0.0 and step != 1.0:
            # keep a negative real candidate real instead of taking the
            # principal root, which would break conjugate pairing
            lams[i] = -((-zi.real) ** (1.0 / step))
        else:
            lams[i] = zi ** (1.0 / step)
    mags = np.abs(lams)
    return np.where(mags > 1.0, lams / mags, lams)


def _linear_amplitudes(
    y: np.ndarray, phi: np.ndarray, weights: np.ndarray, lams: np.ndarray
) -> np.ndarray:
    design = np.power(lams[None, :], y[:, None])
    coeffs, *_ = np.linalg.lstsq(
        design * weights[:, None], (phi * weights).astype(complex), rcond=None
    )
    return coeffs


def _classify(
    amps: np.ndarray, lams: np.ndarray
) -> tuple[list[tuple[float, float]], list[tuple[complex, complex]], list[str]]:
    """Split candidates into real modes and conjugate-pair representatives."""
    reals: list[tuple[float, float]] = []
    pairs: list[tuple[complex, complex]] = []
    diagnostics: list[str] = []
    negatives = {i for i in range(lams.size) if lams[i].imag < -_PAIR_TOL}
    for i in range(lams.size):
        if abs(lams[i].imag) <= _PAIR_TOL:
            reals.append((float(amps[i].real), float(lams[i].real)))
            continue
        if lams[i].imag < 0.0:
            continue
        partner = next(
            (j for j in negatives if abs(lams[j] - lams[i].conjugate()) <= 1e-8),
            None,
        )
        if partner is None:
            diagnostics.append("unpaired complex candidate demoted to a real mode")
            reals.append((float(amps[i].real), float(lams[i].real)))
            continue
        negatives.remove(partner)
        pairs.append((0.5 * (amps[i] + amps[partner].conjugate()), lams[i]))
    for j in negatives:
        diagnostics.append("unpaired complex candidate demoted to a real mode")
        reals.append((float(amps[j].real), float(lams[j].real)))
    return reals, pairs, diagnostics


def _refine(
    y: np.ndarray,
    phi: np.ndarray,
    weights: np.ndarray,
    reals: list[tuple[float, float]],
    pairs: list[tuple[complex, complex]],
) -> tuple[tuple[tuple[complex, complex], ...], float, list[str]]:
    """Weighted nonlinear refinement with rates projected into the unit disk."""
    x0: list[float] = []
    lower: list[float] = []
    upper: list[float] = []
    for a, lam in reals:
        x0 += [a, min(max(lam, -1.0), 1.0)]
        lower += [-np.inf, -1.0]
        upper += [np.inf, 1.0]
    for a, lam in pairs:
        x0 += [a.real, a.imag, min(abs(lam), 1.0), abs(np.angle(lam))]
        lower += [-np.inf, -np.inf, 0.0, 0.0]
        upper += [np.inf, np.inf, 1.0, np.pi]
    n_real = len(reals)

    def residual(params: np.ndarray) -> np.ndarray:
        total = np.zeros_like(phi)
        k = 0
        for _ in range(n_real):
            total = total + params[k] * np.power(params[k + 1], y)
            k += 2
        for _ in range(len(pairs)):
            a_re, a_im, mag, angle = params[k : k + 4]
            lam = mag * np.exp(1j * angle)
            total = total + 2.0 * np.real((a_re + 1j * a_im) * np.power(lam, y))
            k += 4
        return (total - phi) * weights

    def jacobian(params: np.ndarray) -> np.ndarray:
        cols = np.empty((y.size, params.size))
        k = 0
        for _ in range(n_real):
            a, lam = params[k], params[k + 1]
            cols[:, k] = np.power(lam, y) * weights
            cols[:, k + 1] = a * y * np.power(lam, y - 1) * weights
            k += 2
        for _ in range(len(pairs)):
            a_re, a_im, mag, angle = params[k : k + 4]
            amp = a_re + 1j * a_im
            powered = np.power(mag * np.exp(1j * angle), y)
            cols[:, k] = 2.0 * powered.real * weights
            cols[:, k + 1] = -2.0 * powered.imag * weights
            cols[:, k + 2] = (
                2.0 * np.real(amp * y * np.power(mag, y - 1) * np.exp(1j * angle * y)) * weights
            )
            cols[:, k + 3] = -2.0 * y * np.imag(amp * powered) * weights
            k += 4
        return cols

    result = least_squares(
        residual,
        np.asarray(x0, dtype=float),
        jac=jacobian,
        bounds=(np.asarray(lower), np.asarray(upper)),
        method="trf",
        x_scale="jac",
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        # identifiable fits converge in tens of steps; the cap only trims
        # over-parametrized orders wandering flat valleys, which BIC rejects
        # on their residual anyway
        max_nfev=40 * len(x0) + 60,
    )
    diagnostics = []
    if result.status == 0:
        diagnostics.append("refinement stopped at the evaluation cap")
    sol = result.x
    real_lams = [float(sol[2 * i + 1]) for i in range(n_real)]
    pair_lams = [
        sol[k + 2] * complex(np.cos(sol[k + 3]), np.sin(sol[k + 3]))
        for k in range(2 * n_real, sol.size, 4)
    ]

    # Amplitudes are linear given the rates, so a direct solve can only
    # lower the residual. Rates parked just inside the unit circle by the
    # optimizer's boundary nudge are also tried snapped onto it.
    best = _assemble(y, phi, weights, real_lams, pair_lams)
    snapped_r = [np.copysign(1.0, lam) if 0.0 < 1.0 - abs(lam) <= _SNAP_TOL else lam for lam in real_lams]
    snapped_p = [lam / abs(lam) if 0.0 < 1.0 - abs(lam) <= _SNAP_TOL else lam for lam in pair_lams]
    if snapped_r != real_lams or snapped_p != pair_lams:
        candidate = _assemble(y, phi, weights, snapped_r, snapped_p)
        if candidate[1] <= best[1] * (1.0 + 1e-12):
            best = candidate
    modes, rss = best
    return modes, rss, diagnostics


def _assemble(
    y: np.ndarray,
    phi: np.ndarray,
    weights: np.ndarray,
    real_lams: list[float],
    pair_lams: list[complex],
) -> tuple[tuple[tuple[complex, complex], ...], float]:
    """Solve the conditionally linear amplitudes and package modes."""
    columns = [np.power(lam, y) for lam in real_lams]
    for lam in pair_lams:
        powered = np.power(lam, y)
        columns.append(2.0 * powered.real)
        columns.append(-2.0 * powered.imag)
    design = np.stack(columns, axis=1) * weights[:, None]
    sol, *_ = np.linalg.lstsq(design, phi * weights, rcond=None)
    modes: list[tuple[complex, complex]] = [
        (complex(sol[i]), complex(lam)) for i, lam in enumerate(real_lams)
    ]
    for j, lam in enumerate(pair_lams):
        a = complex(sol[len(real_lams) + 2 * j], sol[len(real_lams) + 2 * j + 1])
        modes.append((a, lam))
        modes.append((a.conjugate(), lam.conjugate()))
    rss = float(np.sum((design @ sol - phi * weights) ** 2))
    return tuple(modes), rss


def _fit_single_order(
    y: np.ndarray, phi: np.ndarray, weights: np.ndarray, step: float, order: int
) -> list[tuple[tuple[tuple[complex, complex], ...], float, list[str]]]:
    """Refined candidates for one order, one per starting point."""
    starts = [_roots_from_pencil(_pencil_candidates(phi, order), step)]
    if order >= 2:
        # every exact survival curve carries a unit rate (the transition
        # matrix is column stochastic), but under noise the pencil merges
        # it into a neighbour; a second start pins it explicitly
        try:
            shorter = _roots_from_pencil(_pencil_candidates(phi, order - 1), step)
        except NumericalError:
            pass
        else:
            starts.append(np.append(shorter, 1.0 + 0.0j))
    fits = []
    for start in starts:
        amps = _linear_amplitudes(y, phi, weights, start)
        reals, pairs, diagnostics = _classify(amps, start)
        modes, rss, refine_diags = _refine(y, phi, weights, reals, pairs)
        fits.append((modes, rss, diagnostics + refine_diags))
    return fits


def _rejection_reason(
    modes: tuple[tuple[complex, complex], ...],
    y: np.ndarray,
    weights: np.ndarray,
    step: float,
    calibrated: bool,
) -> str | None:
    """Why a refined candidate cannot describe survival data, if it cannot."""
    peak = max(abs(a) for a, _ in modes)
    if peak > _AMPLITUDE_CAP:
        return f"amplitude {peak:.2f} is no survival weight"
    if any(
        abs(lam.imag) > _PAIR_TOL and abs(lam) >= 1.0 - _SNAP_TOL
        for _, lam in modes
    ):
        # survival curves decay; a non-real rate on the unit circle is
        # the refiner parked at its magnitude bound, aliasing noise
        return "oscillatory mode pinned to the unit circle"
    if any(abs(np.angle(lam)) > np.pi / step + 1e-12 for _, lam in modes):
        # a grid with spacing s only resolves phases up to pi/s; any
        # rate outside that cone is an alias of one inside it
        return "rate phase beyond the grid Nyquist limit"
    if calibrated:
        floor = _VISIBILITY * float(np.median(1.0 / weights))
        reach = min(
            float(np.max(np.abs(a) * np.abs(lam) ** y)) for a, lam in modes
        )
        if reach < floor:
            return "a mode never rises above the noise floor"
    return None


def _fallback_order_one(
    y: np.ndarray, phi: np.ndarray, weights: np.ndarray, step: float
) -> tuple[tuple[tuple[complex, complex], ...], float, list[str]]:
    safe = np.abs(phi[:-1]) > 1e-12
    if np.any(safe):
        ratio = float(np.median(phi[1:][safe] / phi[:-1][safe]))
    else:
        ratio = 0.5
    lam0 = min(max(ratio, 1e-6), 1.0) ** (1.0 / step)
    a0 = phi[0] / lam0 ** y[0]
    return _refine(y, phi, weights, [(a0, lam0)], [])


def fit_decay(samples: Sequence[DecaySample], max_order: int) -> DecayFit:
    """Fit a sum of geometric modes to pooled survival data.

    A Hankel matrix pencil on the uniform length grid supplies rate
    candidates for each order from 1 to ``max_order``, a bounded nonlinear
    least-squares pass (weights 1/stderr**2, unit when any spread estimate
    is missing) refines amplitudes and rates jointly, and BIC picks the
    order. Orders the pencil cannot support are skipped, as are orders
    carrying a mode the data cannot evidence: an amplitude far outside
    the survival range, a rate phase the grid spacing cannot resolve,
    or, when spread estimates are available, a contribution that never
    rises above the noise floor anywhere on the grid. If no order
    survives, an order-1 fit is returned with a
    diagnostic. Callers should cap
    ``max_order`` at the number of distinct decay rates their model can
    produce (3**n_qubits for the protocol here).

    Raises ConfigError for non-uniform length grids or too few samples.
    """
    if max_order < 1:
        raise ConfigError("max_order must be at least 1")
    needed = 2 * max_order + 1
    if len(samples) < needed:
        raise ConfigError(
            f"need at least {needed} samples for order {max_order}, got {len(samples)}"
        )
    y, phi, weights, step, calibrated = _prepare(samples)

    candidates = []
    diagnostics: list[str] = []
    for order in range(1, max_order + 1):
        try:
            attempts = _fit_single_order(y, phi, weights, step, order)
        except NumericalError as exc:
            diagnostics.append(f"order {order}: {exc}")
            continue
        survivors = []
        reasons: list[str] = []
        for modes, rss, start_diags in attempts:
            reason = _rejection_reason(modes, y, weights, step, calibrated)
            if reason is not None:
                if reason not in reasons:
                    reasons.append(reason)
                continue
            survivors.append((rss, modes, start_diags))
        if not survivors:
            for reason in reasons:
                diagnostics.append(f"order {order}: {reason}; rejected")
            continue
        rss, modes, order_diags = min(survivors, key=lambda item: item[0])
        n = y.size
        if calibrated:
            # with real spread estimates the weighted rss is a chi-square
            bic = rss + 2 * order * np.log(n)
        else:
            bic = n * np.log(max(rss, n * _RSS_FLOOR) / n) + 2 * order * np.log(n)
        candidates.append((bic, order, modes, order_diags))
    if candidates:
        candidates.sort(key=lambda item: (item[0], item[1]))
        _, _, modes, order_diags = candidates[0]
        diagnostics.extend(order_diags)
    else:
        modes, _, fallback_diags = _fallback_order_one(y, phi, weights, step)
        diagnostics.append("rank-deficient pencil at every order; order-1 fallback")
        diagnostics.extend(fallback_diags)

    residual_rms = float(np.sqrt(np.mean((_eval_modes(modes, y) - phi) ** 2)))
    unit = any(abs(lam - 1.0) <= UNIT_MODE_TOL for _, lam in modes)
    return DecayFit(
        modes=modes,
        residual_rms=residual_rms,
        model_order=len(modes),
        unit_mode_present=unit,
        diagnostics=tuple(diagnostics),
    )


def _epg_from_modes(modes: Sequence[tuple[complex, complex]]) -> float:
    total = sum(a for a, _ in modes)
    weighted = sum(a * lam for a, lam in modes)
    if abs(total) < 1e-9:
        raise NumericalError("degenerate fit: mode amplitudes sum to zero")
    ratio = weighted / total
    if abs(ratio.imag) > 1e-8:
        raise NumericalError("mode ratio is not real; conjugate pairing is broken")
    return 1.0 - ratio.real


def error_per_gate(fit: DecayFit) -> float:
    """Average error rate: one minus the amplitude-weighted mean rate.

    Invariant under permutation of modes. Conjugate pairing keeps the
    imaginary residual below 1e-8; anything larger raises NumericalError,
    as does an amplitude sum near zero (a degenerate fit).
    """
    return _epg_from_modes(fit.modes)


def safe_error_bound(fit: DecayFit, n_qubits: int) -> float:
    """Inflate the fitted error to cover decay invisible to the fit.

    Modes the readout cannot distinguish can hide at most a 2**-n fraction
    of the true error, so dividing by 1 - 2**-n gives a bound that stays
    above the true per-gate error.
    """
    if n_qubits < 1:
        raise ConfigError("n_qubits must be at least 1")
    return error_per_gate(fit) / (1.0 - 2.0 ** (-n_qubits))


def irb_estimate(ref_fit: DecayFit, int_fit: DecayFit) -> IrbEstimate:
    """Estimate the interleaved gate's own error from paired fits."""
    eps_ref = error_per_gate(ref_fit)
    eps_combined = error_per_gate(int_fit)
    diagnostics: list[str] = []
    ref = max(eps_ref, 0.0)
    combined = max(eps_combined, 0.0)
    if ref != eps_ref or combined != eps_combined:
        diagnostics.append("negative fitted error clamped to zero for the bounds")
    point = combined - ref
    if point < 0.0:
        diagnostics.append("combined error below reference; point estimate clamped to zero")
        point = 0.0
    # clamps cover the zero-reference rounding edge and the fluctuation case
    lower = min((np.sqrt(combined) - np.sqrt(ref)) ** 2, point)
    upper = max((np.sqrt(combined) + np.sqrt(ref)) ** 2, point)
    return IrbEstimate(
        eps_ref=eps_ref,
        eps_combined=eps_combined,
        eps_v_point=point,
        eps_v_lower=float(lower),
        eps_v_upper=float(upper),
        diagnostics=tuple(diagnostics),
    )


class VarianceShapeFit(NamedTuple):
    """Result triple for the variance shape fit."""

    c: float
    kappa: float
    r_squared: float


def _shape_fit(lengths: np.ndarray, variances: np.ndarray) -> VarianceShapeFit:
    if lengths.size < 4:
        raise ConfigError("variance shape fit needs at least 4 points")
    positive = variances > 0.0
    if positive.sum() >= 2:
        # the model is linear in log(variance / y); use that as the seed
        slope, intercept = np.polyfit(
            lengths[positive], np.log(variances[positive] / lengths[positive]), 1
        )
        c0, kappa0 = float(np.exp(intercept)), float(-slope)
    else:
        c0, kappa0 = max(float(variances.max()), 1e-30), 1.0 / float(lengths.max())

    def residual(params: np.ndarray) -> np.ndarray:
        c, kappa = params
        return c * lengths * np.exp(-kappa * lengths) - variances

    result = least_squares(
        residual,
        np.array([c0, kappa0]),
        bounds=(np.array([0.0, -np.inf]), np.array([np.inf, np.inf])),
        method="trf",
        x_scale="jac",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    c, kappa = result.x
    rss = float(np.sum(residual(result.x) ** 2))
    tss = float(np.sum((variances - variances.mean()) ** 2))
    if tss <= 1e-300:
        r_squared = 1.0 if rss <= 1e-300 else 0.0
    else:
        r_squared = 1.0 - rss / tss
    return VarianceShapeFit(float(c), float(kappa), r_squared)


def fit_variance_shape(curve: VarianceCurve) -> VarianceShapeFit:
    """Fit variance(y) = c * y * exp(-kappa * y) to a variance curve.

    Returns (c, kappa, r_squared) where r_squared is computed on the raw
    variance values. The prefactor c tracks the channel infidelity and
    collapses to zero for error-free runs; modes that do not decay
    contribute nothing to the spread, so only the decaying part shapes
    the curve.
    """
    lengths = np.asarray(curve.lengths, dtype=float)
    variances = np.asarray(curve.variances, dtype=float)
    return _shape_fit(lengths, variances)


def samples_from_results(results: Iterable[SequenceResult]) -> list[DecaySample]:
    """Pool per-sequence survivals into one DecaySample per length."""
    groups: dict[int, list[float]] = {}
    for result in results:
        groups.setdefault(int(result.y), []).append(float(result.survival))
    samples = []
    for y in sorted(groups):
        values = np.asarray(groups[y])
        spread = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
        samples.append(
            DecaySample(
                y=y,
                phi_mean=float(values.mean()),
                phi_stderr=spread,
                n_sequences=int(values.size),
            )
        )
    return samples


def bootstrap_error_ci(
    results: Iterable[SequenceResult],
    fit: DecayFit,
    replicates: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """95% confidence interval for error_per_gate by sequence bootstrap.

    Sequences are resampled with replacement within each length and the
    model is refitted at the point fit's fixed order, warm-started from
    its modes so every replicate optimizes in the same basin. Returns the
    2.5/97.5 percentiles of the per-gate error.
    """
    if replicates < 10:
        raise ConfigError("too few bootstrap replicates for a 95% interval")
    reals0 = [
        (float(a.real), float(lam.real))
        for a, lam in fit.modes
        if abs(lam.imag) <= _PAIR_TOL
    ]
    pairs0 = [(a, lam) for a, lam in fit.modes if lam.imag > _PAIR_TOL]
    groups: dict[int, list[float]] = {}
    for result in results:
        groups.setdefault(int(result.y), []).append(float(result.survival))
    if len(groups) < 2 * fit.model_order + 1:
        raise ConfigError("too few distinct lengths for the fitted model order")
    lengths = sorted(groups)
    pools = [np.asarray(groups[y]) for y in lengths]
    rng = np.random.default_rng(seed)

    estimates = []
    for _ in range(replicates):
        samples = []
        for y, pool in zip(lengths, pools):
            picks = pool[rng.integers(0, pool.size, size=pool.size)]
            spread = float(picks.std(ddof=1) / np.sqrt(picks.size)) if picks.size > 1 else 0.0
            samples.append(
                DecaySample(
                    y=y,
                    phi_mean=float(min(picks.mean(), 1.0)),
                    phi_stderr=spread,
                    n_sequences=int(picks.size),
                )
            )
        y_grid, phi, weights, _, _ = _prepare(samples)
        try:
            modes, _, _ = _refine(y_grid, phi, weights, reals0, pairs0)
            estimates.append(_epg_from_modes(modes))
        except NumericalError:
            continue
    if len(estimates) < replicates // 2:
        raise NumericalError("bootstrap refits failed in more than half the replicates")
    low, high = np.percentile(estimates, [2.5, 97.5])
    return float(low), float(high)


def fit_report(
    fit: DecayFit, n_qubits: int, confidence: tuple[float, float] | None = None
) -> dict:
    """JSON-ready summary of a decay fit."""
    return {
        "model_order": fit.model_order,
        "modes": [
            {
                "a_re": float(a.real),
                "a_im": float(a.imag),
                "lambda_re": float(lam.real),
                "lambda_im": float(lam.imag),
            }
            for a, lam in fit.modes
        ],
        "residual_rms": float(fit.residual_rms),
        "error_per_gate": error_per_gate(fit),
        "safe_error_bound": safe_error_bound(fit, n_qubits),
        "confidence": {
            "bootstrap_ci_95": list(confidence) if confidence is not None else None
        },
    }


class MultiExponentialDecay(RegressorMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`fit_decay`.

    ``X`` holds sequence lengths (one column or one dimension), ``y`` the
    mean survivals. ``sample_weight`` follows the usual squared-loss
    convention, so it maps to 1/stderr**2.
    """

    def __init__(self, max_order: int = 3):
        self.max_order = max_order

    def fit(self, X, y, sample_weight=None) -> "MultiExponentialDecay":
        lengths = self._lengths(check_array(X, ensure_2d=False, dtype=float))
        phi = check_array(y, ensure_2d=False, dtype=float)
        if phi.ndim != 1 or phi.size != lengths.size:
            raise ConfigError("y must be one survival value per length")
        if sample_weight is None:
            spreads = np.zeros_like(phi)
        else:
            weight = check_array(sample_weight, ensure_2d=False, dtype=float)
            if np.any(weight <= 0.0) or weight.size != phi.size:
                raise ConfigError("sample_weight must be positive, one per sample")
            spreads = 1.0 / np.sqrt(weight)
        samples = [
            DecaySample(y=length, phi_mean=float(p), phi_stderr=float(s))
            for length, p, s in zip(lengths, phi, spreads)
        ]
        self.fit_ = fit_decay(samples, self.max_order)
        self.modes_ = self.fit_.modes
        self.model_order_ = self.fit_.model_order
        self.residual_rms_ = self.fit_.residual_rms
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "fit_")
        lengths = check_array(X, ensure_2d=False, dtype=float)
        return self.fit_.predict(np.ravel(lengths))

    @staticmethod
    def _lengths(arr: np.ndarray) -> np.ndarray:
        flat = np.ravel(arr)
        rounded = np.rint(flat)
        if np.any(np.abs(flat - rounded) > 1e-9):
            raise ConfigError("sequence lengths must be integers")
        return rounded.astype(int)


class VarianceShapeModel(RegressorMixin, BaseEstimator):
    """Scikit-learn style wrapper around the variance shape fit."""

    def fit(self, X, y) -> "VarianceShapeModel":
        lengths = np.ravel(check_array(X, ensure_2d=False, dtype=float))
        variances = check_array(y, ensure_2d=False, dtype=float)
        if variances.ndim != 1 or variances.size != lengths.size:
            raise ConfigError("y must be one variance value per length")
        shape = _shape_fit(lengths, variances)
        self.c_ = shape.c
        self.kappa_ = shape.kappa
        self.r_squared_ = shape.r_squared
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "c_")
        lengths = np.ravel(check_array(X, ensure_2d=False, dtype=float))
        return self.c_ * lengths * np.exp(-self.kappa_ * lengths)
