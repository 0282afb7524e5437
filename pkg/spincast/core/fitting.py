"""Fit models and a damped least-squares solver"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks, peak_widths

from ..config import K_B_MEV_PER_K
from .errors import DomainError, FitError

logger = logging.getLogger("spincast.fitting")

MAX_ITERATIONS = 200
GRADIENT_TOL = 1e-10
STALL_GRADIENT_TOL = 1e-5
LAMBDA_INIT = 1e-3
LAMBDA_MAX = 1e16


@dataclass(frozen=True)
class FitModel:
    """Parametric model y = f(x, p) with named parameters and a domain check"""

    kind: str
    param_names: Tuple[str, ...]
    param_units: Tuple[str, ...]
    function: Callable
    domain: Callable = field(repr=False, default=lambda x, p: None)
    jacobian: Optional[Callable] = field(repr=False, default=None)

    @property
    def n_params(self):
        return len(self.param_names)

    def check_domain(self, x, params):
        """Return an error message for out-of-domain input, None otherwise"""
        if len(params) != self.n_params:
            return f"{self.kind} takes {self.n_params} parameters, got {len(params)}"
        if not np.all(np.isfinite(params)):
            return "parameters must be finite"
        return self.domain(np.asarray(x, dtype=float), np.asarray(params, dtype=float))

    def evaluate(self, x, params):
        x = np.asarray(x, dtype=float)
        params = np.asarray(params, dtype=float)
        problem = self.check_domain(x, params)
        if problem:
            raise DomainError(f"{self.kind}: {problem}")
        return self.function(x, params)


def _line(x, a, x0, w):
    half = 0.5 * w
    return a * half**2 / ((x - x0) ** 2 + half**2)


def _positive(*indices, names=None):
    def check(x, p):
        for i in indices:
            if p[i] <= 0:
                return f"parameter {names[i]} must be > 0, got {p[i]}"
        return None

    return check


def _monoexp_jacobian(x, p):
    a, tau, _ = p
    decay = np.exp(-x / tau)
    return np.column_stack([decay, a * x / tau**2 * decay, np.ones_like(x)])


def _biexp_jacobian(x, p):
    a, tau_1, tau_eff = p
    slow, fast = np.exp(-x / tau_1), np.exp(-x / tau_eff)
    return np.column_stack([slow - fast, a * x / tau_1**2 * slow, -a * x / tau_eff**2 * fast])


def _arrhenius_domain(x, p):
    if np.any(x <= 0):
        return "temperatures must be > 0"
    if p[1] < 0:
        return f"prefactor must be >= 0, got {p[1]}"
    if p[2] <= 0:
        return f"activation energy must be > 0, got {p[2]}"
    return None


def _arrhenius_exp_domain(x, p):
    if np.any(x <= 0):
        return "temperatures must be > 0"
    if p[1] <= 0:
        return f"activation energy must be > 0, got {p[1]}"
    return None


def _sqrt_domain(x, p):
    if np.any(x < 0):
        return "abscissa must be >= 0"
    return None


def _damped_sinusoid(harmonics):
    names = ["A", "tau", "f", "phi", "c"]
    units = ["arb", "us", "MHz", "rad", "arb"]
    for k in range(2, harmonics + 1):
        names += [f"A_{k}", f"phi_{k}"]
        units += ["arb", "rad"]

    def function(x, p):
        envelope = np.exp(-x / p[1])
        y = p[0] * envelope * np.cos(2 * np.pi * p[2] * x + p[3]) + p[4]
        for k in range(2, harmonics + 1):
            amplitude, phase = p[5 + 2 * (k - 2)], p[6 + 2 * (k - 2)]
            y = y + amplitude * envelope * np.cos(2 * np.pi * k * p[2] * x + phase)
        return y

    kind = "damped_sinusoid" if harmonics == 1 else f"damped_sinusoid_{harmonics}"
    return FitModel(kind, tuple(names), tuple(units), function, _positive(1, names=names))


_DOUBLET_NAMES = ("a1", "x1", "w1", "a2", "x2", "w2", "c")

MODELS: Dict[str, FitModel] = {
    "lorentzian": FitModel(
        "lorentzian",
        ("a", "x0", "w", "c"),
        ("arb", "MHz", "MHz", "arb"),
        lambda x, p: _line(x, p[0], p[1], p[2]) + p[3],
        _positive(2, names=("a", "x0", "w", "c")),
    ),
    "lorentzian_doublet": FitModel(
        "lorentzian_doublet",
        _DOUBLET_NAMES,
        ("arb", "MHz", "MHz", "arb", "MHz", "MHz", "arb"),
        lambda x, p: _line(x, p[0], p[1], p[2]) + _line(x, p[3], p[4], p[5]) + p[6],
        _positive(2, 5, names=_DOUBLET_NAMES),
    ),
    "biexp_diff": FitModel(
        "biexp_diff",
        ("a", "tau_1", "tau_eff"),
        ("fraction", "us", "us"),
        lambda x, p: p[0] * (np.exp(-x / p[1]) - np.exp(-x / p[2])),
        _positive(1, 2, names=("a", "tau_1", "tau_eff")),
        _biexp_jacobian,
    ),
    "lifetime_diff": FitModel(
        "lifetime_diff",
        ("a_s", "tau_s", "a_0", "tau_0"),
        ("arb", "us", "arb", "us"),
        lambda x, p: np.abs(p[0]) * np.exp(-x / p[1]) - np.abs(p[2]) * np.exp(-x / p[3]),
        _positive(1, 3, names=("a_s", "tau_s", "a_0", "tau_0")),
    ),
    "monoexp": FitModel(
        "monoexp",
        ("a", "tau", "c"),
        ("arb", "us", "arb"),
        lambda x, p: p[0] * np.exp(-x / p[1]) + p[2],
        _positive(1, names=("a", "tau", "c")),
        _monoexp_jacobian,
    ),
    "arrhenius_amplitude": FitModel(
        "arrhenius_amplitude",
        ("c", "A", "E_a"),
        ("arb", "1", "meV"),
        lambda x, p: p[0] / (1.0 + p[1] * np.exp(-p[2] / (K_B_MEV_PER_K * x))),
        _arrhenius_domain,
    ),
    "arrhenius_exp": FitModel(
        "arrhenius_exp",
        ("a", "E_a"),
        ("arb", "meV"),
        lambda x, p: p[0] * np.exp(p[1] / (K_B_MEV_PER_K * x)),
        _arrhenius_exp_domain,
    ),
    "damped_sinusoid": _damped_sinusoid(1),
    "sqrt_linear": FitModel(
        "sqrt_linear",
        ("a", "b"),
        ("MHz/sqrt(uW)", "MHz"),
        lambda x, p: p[0] * np.sqrt(x) + p[1],
        _sqrt_domain,
    ),
}


def get_model(kind: str, harmonics: int = 1) -> FitModel:
    """Look up a model by name; damped_sinusoid accepts extra harmonics"""
    if kind == "damped_sinusoid" and harmonics > 1:
        return _damped_sinusoid(harmonics)
    if kind not in MODELS:
        raise DomainError(f"Unknown fit model {kind!r}; expected one of {sorted(MODELS)}")
    return MODELS[kind]


def evaluate(model, x, params) -> np.ndarray:
    """Model values at x; raises DomainError outside the parameter domain"""
    if isinstance(model, str):
        model = get_model(model)
    return model.evaluate(x, params)


@dataclass
class FitResult:
    model: str
    names: Tuple[str, ...]
    values: np.ndarray
    errors: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    message: str = ""

    def value(self, name):
        return float(self.values[self.names.index(name)])

    def error(self, name):
        return float(self.errors[self.names.index(name)])

    def as_dict(self):
        return {
            "model": self.model,
            "params": {
                name: {"value": float(v), "error": float(e)}
                for name, v, e in zip(self.names, self.values, self.errors)
            },
            "covariance": self.covariance.tolist(),
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "message": self.message,
        }


def numeric_jacobian(model: FitModel, x, params) -> np.ndarray:
    """Central finite differences with step max(1e-6 |p|, 1e-9)"""
    params = np.asarray(params, dtype=float)
    columns = []
    for j, p in enumerate(params):
        h = max(1e-6 * abs(p), 1e-9)
        up, down = params.copy(), params.copy()
        up[j] += h
        down[j] -= h
        columns.append((model.function(x, up) - model.function(x, down)) / (2 * h))
    return np.column_stack(columns)


def _gradient_cosine(J, r):
    """Largest cosine between a Jacobian column and the residual vector"""
    r_norm = np.linalg.norm(r)
    if r_norm == 0:
        return 0.0
    col_norms = np.linalg.norm(J, axis=0)
    safe = np.where(col_norms > 0, col_norms, 1.0)
    return float(np.max(np.abs(J.T @ r) / (safe * r_norm)))


def _covariance(J, cost, dof, absolute_sigma):
    normal = J.T @ J
    scale = 1.0 if absolute_sigma else cost / max(dof, 1)
    if np.linalg.cond(normal) > 1e14:
        return scale * np.linalg.pinv(normal), False
    try:
        inverse = np.linalg.inv(normal)
    except np.linalg.LinAlgError:
        return scale * np.linalg.pinv(normal), False
    cov = scale * inverse
    return 0.5 * (cov + cov.T), True


def fit(
    model,
    x,
    y,
    init: Sequence[float],
    sigma=None,
    max_iterations: int = MAX_ITERATIONS,
    analytic_jacobian: bool = True,
) -> FitResult:
    """Levenberg-Marquardt fit of model to (x, y)

    Damping is scaled by the diagonal of the normal matrix, multiplied by 10 on a
    rejected step and divided by 10 on an accepted one. Convergence is a gradient
    cosine below 1e-10; a stalled search is accepted below 1e-5. Failure to converge
    is reported in the result, never raised.
    """
    if isinstance(model, str):
        model = get_model(model)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(init, dtype=float).copy()

    if x.shape != y.shape or x.ndim != 1:
        raise FitError(f"x and y must be 1-D arrays of equal length, got {x.shape} and {y.shape}")
    if y.size <= model.n_params:
        raise FitError(f"{model.kind} needs more than {model.n_params} points, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise FitError("y contains non-finite values")
    problem = model.check_domain(x, p)
    if problem:
        raise DomainError(f"{model.kind} initial parameters: {problem}")

    absolute_sigma = sigma is not None
    weights = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        raise FitError("sigma must be finite and > 0")

    def residuals(params):
        return (y - model.function(x, params)) * weights

    def jacobian(params):
        if analytic_jacobian and model.jacobian is not None:
            J = model.jacobian(x, params)
        else:
            J = numeric_jacobian(model, x, params)
        return J * weights[:, None]

    r = residuals(p)
    if not np.all(np.isfinite(r)):
        raise FitError(f"{model.kind} is not finite at the initial parameters")
    cost = float(r @ r)

    lam = LAMBDA_INIT
    converged = False
    message = "maximum iterations reached"
    iterations = 0
    J = jacobian(p)

    while iterations < max_iterations:
        if cost <= 1e-30 * max(1.0, float((y * weights) @ (y * weights))):
            converged, message = True, "zero residual"
            break
        cosine = _gradient_cosine(J, r)
        if cosine <= GRADIENT_TOL:
            converged, message = True, "gradient tolerance"
            break

        iterations += 1
        normal = J.T @ J
        gradient = J.T @ r
        damping = np.maximum(np.diag(normal), 1e-12 * max(np.max(np.diag(normal)), 1e-300))
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(normal + lam * np.diag(damping), gradient)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(normal + lam * np.diag(damping), gradient, rcond=None)[0]
            trial = p + step
            if model.check_domain(x, trial) is None:
                r_trial = residuals(trial)
                cost_trial = float(r_trial @ r_trial)
                if np.isfinite(cost_trial) and cost_trial < cost:
                    p, r, cost = trial, r_trial, cost_trial
                    lam = max(lam / 10.0, 1e-15)
                    accepted = True
                    break
            lam *= 10.0

        if not accepted:
            converged = cosine <= STALL_GRADIENT_TOL
            message = "stalled at minimum" if converged else "stalled before convergence"
            break
        J = jacobian(p)

    dof = y.size - model.n_params
    covariance, invertible = _covariance(J, cost, dof, absolute_sigma)
    if not invertible:
        converged = False
        message = f"singular normal matrix (cond > 1e14) after {iterations} iterations"
    errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))

    logger.debug("%s fit: %s after %d iterations, cost %.3e", model.kind, message, iterations, cost)
    return FitResult(
        model=model.kind,
        names=model.param_names,
        values=p,
        errors=errors,
        covariance=covariance,
        residual_norm=float(np.sqrt(cost)),
        converged=converged,
        iterations=iterations,
        message=message,
    )


class PeakEstimate(NamedTuple):
    center: float
    width: float
    amplitude: float


def parabolic_peak(x, y, index: int) -> float:
    """Vertex of the parabola through the three points around index"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if index <= 0 or index >= len(y) - 1:
        return float(x[index])
    y0, y1, y2 = y[index - 1], y[index], y[index + 1]
    denominator = y0 - 2 * y1 + y2
    if denominator == 0:
        return float(x[index])
    offset = 0.5 * (y0 - y2) / denominator
    return float(x[index] + offset * (x[index + 1] - x[index]))


def extract_peak_centers(x, y, min_height: float = 0.2) -> List[PeakEstimate]:
    """Peak centers, widths and amplitudes of a spectrum

    Seeds are local maxima above min_height of the largest peak over a median
    baseline. Two seeds are refined jointly with a Lorentzian doublet, other
    counts peak by peak.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    baseline = float(np.median(y))
    signal = y - baseline
    top = signal.max() if signal.size else 0.0
    noise = 1.4826 * float(np.median(np.abs(signal)))
    if top <= 0 or top <= 5 * noise:
        return []

    indices, _ = find_peaks(signal, height=min_height * top)
    if indices.size == 0:
        return []
    step = float(np.mean(np.diff(x)))
    widths = peak_widths(signal, indices, rel_height=0.5)[0] * step
    keep = widths >= 2 * step
    indices, widths = indices[keep], widths[keep]

    seeds = [
        PeakEstimate(parabolic_peak(x, signal, i), float(w), float(signal[i]))
        for i, w in zip(indices, widths)
    ]
    if len(seeds) == 2:
        (c1, w1, a1), (c2, w2, a2) = seeds
        result = fit("lorentzian_doublet", x, y, init=[a1, c1, w1, a2, c2, w2, baseline])
        if result.converged and x[0] <= result.value("x1") <= x[-1] and x[0] <= result.value("x2") <= x[-1]:
            peaks = [
                PeakEstimate(result.value("x1"), result.value("w1"), result.value("a1")),
                PeakEstimate(result.value("x2"), result.value("w2"), result.value("a2")),
            ]
            return sorted(peaks)
        logger.debug("Doublet refinement failed (%s); falling back to single lines", result.message)

    peaks = []
    for seed in seeds:
        window = np.abs(x - seed.center) <= 3 * seed.width
        if window.sum() <= 4:
            peaks.append(seed)
            continue
        result = fit(
            "lorentzian", x[window], y[window], init=[seed.amplitude, seed.center, seed.width, baseline]
        )
        if result.converged and abs(result.value("x0") - seed.center) <= seed.width:
            peaks.append(PeakEstimate(result.value("x0"), result.value("w"), result.value("a")))
        else:
            peaks.append(seed)
    return sorted(peaks)


def biexp_argmax(tau_1: float, tau_eff: float) -> float:
    """Delay maximising exp(-t/tau_1) - exp(-t/tau_eff)"""
    if tau_1 <= 0 or tau_eff <= 0 or tau_1 == tau_eff:
        raise DomainError("Lifetimes must be > 0 and distinct")
    return float(np.log(tau_1 / tau_eff) * tau_1 * tau_eff / (tau_1 - tau_eff))


def synthetic_data(model, x, params, noise: float = 0.0, seed: int = 12345) -> np.ndarray:
    """Model values plus Gaussian noise scaled to the largest |y|"""
    y = evaluate(model, x, params)
    if noise <= 0:
        return y
    rng = np.random.default_rng(seed)
    return y + rng.normal(0.0, noise * np.max(np.abs(y)), size=y.shape)
