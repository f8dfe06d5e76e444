"""Nonlinear impulse responses via forward iteration with relaxed shocks.

The impact perturbation replaces the structural innovation eps_1t by
eps_1t + delta * rho(eps_1t) and both paths are iterated forward with the
same innovations; the response is the average shocked-minus-baseline
difference. A closed-form moving-average recursion is provided as the
linear oracle.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import (
    LagPolynomial,
    ModelSpec,
    SimPath,
    iterate_paths,
)

__all__ = [
    "RelaxationFn",
    "ShockSpec",
    "Compatibility",
    "IrfResult",
    "IncompatibleShockError",
    "SupportWarning",
    "relax_eval",
    "check_compatibility",
    "shocked_path",
    "population_irf",
    "estimated_irf",
    "linear_irf",
    "linearized_reduction",
]

SINGULARITY_GUARD = 1e-12


class IncompatibleShockError(ValueError):
    """The relaxation function cannot keep the shocked innovation in support."""


class SupportWarning(RuntimeWarning):
    """A non-relaxed shock may push the impact outside the bounded support."""


@dataclass(frozen=True)
class RelaxationFn:
    """Shock relaxation map rho: innovation support -> [0, 1].

    ``symmetric_bump(c, alpha)`` is 1{|e| < c} exp(1 + (|e/c|^alpha - 1)^-1),
    ``interval_bump(a, b, alpha)`` the analogous bump on [a, b], and
    ``constant_one`` the classical non-relaxed shock (unbounded support).
    """

    kind: str
    c: float | None = None
    alpha: float | None = None
    a: float | None = None
    b: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "constant_one":
            return
        if self.kind == "symmetric_bump":
            if self.c is None or self.alpha is None or self.c <= 0 or self.alpha <= 0:
                raise ValueError("symmetric bump needs half-width c > 0 and exponent alpha > 0")
            return
        if self.kind == "interval_bump":
            if self.a is None or self.b is None or self.alpha is None or self.b <= self.a:
                raise ValueError("interval bump needs a < b and exponent alpha > 0")
            return
        raise ValueError(f"unknown relaxation kind {self.kind!r}")

    @classmethod
    def constant_one(cls) -> "RelaxationFn":
        return cls(kind="constant_one")

    @classmethod
    def symmetric_bump(cls, c: float, alpha: float) -> "RelaxationFn":
        return cls(kind="symmetric_bump", c=c, alpha=alpha)

    @classmethod
    def interval_bump(cls, a: float, b: float, alpha: float) -> "RelaxationFn":
        return cls(kind="interval_bump", a=a, b=b, alpha=alpha)

    def __call__(self, e: np.ndarray | float) -> np.ndarray | float:
        return relax_eval(self, e)

    def describe(self) -> str:
        if self.kind == "constant_one":
            return "constant_one"
        if self.kind == "symmetric_bump":
            return f"bump(c={self.c:g},alpha={self.alpha:g})"
        return f"bump(a={self.a:g},b={self.b:g},alpha={self.alpha:g})"


def relax_eval(rho: RelaxationFn, e: np.ndarray | float) -> np.ndarray | float:
    """Evaluate rho; the boundary value is 0 by continuity (1e-12 guard)."""
    scalar = np.ndim(e) == 0
    e_arr = np.atleast_1d(np.asarray(e, dtype=float))
    if rho.kind == "constant_one":
        out = np.ones_like(e_arr)
        return float(out[0]) if scalar else out
    if rho.kind == "symmetric_bump":
        u = np.abs(e_arr / rho.c) ** rho.alpha
    else:
        mid = np.abs(2.0 * (e_arr - rho.b) / (rho.b - rho.a) + 1.0)
        u = mid**rho.alpha
    inside = u < 1.0 - SINGULARITY_GUARD
    out = np.zeros_like(e_arr)
    out[inside] = np.exp(1.0 + 1.0 / (u[inside] - 1.0))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class Compatibility:
    compatible: bool
    worst_margin: float
    worst_point: float


def check_compatibility(
    rho: RelaxationFn, delta: float, support: tuple[float, float]
) -> Compatibility:
    """Grid search with local refinement of e -> e + rho(e) * delta.

    A positive shock is compatible when the map never exceeds the upper
    support bound, a negative one when it never undershoots the lower bound.
    """
    a, b = float(support[0]), float(support[1])
    if b <= a:
        raise ValueError("support must be an interval [a, b] with a < b")
    if delta == 0.0:
        return Compatibility(True, 0.0, a)
    sign = 1.0 if delta > 0 else -1.0

    def objective(e: np.ndarray) -> np.ndarray:
        return sign * (e + np.asarray(relax_eval(rho, e)) * delta)

    lo, hi = a, b
    grid = np.linspace(lo, hi, 10_000)
    best = grid[np.argmax(objective(grid))]
    step = (hi - lo) / 9_999
    for _ in range(3):
        lo_r = max(a, best - step)
        hi_r = min(b, best + step)
        grid = np.linspace(lo_r, hi_r, 1_001)
        best = grid[np.argmax(objective(grid))]
        step = (hi_r - lo_r) / 1_000
    worst = float(objective(np.array([best]))[0])
    margin = (b if delta > 0 else -a) - worst
    return Compatibility(bool(margin >= 0.0), float(margin), float(best))


@dataclass(frozen=True)
class ShockSpec:
    """Impulse size, relaxation function, and horizon."""

    delta: float
    relaxation: RelaxationFn
    horizon: int

    def __post_init__(self) -> None:
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


@dataclass(frozen=True)
class IrfResult:
    """(H+1) x d response matrix with provenance."""

    values: np.ndarray
    variables: tuple[str, ...]
    method: str
    delta: float
    relaxation: str
    n_used: int
    seed: int | None = None
    clamped: int = 0
    mc_se: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1


def variable_names(d_y: int) -> tuple[str, ...]:
    return ("X",) + tuple(f"Y{i + 1}" for i in range(d_y))


def _warn_if_unrelaxed(spec: ModelSpec, shock: ShockSpec) -> None:
    if shock.relaxation.kind == "constant_one" and shock.delta != 0.0:
        warnings.warn(
            "non-relaxed shock on a bounded innovation support: "
            "support violation possible at impact",
            SupportWarning,
            stacklevel=3,
        )


def shocked_path(
    model: ModelSpec,
    history: np.ndarray,
    eps_future: np.ndarray,
    shock: ShockSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Baseline and shocked continuations from one history.

    ``history`` holds the p most recent states (oldest first, shape (p, d));
    ``eps_future`` supplies rows (eps_1, xi_2) for the impact step and the
    following H steps (shape (H+1, d)). Both paths reuse identical
    innovations; the impact row's structural innovation is perturbed by
    delta * rho on the shocked side only.
    """
    history = np.asarray(history, dtype=float)
    eps_future = np.asarray(eps_future, dtype=float)
    if eps_future.shape[0] != shock.horizon + 1:
        raise ValueError("eps_future must cover the impact step plus the horizon")
    baseline, _ = iterate_paths(model, history[None], eps_future[None])
    shocked_eps = eps_future.copy()
    w = shock.delta * float(np.asarray(relax_eval(shock.relaxation, eps_future[0, 0])))
    shocked_eps[0, 0] += w
    shocked, _ = iterate_paths(model, history[None], shocked_eps[None])
    return baseline[0], shocked[0]


def _chunk_ranges(total: int, chunk: int) -> list[tuple[int, int]]:
    return [(s, min(s + chunk, total)) for s in range(0, total, chunk)]


def _run_chunks(worker, ranges, threads: int):
    if threads <= 1 or len(ranges) <= 1:
        return [worker(*r) for r in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, *r) for r in ranges]
        return [f.result() for f in futures]


def population_irf(
    spec: ModelSpec,
    shock: ShockSpec,
    replications: int = 100_000,
    seed: int = 0,
    burn_in: int = 500,
    threads: int = 1,
    chunk: int = 4096,
) -> IrfResult:
    """Unconditional IRF by averaging over fresh stationary histories.

    Every replication draws its own burn-in history and innovation future
    from counter-based streams; the reduction is over fixed chunk order, so
    the result is independent of the thread count.
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    _warn_if_unrelaxed(spec, shock)
    h = shock.horizon
    d = spec.d
    compat = None
    if shock.relaxation.kind != "constant_one":
        compat = check_compatibility(
            shock.relaxation, shock.delta, spec.innovation.support(0)
        )
    ranges = _chunk_ranges(replications, chunk)

    def worker(start: int, stop: int):
        size = stop - start
        gen = np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=np.uint64(start)))
        sigma = np.asarray(spec.innovation.sigma)
        bound = spec.innovation.bound

        def draw(steps: int) -> np.ndarray:
            raw = gen.standard_normal((size, steps, d))
            return np.clip(raw, -bound, bound) * sigma

        state = np.zeros((size, max(spec.p, 1), d))
        if burn_in > 0:
            warm, _ = iterate_paths(spec, state, draw(burn_in))
            state = warm[:, -max(spec.p, 1) :, :]
        eps_path = draw(h + 1)
        shocked_eps = eps_path.copy()
        w = shock.delta * np.asarray(relax_eval(shock.relaxation, eps_path[:, 0, 0]))
        shocked_eps[:, 0, 0] += w
        if compat is not None and compat.compatible:
            lo, hi = spec.innovation.support(0)
            bad = np.count_nonzero((shocked_eps[:, 0, 0] < lo - 1e-9) | (shocked_eps[:, 0, 0] > hi + 1e-9))
            if bad:
                raise AssertionError("compatible relaxation produced out-of-support impact")
        base, clamp_b = iterate_paths(spec, state, eps_path)
        shocked, clamp_s = iterate_paths(spec, state, shocked_eps)
        diff = shocked - base
        return diff.sum(axis=0), (diff**2).sum(axis=0), clamp_b + clamp_s

    parts = _run_chunks(worker, ranges, threads)
    total = np.zeros((h + 1, d))
    total_sq = np.zeros((h + 1, d))
    clamped = 0
    for s, sq, cl in parts:
        total += s
        total_sq += sq
        clamped += cl
    mean = total / replications
    var = np.maximum(total_sq / replications - mean**2, 0.0)
    mc_se = np.sqrt(var / replications)
    return IrfResult(
        values=mean,
        variables=variable_names(spec.d_y),
        method="population",
        delta=shock.delta,
        relaxation=shock.relaxation.describe(),
        n_used=replications,
        seed=seed,
        clamped=clamped,
        mc_se=mc_se,
    )


def estimated_irf(fit, data, shock: ShockSpec, threads: int = 1, chunk: int = 4096) -> IrfResult:
    """Plug-in sample IRF: average forward-iterated residual paths over t.

    Every impact time with a full H-step residual future contributes (the
    common-t convention); the baseline recursion reproduces the observed
    sample, so a zero shock gives an exactly zero response.
    """
    if isinstance(data, SimPath):
        x, y = data.x, data.y
    elif hasattr(data, "x") and hasattr(data, "y"):
        x, y = np.asarray(data.x, float), np.asarray(data.y, float)
    else:
        x, y = data
        x = np.asarray(x, float)
        y = np.asarray(y, float)
    if y.ndim == 1:
        y = y[:, None]
    if fit.first_stage is None or fit.residuals2 is None:
        raise ValueError("estimated_irf needs a fitted model with residuals")
    n = x.size
    if fit.n_obs != n:
        raise ValueError("fit was not produced from this sample (length mismatch)")
    _warn_if_unrelaxed(fit, shock)
    p, d, h = fit.p, fit.d, shock.horizon
    if h >= n - p:
        raise ValueError("horizon exceeds sample")
    usable = n - p - h
    z = np.column_stack([x, y])
    resid = np.column_stack([fit.first_stage.residuals, fit.residuals2])
    rho_vals = np.asarray(relax_eval(shock.relaxation, resid[:, 0]))
    ranges = _chunk_ranges(usable, chunk)

    def worker(start: int, stop: int):
        idx = np.arange(start, stop)
        state = z[idx[:, None] + np.arange(p)[None, :]]
        eps_path = resid[idx[:, None] + np.arange(h + 1)[None, :]]
        shocked_eps = eps_path.copy()
        shocked_eps[:, 0, 0] += shock.delta * rho_vals[idx]
        base, clamp_b = iterate_paths(fit, state, eps_path)
        shocked, clamp_s = iterate_paths(fit, state, shocked_eps)
        diff = shocked - base
        return diff.sum(axis=0), clamp_b + clamp_s

    parts = _run_chunks(worker, ranges, threads)
    total = np.zeros((h + 1, d))
    clamped = 0
    for s, cl in parts:
        total += s
        clamped += cl
    return IrfResult(
        values=total / usable,
        variables=variable_names(fit.d_y),
        method="estimated",
        delta=shock.delta,
        relaxation=shock.relaxation.describe(),
        n_used=usable,
        seed=None,
        clamped=clamped,
    )


def linear_irf(
    lags: LagPolynomial, b0_21: np.ndarray, delta: float, horizon: int
) -> IrfResult:
    """Closed-form linear IRF from the moving-average recursion.

    The impact column is (1, b0_21)' and Psi_h follows the companion power
    recursion; requires a stable linear part.
    """
    if lags.spectral_radius() >= 1.0:
        raise ValueError("explosive linear part: companion spectral radius >= 1")
    d = lags.d
    b0_21 = np.asarray(b0_21, dtype=float).reshape(d - 1)
    e1 = np.concatenate([[1.0], b0_21])
    psi: list[np.ndarray] = [np.eye(d)]
    a = lags.coeffs
    for h in range(1, horizon + 1):
        acc = np.zeros((d, d))
        for k in range(1, min(h, lags.p) + 1):
            acc += a[k - 1] @ psi[h - k]
        psi.append(acc)
    values = np.stack([delta * (m @ e1) for m in psi])
    return IrfResult(
        values=values,
        variables=variable_names(d - 1),
        method="linear_closed_form",
        delta=delta,
        relaxation="constant_one",
        n_used=0,
    )


def linearized_reduction(spec: ModelSpec) -> tuple[LagPolynomial, np.ndarray, np.ndarray]:
    """Fold linear impact terms into a lag-only system plus shock loading.

    Contemporaneous identity terms route through the structural innovation
    (raising the effective loading) and through the X-equation lags; identity
    terms at lags j >= 1 add to the corresponding lag matrices.
    """
    d, p = spec.d, spec.p
    lam = np.zeros((spec.d_y, p + 1))
    for i in range(spec.d_y):
        for j in range(p + 1):
            lam[i, j] = sum(t.scale for t in spec.impact[i][j] if t.kind == "identity")
    a = spec.lags.coeffs.copy() if p > 0 else np.zeros((0, d, d))
    for k in range(1, p + 1):
        for i in range(spec.d_y):
            a[k - 1][1 + i, 0] += lam[i, k]
            a[k - 1][1 + i, :] += lam[i, 0] * spec.lags.coeffs[k - 1][0, :]
    b_eff = spec.b0_21 + lam[:, 0]
    mu_eff = spec.mu.copy()
    mu_eff[1:] += lam[:, 0] * spec.mu[0]
    return LagPolynomial(a), b_eff, mu_eff
