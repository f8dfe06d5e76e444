"""Clamped B-spline sieve bases and regression design assembly.

A sieve block is a univariate clamped B-spline basis attached to one lag of
the structural series. Blocks of degree >= 1 are stored *linear-free*: the
raw basis is orthogonalized against {1, x} under the uniform measure on the
domain and the first two (now redundant) columns are dropped, so that the
intercept, the explicit linear lag columns and the generated-regressor
column stay identified next to the blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KnotVector",
    "SievePlan",
    "DesignMatrix",
    "GramDiagnostics",
    "bspline_eval",
    "bspline_matrix",
    "knots_from_quantiles",
    "build_design",
    "gram_diagnostics",
]


@dataclass(frozen=True)
class KnotVector:
    """Clamped (open-uniform) knot configuration for one spline block."""

    degree: int
    interior: tuple[float, ...]
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if not np.isfinite(self.lo) or not np.isfinite(self.hi) or self.lo >= self.hi:
            raise ValueError("domain must be a finite interval [a, b] with a < b")
        interior = tuple(float(k) for k in self.interior)
        object.__setattr__(self, "interior", interior)
        if any(not np.isfinite(k) for k in interior):
            raise ValueError("interior knots must be finite")
        if any(k2 <= k1 for k1, k2 in zip(interior, interior[1:])):
            raise ValueError("degenerate knot vector: interior knots must be strictly increasing")
        if interior and (interior[0] <= self.lo or interior[-1] >= self.hi):
            raise ValueError("interior knots must lie strictly inside the domain")

    @property
    def dim(self) -> int:
        """Number of basis functions: #interior + degree + 1."""
        return len(self.interior) + self.degree + 1

    @property
    def knots(self) -> np.ndarray:
        """Full knot vector with boundary knots replicated degree+1 times."""
        return np.concatenate(
            [
                np.full(self.degree + 1, self.lo),
                np.asarray(self.interior, dtype=float),
                np.full(self.degree + 1, self.hi),
            ]
        )

    def greville(self) -> np.ndarray:
        """Greville abscissae; the identity map is x = sum_i greville_i * b_i(x)."""
        if self.degree == 0:
            t = self.knots
            return 0.5 * (t[:-1] + t[1:])
        t = self.knots
        return np.array([t[i + 1 : i + 1 + self.degree].mean() for i in range(self.dim)])


def clamp_count(kv: KnotVector, x: np.ndarray | float) -> int:
    """Number of evaluation points outside [lo, hi] (clamped to the boundary)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return int(np.count_nonzero((x < kv.lo) | (x > kv.hi)))


def bspline_matrix(kv: KnotVector, x: np.ndarray) -> np.ndarray:
    """Evaluate all basis functions at each point; out-of-domain x is clamped.

    Returns an (n, dim) matrix; rows sum to one and have at most degree+1
    nonzero entries (Cox-de Boor recursion on the clamped knot vector).
    """
    x = np.clip(np.asarray(x, dtype=float), kv.lo, kv.hi)
    t = kv.knots
    m = t.size
    n = x.size
    values = np.zeros((n, m - 1))
    last = 0
    for i in range(m - 1):
        if t[i + 1] > t[i]:
            values[:, i] = (x >= t[i]) & (x < t[i + 1])
            last = i
    values[x == kv.hi, :] = 0.0
    values[x == kv.hi, last] = 1.0
    for k in range(1, kv.degree + 1):
        for i in range(m - k - 1):
            acc = np.zeros(n)
            if t[i + k] > t[i]:
                acc += (x - t[i]) / (t[i + k] - t[i]) * values[:, i]
            if t[i + k + 1] > t[i + 1]:
                acc += (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * values[:, i + 1]
            values[:, i] = acc
    return values[:, : kv.dim]


def bspline_eval(kv: KnotVector, x: float) -> np.ndarray:
    """Basis values at a single point (length dim, sums to one)."""
    return bspline_matrix(kv, np.array([x]))[0]


def linear_projection(kv: KnotVector) -> np.ndarray:
    """L2(uniform[lo,hi]) projection of each basis function onto {1, x}.

    Returns a (2, dim) array of (alpha_i, beta_i) with
    proj b_i = alpha_i + beta_i * x. Gauss-Legendre per knot span is exact
    for piecewise polynomials.
    """
    nodes, weights = np.polynomial.legendre.leggauss(kv.degree + 2)
    spans = np.concatenate([[kv.lo], np.asarray(kv.interior), [kv.hi]])
    xs, ws = [], []
    for a, b in zip(spans[:-1], spans[1:]):
        xs.append(0.5 * (b - a) * nodes + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * weights)
    xq = np.concatenate(xs)
    wq = np.concatenate(ws)
    basis = bspline_matrix(kv, xq)
    lin = np.column_stack([np.ones_like(xq), xq])
    gram = (lin * wq[:, None]).T @ lin
    cross = (lin * wq[:, None]).T @ basis
    return np.linalg.solve(gram, cross)


def block_width(kv: KnotVector) -> int:
    """Design columns contributed by one block after identification drops."""
    return max(kv.dim - (2 if kv.degree >= 1 else 1), 0)


def block_matrix(kv: KnotVector, x: np.ndarray) -> np.ndarray:
    """Design columns of one block: linear-free basis for degree >= 1.

    Degree-0 blocks only drop the first indicator (no linear span to remove).
    """
    raw = bspline_matrix(kv, x)
    if kv.degree == 0:
        return raw[:, 1:]
    ab = linear_projection(kv)
    xc = np.clip(np.asarray(x, dtype=float), kv.lo, kv.hi)
    centered = raw - ab[0][None, :] - xc[:, None] * ab[1][None, :]
    return centered[:, 2:]


def block_to_full_coeffs(kv: KnotVector, block_coeffs: np.ndarray) -> np.ndarray:
    """Exact conversion of block-column coefficients to full-basis coefficients.

    The fitted block function sum_i c_i * btilde_i(x) equals a spline in the
    raw clamped basis because 1 = sum_k b_k and x = sum_k greville_k * b_k.
    """
    block_coeffs = np.asarray(block_coeffs, dtype=float)
    full = np.zeros(kv.dim)
    if kv.degree == 0:
        full[1:] = block_coeffs
        return full
    ab = linear_projection(kv)
    full[2:] = block_coeffs
    const = float(ab[0, 2:] @ block_coeffs)
    slope = float(ab[1, 2:] @ block_coeffs)
    full -= const
    full -= slope * kv.greville()
    return full


def knots_from_quantiles(sample: np.ndarray, count: int, degree: int) -> KnotVector:
    """Interior knots at the `count` equally spaced empirical quantiles.

    Levels are i/(count+1) for i = 1..count with linear interpolation between
    order statistics; the domain is the sample range.
    """
    sample = np.asarray(sample, dtype=float)
    if count < 0:
        raise ValueError("count must be non-negative")
    distinct = np.unique(sample)
    if distinct.size < count + 2:
        raise ValueError("degenerate sample: need at least count + 2 distinct values")
    lo, hi = float(sample.min()), float(sample.max())
    if count == 0:
        return KnotVector(degree=degree, interior=(), lo=lo, hi=hi)
    levels = np.arange(1, count + 1) / (count + 1)
    interior = np.quantile(sample, levels)
    if interior[0] <= lo or interior[-1] >= hi or np.any(np.diff(interior) <= 0):
        raise ValueError("degenerate sample: quantile knots collide with the domain boundary")
    return KnotVector(degree=degree, interior=tuple(float(k) for k in interior), lo=lo, hi=hi)


@dataclass(frozen=True)
class SievePlan:
    """Stage-II regressor layout: one optional spline block per lag of X.

    ``x_blocks[j]`` is the block for lag j (j = 0..p); ``None`` leaves that
    lag linear-only. Columns are ordered
    [intercept | blocks by lag | linear X lags 1..p | linear Y lags | generated].
    """

    x_blocks: tuple[KnotVector | None, ...]
    include_intercept: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_blocks", tuple(self.x_blocks))
        if not self.x_blocks:
            raise ValueError("plan must cover at least lag 0 of X")

    @property
    def p(self) -> int:
        return len(self.x_blocks) - 1

    def k_total(self, d_y: int) -> int:
        """Total design width for a given Y dimension."""
        spline = sum(block_width(kv) for kv in self.x_blocks if kv is not None)
        intercept = 1 if self.include_intercept else 0
        return intercept + spline + self.p + self.p * d_y + 1

    def labels(self, d_y: int) -> tuple[str, ...]:
        out: list[str] = []
        if self.include_intercept:
            out.append("intercept")
        for j, kv in enumerate(self.x_blocks):
            if kv is None:
                continue
            start = 2 if kv.degree >= 1 else 1
            out.extend(f"spline:x_lag{j}:b{i}" for i in range(start, kv.dim))
        out.extend(f"linear:x_lag{j}" for j in range(1, self.p + 1))
        for j in range(1, self.p + 1):
            out.extend(f"linear:y{m}_lag{j}" for m in range(d_y))
        out.append("generated")
        return tuple(out)


@dataclass(frozen=True)
class DesignMatrix:
    """Feasible stage-II regressor matrix with per-column provenance labels."""

    values: np.ndarray
    column_labels: tuple[str, ...]
    plan: SievePlan

    def __post_init__(self) -> None:
        if self.values.shape[1] != len(self.column_labels):
            raise ValueError("labels must match design columns")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("design matrix contains non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.column_labels.index(label)]


def rebuild_column(
    plan: SievePlan, label: str, x: np.ndarray, y: np.ndarray, eps_hat: np.ndarray
) -> np.ndarray:
    """Recompute one labelled design column from the raw inputs.

    Used to verify that the labels are a faithful, exhaustive recipe for the
    design (the W2 reassembly invariant).
    """
    p = plan.p
    n = x.size
    rows = slice(p, n)
    if label == "intercept":
        return np.ones(n - p)
    if label == "generated":
        return eps_hat if eps_hat.size == n - p else eps_hat[p:]
    if label.startswith("spline:"):
        _, lag_part, basis_part = label.split(":")
        j = int(lag_part.removeprefix("x_lag"))
        i = int(basis_part.removeprefix("b"))
        kv = plan.x_blocks[j]
        assert kv is not None
        start = 2 if kv.degree >= 1 else 1
        return block_matrix(kv, x[p - j : n - j])[:, i - start]
    if label.startswith("linear:x_lag"):
        j = int(label.removeprefix("linear:x_lag"))
        return x[p - j : n - j]
    if label.startswith("linear:y"):
        comp, lag_part = label.removeprefix("linear:y").split("_lag")
        m, j = int(comp), int(lag_part)
        return y[p - j : n - j, m]
    raise ValueError(f"unknown design label {label!r}")


def build_design(
    plan: SievePlan,
    x_path: np.ndarray,
    y_path: np.ndarray,
    eps_hat: np.ndarray,
    p: int | None = None,
) -> DesignMatrix:
    """Assemble the feasible stage-II design over rows t = p+1..n.

    ``eps_hat`` may have length n (sliced to the usable rows) or n - p.
    """
    x = np.asarray(x_path, dtype=float)
    y = np.asarray(y_path, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if p is None:
        p = plan.p
    if p != plan.p:
        raise ValueError(f"plan covers lags 0..{plan.p} but p = {p}")
    n = x.size
    if y.shape[0] != n:
        raise ValueError("X and Y paths must have equal length")
    if n <= p:
        raise ValueError("need more than p observations")
    eps_hat = np.asarray(eps_hat, dtype=float)
    if eps_hat.size == n:
        eps_hat = eps_hat[p:]
    elif eps_hat.size != n - p:
        raise ValueError(f"eps_hat of wrong length: {eps_hat.size}, expected {n} or {n - p}")
    d_y = y.shape[1]
    if plan.k_total(d_y) >= n - p:
        raise ValueError("overparameterized sieve: K_total must be below the usable sample size")

    cols: list[np.ndarray] = []
    if plan.include_intercept:
        cols.append(np.ones(n - p))
    for j, kv in enumerate(plan.x_blocks):
        if kv is None:
            continue
        cols.append(block_matrix(kv, x[p - j : n - j]))
    for j in range(1, p + 1):
        cols.append(x[p - j : n - j, None])
    for j in range(1, p + 1):
        cols.append(y[p - j : n - j, :])
    cols.append(eps_hat[:, None])
    values = np.column_stack(cols)
    return DesignMatrix(values=values, column_labels=plan.labels(d_y), plan=plan)


@dataclass(frozen=True)
class GramDiagnostics:
    min_eigenvalue: float
    max_eigenvalue: float
    orthonormalized_deviation: float
    singular: bool


def gram_diagnostics(
    design: DesignMatrix | np.ndarray, reference: np.ndarray | None = None
) -> GramDiagnostics:
    """Eigenvalue range of B'B/n and the whitened deviation ||R^-1/2 (B'B/n) R^-1/2 - I||.

    ``reference`` is the second-moment matrix used for whitening; the default
    is the sample Gram itself, for which the deviation is identically zero.
    An exactly singular reference yields deviation +inf instead of raising.
    """
    values = design.values if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    if values.size == 0:
        raise ValueError("empty design")
    n = values.shape[0]
    gram = values.T @ values / n
    eigs = np.linalg.eigvalsh(gram)
    min_eig, max_eig = float(eigs[0]), float(eigs[-1])
    ref = gram if reference is None else np.asarray(reference, dtype=float)
    ref_eigs, ref_vecs = np.linalg.eigh(ref)
    tol = 1e-12 * max(ref_eigs[-1], 0.0)
    singular = bool(ref_eigs[0] <= tol)
    if singular:
        return GramDiagnostics(max(min_eig, 0.0) if min_eig > tol else 0.0, max_eig, np.inf, True)
    whiten = ref_vecs @ np.diag(ref_eigs**-0.5) @ ref_vecs.T
    dev = np.linalg.norm(whiten @ gram @ whiten - np.eye(gram.shape[0]), ord=2)
    return GramDiagnostics(min_eig, max_eig, float(dev), False)
