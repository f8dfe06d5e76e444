"""CSV schemas: simulated paths, datasets, IRF tables, study tables, and the
lossless fitted-model bundle."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import KnotVector, SievePlan
from .estimator import (
    FirstStageFit,
    FittedModel,
    ParametricForm,
    _stage_two_from_tables,
    _parametric_from_tables,
)
from .irf import IrfResult
from .model import InnovationLaw, LagPolynomial, ModelSpec, NonlinFn, SimPath
from .study import StudyResult

__all__ = [
    "DataSet",
    "write_simpath",
    "read_dataset",
    "write_irfs",
    "write_study",
    "save_fitted",
    "load_fitted",
    "spec_to_config",
    "spec_from_config",
]


def _term_to_config(term: NonlinFn) -> dict:
    out = {"kind": term.kind, "scale": term.scale}
    if term.kind == "spline":
        out.update(
            degree=term.knots.degree,
            interior=list(term.knots.interior),
            lo=term.knots.lo,
            hi=term.knots.hi,
            coeffs=list(term.coeffs),
        )
    return out


def _term_from_config(cfg: dict) -> NonlinFn:
    kind = cfg["kind"]
    scale = float(cfg.get("scale", 1.0))
    if kind != "spline":
        return NonlinFn(kind, scale)
    kv = KnotVector(
        int(cfg["degree"]), tuple(float(k) for k in cfg["interior"]),
        float(cfg["lo"]), float(cfg["hi"]),
    )
    return NonlinFn(kind, scale, knots=kv, coeffs=tuple(float(c) for c in cfg["coeffs"]))


def spec_to_config(spec: ModelSpec) -> dict:
    """JSON-ready description of a model, the CLI `model` config block."""
    return {
        "d_y": spec.d_y,
        "p": spec.p,
        "mu": [float(v) for v in spec.mu],
        "lags": [[[float(v) for v in row] for row in mat] for mat in spec.lags.coeffs],
        "impact": [
            [[_term_to_config(t) for t in terms] for terms in row] for row in spec.impact
        ],
        "b0_21": [float(v) for v in spec.b0_21],
        "innovation": {"sigma": list(spec.innovation.sigma), "bound": spec.innovation.bound},
    }


def spec_from_config(cfg: dict) -> ModelSpec:
    """Inverse of spec_to_config; rejects unknown keys."""
    known = {"d_y", "p", "mu", "lags", "impact", "b0_21", "innovation"}
    unknown = set(cfg) - known
    if unknown:
        raise ValueError(f"unknown model keys: {sorted(unknown)}")
    d_y, p = int(cfg["d_y"]), int(cfg["p"])
    d = 1 + d_y
    lag_list = cfg.get("lags", [])
    lags = LagPolynomial(np.asarray(lag_list, dtype=float) if lag_list else np.zeros((0, d, d)))
    impact = tuple(
        tuple(tuple(_term_from_config(t) for t in terms) for terms in row)
        for row in cfg.get("impact", [[[]] * (p + 1)] * d_y)
    )
    inn = cfg.get("innovation", {})
    law = InnovationLaw(
        sigma=tuple(float(s) for s in inn.get("sigma", (1.0,) * d)),
        bound=float(inn.get("bound", 3.0)),
    )
    return ModelSpec(
        d_y=d_y, p=p,
        mu=np.asarray(cfg.get("mu", np.zeros(d)), dtype=float),
        lags=lags, impact=impact,
        b0_21=np.asarray(cfg.get("b0_21", np.zeros(d_y)), dtype=float),
        innovation=law,
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def write_simpath(path: SimPath, file: Path) -> None:
    """Header: t,X,Y1..YdY,eps1..epsd."""
    d_y = path.d_y
    header = ["t", "X"] + [f"Y{i + 1}" for i in range(d_y)] + [
        f"eps{i + 1}" for i in range(1 + d_y)
    ]
    with open(file, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(path.n):
            row = [t + 1, _fmt(path.x[t])]
            row += [_fmt(v) for v in path.y[t]]
            row += [_fmt(v) for v in path.eps[t]]
            writer.writerow(row)


@dataclass(frozen=True)
class DataSet:
    """Ingested numeric table with a declared structural column."""

    columns: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray
    dropped_rows: int

    @property
    def n(self) -> int:
        return self.x.size


def read_dataset(
    file: Path, structural: str | None = None, columns: list[str] | None = None
) -> DataSet:
    """Load a CSV sample; rows with any missing or non-numeric cell are dropped.

    The structural column defaults to the first data column; a column named
    't' is treated as an index and skipped.
    """
    with open(file, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{file}: empty file, header row is mandatory") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    usable = [h for h in header if h != "t" and not h.startswith("eps")]
    if columns is not None:
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValueError(f"{file}: columns not found: {missing}")
        usable = list(columns)
    if structural is None:
        structural = usable[0]
    if structural not in usable:
        raise ValueError(f"{file}: structural column {structural!r} not among {usable}")
    ordered = [structural] + [c for c in usable if c != structural]
    idx = [header.index(c) for c in ordered]
    data: list[list[float]] = []
    dropped = 0
    for row in rows:
        try:
            vals = [float(row[i]) for i in idx]
        except (ValueError, IndexError):
            dropped += 1
            continue
        if any(not np.isfinite(v) for v in vals):
            dropped += 1
            continue
        data.append(vals)
    if not data:
        raise ValueError(f"{file}: no complete rows after dropping {dropped} gaps")
    table = np.asarray(data, dtype=float)
    return DataSet(columns=tuple(ordered), x=table[:, 0], y=table[:, 1:], dropped_rows=dropped)


def write_irfs(results: list[IrfResult], file: Path) -> None:
    """Header: h,var,value,method,delta."""
    with open(file, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "var", "value", "method", "delta"])
        for res in results:
            for h in range(res.values.shape[0]):
                for v, name in enumerate(res.variables):
                    writer.writerow([h, name, _fmt(res.values[h, v]), res.method, _fmt(res.delta)])


def write_study(result: StudyResult, file: Path) -> None:
    """Header: estimator,delta,var,h,mse,bias,se,n_ok."""
    with open(file, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "delta", "var", "h", "mse", "bias", "se", "n_ok"])
        for tag, delta, var, h, mse, bias, se, n_ok in result.rows():
            writer.writerow([tag, _fmt(delta), var, h, _fmt(mse), _fmt(bias), _fmt(se), n_ok])


def _write_kv(file: Path, pairs: list[tuple[str, str]]) -> None:
    with open(file, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        writer.writerows(pairs)


def _read_kv(file: Path) -> dict[str, str]:
    with open(file, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return {k: v for k, v in reader}


def save_fitted(fit: FittedModel, out_dir: Path) -> None:
    """Write the fitted-model bundle (meta, plan or form, coefficient tables,
    first stage, residuals) with full float precision."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta: list[tuple[str, str]] = [
        ("d_y", str(fit.d_y)),
        ("p", str(fit.p)),
        ("n_obs", str(fit.n_obs)),
        ("bound", _fmt(fit.innovation.bound)),
        ("kind", "sieve" if fit.plan is not None else "parametric"),
    ]
    _write_kv(out_dir / "meta.csv", meta)

    if fit.plan is not None:
        with open(out_dir / "plan.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lag", "degree", "lo", "hi", "interior"])
            for j, kv in enumerate(fit.plan.x_blocks):
                if kv is None:
                    writer.writerow([j, "", "", "", ""])
                else:
                    knots = ";".join(_fmt(k) for k in kv.interior)
                    writer.writerow([j, kv.degree, _fmt(kv.lo), _fmt(kv.hi), knots])
    else:
        form = fit.parametric_form
        with open(out_dir / "form.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "lag", "kind", "x_lags_linear"])
            for idx, (lag, kind) in enumerate(form.terms):
                writer.writerow([idx, lag, kind, int(form.x_lags_linear)])

    with open(out_dir / "equations.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["equation", "term", "value"])
        for i, table in enumerate(fit.coefficients):
            for term, value in table.items():
                writer.writerow([i, term, _fmt(value)])

    with open(out_dir / "first_stage.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "value"])
        for k, value in enumerate(fit.first_stage.pi1):
            writer.writerow([k, _fmt(value)])

    resid = np.column_stack([fit.first_stage.residuals, fit.residuals2])
    with open(out_dir / "residuals.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "eps1_hat"] + [f"xi{i + 1}" for i in range(fit.d_y)])
        for r in range(resid.shape[0]):
            writer.writerow([r] + [_fmt(v) for v in resid[r]])


def load_fitted(out_dir: Path) -> FittedModel:
    """Reconstruct the fitted model from a bundle; exact round-trip."""
    out_dir = Path(out_dir)
    meta = _read_kv(out_dir / "meta.csv")
    d_y = int(meta["d_y"])
    p = int(meta["p"])
    n_obs = int(meta["n_obs"])

    tables: list[dict[str, float]] = [dict() for _ in range(d_y)]
    with open(out_dir / "equations.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for eq, term, value in reader:
            tables[int(eq)][term] = float(value)

    pi1_rows: list[tuple[int, float]] = []
    with open(out_dir / "first_stage.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for k, value in reader:
            pi1_rows.append((int(k), float(value)))
    pi1 = np.array([v for _, v in sorted(pi1_rows)])

    with open(out_dir / "residuals.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = sorted((int(r[0]), [float(v) for v in r[1:]]) for r in reader)
    resid = np.array([vals for _, vals in rows])
    eps1_hat = resid[:, 0]
    resid2 = resid[:, 1:]
    sigma1 = float(np.sqrt(np.mean(eps1_hat**2)))
    first = FirstStageFit(pi1, eps1_hat, sigma1, False)

    if meta["kind"] == "sieve":
        blocks: list[KnotVector | None] = [None] * (p + 1)
        with open(out_dir / "plan.csv", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for j, degree, lo, hi, interior in reader:
                if degree == "":
                    continue
                knots = tuple(float(k) for k in interior.split(";")) if interior else ()
                blocks[int(j)] = KnotVector(int(degree), knots, float(lo), float(hi))
        plan = SievePlan(x_blocks=tuple(blocks))
        return _stage_two_from_tables(plan, tables, first, resid2, n_obs)

    terms: list[tuple[int, str]] = []
    x_lin = True
    with open(out_dir / "form.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for _, lag, kind, flag in reader:
            terms.append((int(lag), kind))
            x_lin = bool(int(flag))
    form = ParametricForm(terms=tuple(terms), x_lags_linear=x_lin)
    return _parametric_from_tables(form, p, tables, first, resid2, n_obs)
