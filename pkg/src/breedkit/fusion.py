"""Cross-domain feature assembly and yield regression.

One feature row per plot, columns tagged with the domain that produced them
(RS, phenotyping, weather, germplasm) so ablation subsets fall out of a
column filter. The regressor is ridge regression on z-scored columns with a
closed-form solve; evaluation is R^2/RMSE under seeded k-fold
cross-validation with normalization constants fit on the training folds only.
"""

from __future__ import annotations

import csv
import datetime as _dt
import warnings
from dataclasses import dataclass

import numpy as np

from . import kb
from .errors import (
    EmptyDataset,
    InvalidInput,
    ParseError,
    SingularSystem,
    UndefinedR2,
)

MOISTURE_STANDARD = 0.125

# Provincial per-unit-area reference yield (kg/ha) used to flag predictions.
YIELD_REFERENCE_KG_HA = 4230.2

RS_FEATURES = (
    "NDVI_MS", "SAVI_MS", "kNDVI_MS", "NIRv_MS", "PSRI_MS",
    "NDVI_HS", "SAVI_HS", "kNDVI_HS", "NIRv_HS", "PSRI_HS",
    "CH", "CV", "FVC", "PL_ratio", "WL_ratio", "WH_density",
)
PHENOTYPING_FEATURES = ("SPAD", "LAI", "measured_CH")
WEATHER_FEATURES = (
    "t_mean_mean", "dew_point_mean", "precip_total",
    "net_radiation_mean", "wind_speed_mean",
)
GERMPLASM_FEATURES = ("HQ", "DS", "DR", "MP", "AM")

DOMAINS = ("RS", "phenotyping", "weather", "germplasm")

FEATURE_DOMAIN = {
    **{name: "RS" for name in RS_FEATURES},
    **{name: "phenotyping" for name in PHENOTYPING_FEATURES},
    **{name: "weather" for name in WEATHER_FEATURES},
    **{name: "germplasm" for name in GERMPLASM_FEATURES},
}


@dataclass(frozen=True)
class PlotFeatureRecord:
    """All extracted features for one plot on one date, plus provenance."""

    plot_id: str
    germplasm_id: str
    date: str
    features: dict
    yield_kg_ha: float | None = None
    site: str = ""

    def __post_init__(self):
        if not self.plot_id:
            raise InvalidInput("plot_id must be non-empty")
        if self.yield_kg_ha is not None and self.yield_kg_ha < 0:
            raise InvalidInput(f"plot {self.plot_id}: yield must be >= 0")
        for name, value in self.features.items():
            if value is not None and not np.isfinite(value):
                raise InvalidInput(f"plot {self.plot_id}: feature {name} is not finite")


@dataclass(frozen=True)
class WeatherRecord:
    """One day of station weather."""

    site: str
    date: str
    t_mean: float
    dew_point: float
    precip: float
    net_radiation: float
    wind_speed: float

    def __post_init__(self):
        if self.precip < 0:
            raise InvalidInput("precip must be >= 0")
        if self.wind_speed < 0:
            raise InvalidInput("wind_speed must be >= 0")


@dataclass(frozen=True)
class FeatureMatrix:
    """Assembled design matrix with domain-tagged columns."""

    X: np.ndarray
    y: np.ndarray
    columns: tuple
    domains: tuple  # domain tag per column
    plot_ids: tuple
    germplasm_ids: tuple
    dropped: tuple = ()  # (plot_id, (missing features...)) pairs

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InvalidInput("X must be 2-D with one y per row")
        if X.shape[1] != len(self.columns) or len(self.columns) != len(self.domains):
            raise InvalidInput("columns/domains must match X's width")
        if not np.isfinite(X).all() or not np.isfinite(y).all():
            raise InvalidInput("feature matrix must be fully observed and finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def domain_of(self, column: str) -> str:
        return self.domains[self.columns.index(column)]

    def restrict(self, domains) -> "FeatureMatrix":
        """Column subset for an ablation run."""
        wanted = tuple(domains)
        for d in wanted:
            if d not in DOMAINS:
                raise InvalidInput(f"unknown domain {d!r}, expected subset of {DOMAINS}")
        keep = [i for i, d in enumerate(self.domains) if d in wanted]
        if not keep:
            raise EmptyDataset(f"no columns in domains {wanted}")
        return FeatureMatrix(
            X=self.X[:, keep],
            y=self.y,
            columns=tuple(self.columns[i] for i in keep),
            domains=tuple(self.domains[i] for i in keep),
            plot_ids=self.plot_ids,
            germplasm_ids=self.germplasm_ids,
            dropped=self.dropped,
        )


@dataclass(frozen=True)
class RidgeModel:
    """Ridge fit on z-scored columns: prediction = intercept + sum w_j z_j."""

    weights: np.ndarray
    intercept: float
    column_means: np.ndarray
    column_stds: np.ndarray
    columns: tuple
    lam: float
    dropped_columns: tuple = ()

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        Z = (X - self.column_means) / self.column_stds
        return self.intercept + Z @ self.weights


def standardize_yield(raw_mass: float, plot_area: float, moisture: float) -> float:
    """Plot yield in kg/ha standardized to 12.5 % grain moisture.

    Dry matter is conserved: yield = (mass/area) * (1 - moisture) / (1 - 0.125).
    """
    if not plot_area > 0:
        raise InvalidInput(f"plot_area must be > 0 ha, got {plot_area}")
    if not (0.0 <= moisture < 1.0):
        raise InvalidInput(f"moisture must be in [0, 1), got {moisture}")
    if raw_mass < 0:
        raise InvalidInput(f"raw_mass must be >= 0, got {raw_mass}")
    return (raw_mass / plot_area) * (1.0 - moisture) / (1.0 - MOISTURE_STANDARD)


def _aggregate_weather(records) -> dict:
    days = sorted(records, key=lambda r: r.date)
    if not days:
        return {}
    return {
        "t_mean_mean": float(np.mean([r.t_mean for r in days])),
        "dew_point_mean": float(np.mean([r.dew_point for r in days])),
        "precip_total": float(np.sum([r.precip for r in days])),
        "net_radiation_mean": float(np.mean([r.net_radiation for r in days])),
        "wind_speed_mean": float(np.mean([r.wind_speed for r in days])),
    }


def assemble(
    records,
    weather=(),
    germplasm=(),
    domains=DOMAINS,
    trait_thresholds: kb.TraitThresholds = kb.DEFAULT_TRAIT_THRESHOLDS,
) -> FeatureMatrix:
    """Build one feature row per plot from the selected domains.

    Multiple dates for a plot average per feature over the dates where the
    feature is present. Weather aggregates over the growing season (means,
    precipitation total), joined by site when the record carries one.
    Germplasm trait flags come from the knowledge-base records via
    ``kb.trait_flags``. Rows missing any selected feature are dropped and
    reported on the returned matrix.
    """
    domains = tuple(domains)
    if not domains:
        raise InvalidInput("select at least one domain")
    for d in domains:
        if d not in DOMAINS:
            raise InvalidInput(f"unknown domain {d!r}, expected subset of {DOMAINS}")
    records = list(records)
    if not records:
        raise EmptyDataset("no plot feature records")

    # per-plot feature means across dates
    plots: dict[str, dict] = {}
    for rec in records:
        entry = plots.setdefault(
            rec.plot_id,
            {"germplasm_id": rec.germplasm_id, "site": rec.site, "features": {}, "yields": []},
        )
        if rec.germplasm_id != entry["germplasm_id"]:
            raise InvalidInput(f"plot {rec.plot_id}: conflicting germplasm_id")
        for name, value in rec.features.items():
            if value is not None:
                entry["features"].setdefault(name, []).append(float(value))
        if rec.yield_kg_ha is not None:
            entry["yields"].append(float(rec.yield_kg_ha))

    weather = list(weather)
    weather_by_site: dict[str, dict] = {}

    def weather_summary(site: str) -> dict:
        if site not in weather_by_site:
            rows = [w for w in weather if w.site == site] if site else weather
            weather_by_site[site] = _aggregate_weather(rows)
        return weather_by_site[site]

    flags_by_variety = {g.variety_name: kb.trait_flags(g, trait_thresholds) for g in germplasm}

    candidates = []
    if "RS" in domains:
        candidates += list(RS_FEATURES)
    if "phenotyping" in domains:
        candidates += list(PHENOTYPING_FEATURES)
    if "weather" in domains:
        candidates += list(WEATHER_FEATURES)
    if "germplasm" in domains:
        candidates += list(GERMPLASM_FEATURES)

    values_by_plot = {}
    for plot_id in sorted(plots):
        entry = plots[plot_id]
        if not entry["yields"]:
            raise InvalidInput(f"plot {plot_id} has no yield")
        values = {name: float(np.mean(vals)) for name, vals in entry["features"].items()}
        if "weather" in domains:
            values.update(weather_summary(entry["site"]))
        if "germplasm" in domains:
            values.update(flags_by_variety.get(entry["germplasm_id"], {}))
        values_by_plot[plot_id] = values

    # a selected column must exist somewhere; columns absent from every plot
    # are pruned, rows missing a surviving column are dropped and reported
    columns = [c for c in candidates if any(c in v for v in values_by_plot.values())]
    if not columns:
        raise EmptyDataset(f"no data for any column of domains {domains}")

    rows, ys, kept_plots, kept_germs, dropped = [], [], [], [], []
    for plot_id in sorted(plots):
        entry = plots[plot_id]
        values = values_by_plot[plot_id]
        missing = tuple(c for c in columns if c not in values)
        if missing:
            dropped.append((plot_id, missing))
            continue
        rows.append([values[c] for c in columns])
        ys.append(float(np.mean(entry["yields"])))
        kept_plots.append(plot_id)
        kept_germs.append(entry["germplasm_id"])

    if not rows:
        raise EmptyDataset(f"no plots survive assembly; dropped: {dropped}")
    return FeatureMatrix(
        X=np.array(rows, dtype=np.float64),
        y=np.array(ys, dtype=np.float64),
        columns=tuple(columns),
        domains=tuple(FEATURE_DOMAIN[c] for c in columns),
        plot_ids=tuple(kept_plots),
        germplasm_ids=tuple(kept_germs),
        dropped=tuple(dropped),
    )


def fit_ridge(m: FeatureMatrix, lam: float = 1.0) -> RidgeModel:
    """Closed-form ridge on z-scored columns.

    Solves (Z^T Z + lam I) w = Z^T (y - mean(y)); the intercept is mean(y).
    Zero-variance columns are dropped with a warning. A singular system at
    lam = 0 raises SingularSystem (use lam > 0).
    """
    if lam < 0:
        raise InvalidInput(f"lambda must be >= 0, got {lam}")
    X, y = m.X, m.y
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    keep = stds > 0.0
    dropped = tuple(c for c, k in zip(m.columns, keep) if not k)
    if dropped:
        warnings.warn(f"dropping zero-variance columns: {dropped}", stacklevel=2)
    if not keep.any():
        raise EmptyDataset("all columns have zero variance")

    Z = (X[:, keep] - means[keep]) / stds[keep]
    y_bar = float(y.mean())
    A = Z.T @ Z + lam * np.eye(int(keep.sum()))
    b = Z.T @ (y - y_bar)
    if lam == 0.0 and np.linalg.cond(A) > 1e12:
        raise SingularSystem("normal equations singular at lambda=0; use lambda > 0")
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise SingularSystem("normal equations singular at lambda=0; use lambda > 0")
    return RidgeModel(
        weights=w,
        intercept=y_bar,
        column_means=means[keep],
        column_stds=stds[keep],
        columns=tuple(c for c, k in zip(m.columns, keep) if k),
        lam=lam,
        dropped_columns=dropped,
    )


def metrics(y_true, y_pred) -> tuple[float, float]:
    """(R^2, RMSE). R^2 = 1 - SSE/SST; undefined for zero-variance y_true."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise InvalidInput("metrics need equal-length non-empty vectors")
    sse = float(np.sum((y_true - y_pred) ** 2))
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    rmse = float(np.sqrt(sse / y_true.size))
    if sst == 0.0:
        raise UndefinedR2("y_true has zero variance")
    return 1.0 - sse / sst, rmse


@dataclass(frozen=True)
class CrossValidationResult:
    """Per-fold and pooled metrics plus out-of-fold prediction rows."""

    per_fold: tuple  # (fold_index, r2 or None, rmse) triples
    pooled_r2: float
    pooled_rmse: float
    rows: tuple  # (plot_id, germplasm_id, measured, predicted, exceeds_reference)
    k: int
    lam: float
    seed: int
    reference_kg_ha: float = YIELD_REFERENCE_KG_HA


def kfold_cv(
    m: FeatureMatrix,
    k: int,
    lam: float = 1.0,
    seed: int = 0,
    reference_kg_ha: float = YIELD_REFERENCE_KG_HA,
) -> CrossValidationResult:
    """Seeded k-fold cross-validation of the ridge model.

    Folds are a seeded shuffle split into sizes floor(n/k) or ceil(n/k);
    normalization and weights are fit on the training folds only. Pooled
    metrics are computed over the concatenated out-of-fold predictions.
    Per-fold R^2 is None when that fold's measured values have zero variance
    (always the case for leave-one-out).
    """
    n = m.n_rows
    if k < 2:
        raise InvalidInput(f"k must be >= 2, got {k}")
    if k > n:
        raise InvalidInput(f"k={k} exceeds the {n} available rows")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, k)

    oof_pred = np.empty(n, dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    per_fold = []
    for fold_index, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(order, test_idx, assume_unique=True)
        assert not np.intersect1d(train_idx, test_idx).size, "fold leakage"
        train = FeatureMatrix(
            X=m.X[train_idx],
            y=m.y[train_idx],
            columns=m.columns,
            domains=m.domains,
            plot_ids=tuple(m.plot_ids[i] for i in train_idx),
            germplasm_ids=tuple(m.germplasm_ids[i] for i in train_idx),
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fit_ridge(train, lam=lam)
        keep = [m.columns.index(c) for c in model.columns]
        pred = model.predict(m.X[test_idx][:, keep])
        oof_pred[test_idx] = pred
        seen[test_idx] = True
        rmse = float(np.sqrt(np.mean((m.y[test_idx] - pred) ** 2)))
        try:
            r2, rmse = metrics(m.y[test_idx], pred)
        except UndefinedR2:
            r2 = None
        per_fold.append((fold_index, r2, rmse))

    assert seen.all(), "every row must receive exactly one out-of-fold prediction"
    pooled_r2, pooled_rmse = metrics(m.y, oof_pred)
    rows = tuple(
        (m.plot_ids[i], m.germplasm_ids[i], float(m.y[i]), float(oof_pred[i]),
         bool(oof_pred[i] > reference_kg_ha))
        for i in range(n)
    )
    return CrossValidationResult(
        per_fold=tuple(per_fold),
        pooled_r2=pooled_r2,
        pooled_rmse=pooled_rmse,
        rows=rows,
        k=k,
        lam=lam,
        seed=seed,
        reference_kg_ha=reference_kg_ha,
    )


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

FEATURE_CSV_COLUMNS = (
    ("plot_id", "germplasm_id", "date", "site")
    + RS_FEATURES
    + PHENOTYPING_FEATURES
    + ("yield_kg_ha",)
)


def write_feature_records(records, path) -> None:
    """Write PlotFeatureRecord rows with a fixed column order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_CSV_COLUMNS)
        for rec in records:
            row = [rec.plot_id, rec.germplasm_id, rec.date, rec.site]
            for name in RS_FEATURES + PHENOTYPING_FEATURES:
                value = rec.features.get(name)
                row.append("" if value is None else repr(float(value)))
            row.append("" if rec.yield_kg_ha is None else repr(float(rec.yield_kg_ha)))
            writer.writerow(row)


def load_feature_records(path) -> list[PlotFeatureRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"plot_id", "germplasm_id", "date"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ParseError(f"{path}: need columns {sorted(needed)}", line=1)
        for i, rec in enumerate(reader, start=2):
            features = {}
            for name in RS_FEATURES + PHENOTYPING_FEATURES:
                raw = (rec.get(name) or "").strip()
                if raw:
                    try:
                        features[name] = float(raw)
                    except ValueError:
                        raise ParseError(f"non-numeric {name}: {raw!r}", line=i)
            raw_yield = (rec.get("yield_kg_ha") or "").strip()
            records.append(
                PlotFeatureRecord(
                    plot_id=rec["plot_id"].strip(),
                    germplasm_id=rec["germplasm_id"].strip(),
                    date=rec["date"].strip(),
                    site=(rec.get("site") or "").strip(),
                    features=features,
                    yield_kg_ha=float(raw_yield) if raw_yield else None,
                )
            )
    if not records:
        raise EmptyDataset(f"no feature rows in {path}")
    return records


def load_weather(path) -> list[WeatherRecord]:
    required = ("site", "date", "t_mean", "dew_point", "precip", "net_radiation", "wind_speed")
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(required).issubset(reader.fieldnames):
            raise ParseError(f"{path}: need columns {sorted(required)}", line=1)
        for i, rec in enumerate(reader, start=2):
            try:
                rows.append(
                    WeatherRecord(
                        site=rec["site"].strip(),
                        date=str(_dt.date.fromisoformat(rec["date"].strip())),
                        t_mean=float(rec["t_mean"]),
                        dew_point=float(rec["dew_point"]),
                        precip=float(rec["precip"]),
                        net_radiation=float(rec["net_radiation"]),
                        wind_speed=float(rec["wind_speed"]),
                    )
                )
            except (ValueError, InvalidInput) as exc:
                raise ParseError(f"bad weather row: {exc}", line=i)
    if not rows:
        raise EmptyDataset(f"no weather rows in {path}")
    return rows
