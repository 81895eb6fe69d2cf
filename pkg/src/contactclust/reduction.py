"""Standardization, PCA of indicator tables and (2D)^2PCA of matrix stacks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .contacts import ContactMatrix
from .errors import DegenerateInputError, InputError, NumericalError


@dataclass(frozen=True)
class IndicatorTable:
    countries: tuple[str, ...]
    indicators: tuple[str, ...]
    values: np.ndarray
    missing: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "indicators", tuple(self.indicators))
        if values.shape != (len(self.countries), len(self.indicators)):
            raise InputError(f"indicator values have shape {values.shape}, expected "
                             f"{(len(self.countries), len(self.indicators))}")
        missing = np.isnan(values) if self.missing is None else np.asarray(self.missing, dtype=bool)
        if missing.shape != values.shape:
            raise InputError("missing mask does not match values")
        if np.any(np.isnan(values) & ~missing):
            raise InputError("NaN outside the missing mask")
        if np.any(np.isinf(values)):
            raise InputError("indicator table has infinite entries")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)

    @classmethod
    def from_long(cls, df: pd.DataFrame, countries: Sequence[str] | None = None) -> "IndicatorTable":
        """Pivot ``iso3, indicator_name, value`` rows into a country x indicator table.

        Indicator columns keep their first-appearance order; rows follow
        ``countries`` when given.
        """
        dup = df.duplicated(["iso3", "indicator_name"])
        if dup.any():
            first = df.loc[dup, ["iso3", "indicator_name"]].iloc[0].tolist()
            raise InputError(f"duplicate indicator entry {first}")
        names = list(dict.fromkeys(df["indicator_name"]))
        rows = list(countries) if countries is not None else sorted(df["iso3"].unique())
        wide = df.pivot(index="iso3", columns="indicator_name", values="value").reindex(index=rows, columns=names)
        return cls(tuple(rows), tuple(names), wide.to_numpy(dtype=float))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=pd.Index(self.countries, name="iso3"), columns=list(self.indicators))


def zscore_columns(table: IndicatorTable, impute: bool = False, ddof: int = 1) -> IndicatorTable:
    """Center each column and scale it to unit standard deviation (sample sd by default).

    Missing entries are an error unless ``impute`` is set, in which case they
    are filled with the column mean of the observed values (0 after scaling).
    """
    if table.missing.any() and not impute:
        r, c = np.argwhere(table.missing)[0]
        raise InputError(f"missing value for {table.countries[r]}/{table.indicators[c]} "
                         f"({int(table.missing.sum())} in total); enable imputation to fill them")
    out = np.empty_like(table.values)
    for j, name in enumerate(table.indicators):
        obs = table.values[~table.missing[:, j], j]
        if np.unique(obs).size < 2:
            raise DegenerateInputError(f"indicator {name!r} has fewer than two distinct observed values")
        mean, sd = obs.mean(), obs.std(ddof=ddof)
        col = np.where(table.missing[:, j], mean, table.values[:, j])
        out[:, j] = (col - mean) / sd
    return IndicatorTable(table.countries, table.indicators, out, np.zeros_like(table.missing))


def zscore_matrix_stack(stack: Sequence[ContactMatrix], ddof: int = 0) -> list[ContactMatrix]:
    """Standardize each matrix cell across the stack (population sd by default)."""
    if not stack:
        raise InputError("empty matrix stack")
    shapes = {m.values.shape for m in stack}
    if len(shapes) != 1:
        raise InputError(f"matrices in the stack differ in shape: {sorted(shapes)}")
    if len(stack) <= ddof:
        raise DegenerateInputError("stack too small for the requested degrees of freedom")
    X = np.stack([m.values for m in stack])
    mean, sd = X.mean(axis=0), X.std(axis=0, ddof=ddof)
    flat = np.abs(X - mean).max(axis=0)
    bad = np.argwhere((sd <= 0) | (flat == 0))
    if bad.size:
        i, j = bad[0]
        raise DegenerateInputError(f"cell ({i}, {j}) has zero variance across the stack ({len(bad)} such cells)")
    Z = (X - mean) / sd
    return [ContactMatrix(m.country, m.setting, m.ages, z, m.standardized) for m, z in zip(stack, Z)]


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is nonnegative."""
    V = V.copy()
    for j in range(V.shape[1]):
        if V[np.argmax(np.abs(V[:, j])), j] < 0:
            V[:, j] = -V[:, j]
    return V


@dataclass(frozen=True)
class PcaResult:
    labels: tuple[str, ...]
    features: tuple[str, ...]
    scores: np.ndarray           # n x k
    loadings: np.ndarray         # p x k, orthonormal columns
    explained_variance_ratio: np.ndarray  # k
    eigenvalues: np.ndarray      # all nonzero-rank variances, descending
    mean: np.ndarray             # column means removed before projection

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    def reconstruct(self) -> np.ndarray:
        return self.scores @ self.loadings.T + self.mean


def pca(table: IndicatorTable | np.ndarray, k: int = 4) -> PcaResult:
    """Principal components of the column-centered data via SVD."""
    if isinstance(table, IndicatorTable):
        if table.missing.any():
            raise InputError("PCA needs a complete table")
        X, labels, feats = table.values, table.countries, table.indicators
    else:
        X = np.asarray(table, dtype=float)
        labels = tuple(str(i) for i in range(X.shape[0]))
        feats = tuple(f"x{j + 1}" for j in range(X.shape[1]))
    n, p = X.shape
    if not 1 <= k <= min(n - 1, p):
        raise InputError(f"k must be in [1, {min(n - 1, p)}], got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    try:
        _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    eig = s**2 / (n - 1)
    total = eig.sum()
    if total <= 0:
        raise DegenerateInputError("data has zero variance")
    V = _fix_signs(Vt[:k].T)
    return PcaResult(tuple(labels), tuple(feats), Xc @ V, V, eig[:k] / total, eig, mean)


def _top_eigvecs(G: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    try:
        w, V = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    return w[order], _fix_signs(V[:, order[:k]])


@dataclass(frozen=True)
class TwoDProjection:
    labels: tuple[str, ...]
    row_proj: np.ndarray   # Y, n x row_k
    col_proj: np.ndarray   # Z, n x col_k
    reduced: np.ndarray    # (countries, a, b)
    row_eigenvalues: np.ndarray = field(repr=False)
    col_eigenvalues: np.ndarray = field(repr=False)
    form: str = "consistent"

    @property
    def flattened(self) -> np.ndarray:
        return self.reduced.reshape(self.reduced.shape[0], -1)

    def project(self, S: np.ndarray) -> np.ndarray:
        return _project(S, self.row_proj, self.col_proj, self.form)


def _project(S: np.ndarray, Y: np.ndarray, Z: np.ndarray, form: str) -> np.ndarray:
    if form == "consistent":
        return Y.T @ S @ Z
    return Z.T @ S @ Y


def two_d2_pca(stack: Sequence[ContactMatrix] | np.ndarray, row_k: int = 2, col_k: int = 2,
               form: str = "consistent") -> TwoDProjection:
    """Two-directional 2D PCA of a stack of square matrices.

    Z holds the top ``col_k`` eigenvectors of ``sum (S - Sbar)^T (S - Sbar)``
    (acting on matrix columns, i.e. from the right) and Y the top ``row_k``
    eigenvectors of ``sum (S - Sbar)(S - Sbar)^T`` (acting from the left).
    With ``form="consistent"`` each matrix reduces to ``Y^T S Z``; with
    ``form="as_written"`` to ``Z^T S Y``. The two agree whenever the stack
    is symmetric. Projection is applied to the uncentered matrices.
    """
    if form not in ("consistent", "as_written"):
        raise InputError(f"unknown projection form {form!r}")
    if isinstance(stack, np.ndarray):
        X = np.asarray(stack, dtype=float)
        labels = tuple(str(i) for i in range(X.shape[0]))
    else:
        if not stack:
            raise InputError("empty matrix stack")
        shapes = {m.values.shape for m in stack}
        if len(shapes) != 1:
            raise InputError(f"matrices in the stack differ in shape: {sorted(shapes)}")
        X = np.stack([m.values for m in stack])
        labels = tuple(m.country for m in stack)
    if X.ndim != 3 or X.shape[0] == 0 or X.shape[1] != X.shape[2]:
        raise InputError("stack must hold square matrices")
    dim = X.shape[1]
    if not (1 <= row_k <= dim and 1 <= col_k <= dim):
        raise InputError(f"row_k and col_k must be in [1, {dim}]")
    D = X - X.mean(axis=0)
    G_col = np.einsum("cki,ckj->ij", D, D)
    G_row = np.einsum("cik,cjk->ij", D, D)
    wz, Z = _top_eigvecs(G_col, col_k)
    wy, Y = _top_eigvecs(G_row, row_k)
    reduced = np.stack([_project(S, Y, Z, form) for S in X])
    return TwoDProjection(labels, Y, Z, reduced, wy, wz, form)


@dataclass(frozen=True)
class FeatureTable:
    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "labels", tuple(self.labels))
        if values.shape[0] != len(self.labels):
            raise InputError("feature rows and labels differ in count")
        object.__setattr__(self, "values", values)

    def to_frame(self, prefix: str = "f") -> pd.DataFrame:
        cols = [f"{prefix}{j + 1}" for j in range(self.values.shape[1])]
        return pd.DataFrame(self.values, index=pd.Index(self.labels, name="iso3"), columns=cols)


AppendedFeatures = FeatureTable


def append_features(contact_feats: FeatureTable, socio_feats: FeatureTable) -> FeatureTable:
    """Concatenate contact and socioeconomic features row by row (contact block first)."""
    if contact_feats.labels != socio_feats.labels:
        raise InputError("contact and socioeconomic features list countries in a different order")
    return FeatureTable(contact_feats.labels, np.hstack([contact_feats.values, socio_feats.values]))
