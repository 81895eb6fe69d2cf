"""CSV readers and writers for the bundled data layout and stage outputs.

Floats are written with full ``repr`` precision so every stage reads back
exactly what the previous one computed.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .contacts import AgeStructure, ContactMatrix, PopulationVector
from .errors import InputError

DATA_DIR = Path(__file__).parent / "data"


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def digests(paths: Iterable[Path], root: Path | None = None) -> dict[str, str]:
    out = {}
    for p in sorted(paths):
        key = str(p.relative_to(root)) if root is not None else str(p)
        out[key] = sha256(p)
    return out


def write_csv(df: pd.DataFrame, path: Path, index: bool = False) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=index, lineterminator="\n")
    return path


def write_json(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
    return path


def read_contact_csv(path: Path, country: str, setting: str, ages: AgeStructure) -> ContactMatrix:
    """One setting matrix: header row of bin labels, one data row per reporting age group."""
    df = pd.read_csv(path)
    if tuple(df.columns) != ages.labels:
        raise InputError(f"{path.name}: header {list(df.columns)[:3]}... does not match the expected age bins")
    values = df.to_numpy(dtype=float)
    if values.shape != (len(ages), len(ages)):
        raise InputError(f"{path.name}: expected {len(ages)}x{len(ages)} values, got {values.shape}")
    if np.any(values < 0):
        raise InputError(f"{path.name}: negative contact rates")
    return ContactMatrix(country, setting, ages, values)


def read_population_csv(path: Path, ages: AgeStructure) -> dict[str, PopulationVector]:
    df = pd.read_csv(path, dtype={"iso3": str, "bin_label": str})
    missing = {"iso3", "bin_label", "count"} - set(df.columns)
    if missing:
        raise InputError(f"{path.name}: missing columns {sorted(missing)}")
    out = {}
    for iso, grp in df.groupby("iso3", sort=True):
        counts = grp.set_index("bin_label")["count"]
        if tuple(counts.index) != ages.labels:
            raise InputError(f"{path.name}: {iso} bins {list(counts.index)} do not match {list(ages.labels)}")
        out[iso] = PopulationVector(iso, ages, counts.to_numpy(dtype=float))
    return out


def matrices_to_long(mats: Iterable[ContactMatrix], **extra) -> pd.DataFrame:
    rows = []
    for m in mats:
        n = len(m.ages)
        i, j = np.divmod(np.arange(n * n), n)
        rows.append(pd.DataFrame({
            "iso3": m.country, "setting": m.setting, "n_bins": n, "i": i, "j": j,
            "age_i": np.asarray(m.ages.labels)[i], "age_j": np.asarray(m.ages.labels)[j],
            "value": m.values.ravel(), **extra,
        }))
    return pd.concat(rows, ignore_index=True)


def matrices_from_long(df: pd.DataFrame, structures: Mapping[int, AgeStructure], standardized: bool = False) -> dict[tuple[str, str, int], ContactMatrix]:
    out = {}
    for (iso, setting, n), grp in df.groupby(["iso3", "setting", "n_bins"], sort=False):
        grp = grp.sort_values(["i", "j"])
        values = grp["value"].to_numpy(dtype=float).reshape(n, n)
        out[(iso, setting, int(n))] = ContactMatrix(iso, setting, structures[int(n)], values, standardized)
    return out


def populations_to_long(pops: Iterable[PopulationVector]) -> pd.DataFrame:
    return pd.DataFrame([
        {"iso3": p.country, "n_bins": len(p.ages), "bin_label": lab, "lower_bound": lb, "count": c}
        for p in pops for lab, lb, c in zip(p.ages.labels, p.ages.lower_bounds, p.counts)
    ])


def populations_from_long(df: pd.DataFrame, structures: Mapping[int, AgeStructure]) -> dict[tuple[str, int], PopulationVector]:
    out = {}
    for (iso, n), grp in df.groupby(["iso3", "n_bins"], sort=False):
        out[(iso, int(n))] = PopulationVector(iso, structures[int(n)], grp["count"].to_numpy(dtype=float))
    return out


def features_to_frame(labels, values, prefix: str = "f") -> pd.DataFrame:
    values = np.asarray(values, dtype=float)
    df = pd.DataFrame(values, columns=[f"{prefix}{k + 1}" for k in range(values.shape[1])])
    df.insert(0, "iso3", list(labels))
    return df
