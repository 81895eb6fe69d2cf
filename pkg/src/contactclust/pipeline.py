"""End-to-end pipeline: per-stage functions that read and write files under one output directory.

Stages, each a subdirectory of ``output_dir``::

    ingest     validated country list and wide indicator table
    contacts   symmetrized, age-aggregated contact matrices and populations
    calibrate  per-country beta0 and standardized matrices
    reduce     PCA / (2D)^2PCA features for every mode
    cluster    distances, dendrograms and flat clusters per mode
    export     long-format plot data

``run_pipeline`` simply runs the stages in order, so running them one by one
through the CLI gives the same files.
"""

from __future__ import annotations

import json
import logging
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import pandas as pd

from . import __version__
from .clustering import (DistanceMatrix, agglomerate, cut, dendrogram_segments, leaf_order,
                         pairwise_euclidean, seriate)
from .contacts import (CLUSTER_BINS, FIVE_YEAR, SETTINGS, AgePartition, AgeStructure, ContactMatrix,
                       PopulationVector, aggregate_matrix, aggregate_population, sum_settings, symmetrize)
from .epi_model import (DEFAULT_PROFILE, build_ngm, calibrate_beta, load_profile, spectral_radius,
                        standardize_contacts)
from .errors import ContactClustError, InputError, ValidationError
from .io import (DATA_DIR, digests, features_to_frame, matrices_from_long, matrices_to_long,
                 populations_from_long, populations_to_long, read_contact_csv, read_population_csv,
                 sha256, write_csv, write_json)
from .reduction import (FeatureTable, IndicatorTable, append_features, pca, two_d2_pca,
                        zscore_columns, zscore_matrix_stack)

log = logging.getLogger(__name__)

MODES = ("contacts-only", "combined", "socio-only")
STAGES = ("ingest", "contacts", "calibrate", "reduce", "cluster", "export")
MANIFEST = "manifest.json"


class IncompleteRunError(InputError):
    pass


@dataclass
class PipelineConfig:
    contacts_dir: str = str(DATA_DIR / "contacts")
    population_file: str = str(DATA_DIR / "population.csv")
    indicators_file: str = str(DATA_DIR / "indicators.csv")
    profile: str = str(DEFAULT_PROFILE)
    countries_file: str | None = str(DATA_DIR / "countries.csv")
    output_dir: str = "run"
    target_r0: float | None = None          # None: take the profile's value
    partition: list[float] = field(default_factory=lambda: list(CLUSTER_BINS.lower_bounds))
    setting_weights: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    calibration_bins: int = 6
    aggregation_population: str | None = None  # ISO3, "own", or None for the profile's choice
    pca_k: int = 4
    twod_row_k: int = 2
    twod_col_k: int = 2
    twod_form: str = "consistent"
    impute_missing: bool = False
    modes: list[str] = field(default_factory=lambda: list(MODES))
    linkage: str = "complete"
    cut_height_contacts: float = 2.5
    cut_height_combined: float = 8.0
    cut_height_socio: float = 8.0
    workers: int = 4

    def validate(self) -> None:
        absent = [f"{name}={getattr(self, name)}" for name in ("contacts_dir", "population_file", "indicators_file", "profile", "countries_file")
                  if getattr(self, name) and not Path(getattr(self, name)).exists()]
        if absent:
            raise FileNotFoundError(f"input path(s) not found: {', '.join(absent)}")
        problems = []
        for name in ("pca_k", "twod_row_k", "twod_col_k", "workers"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be >= 1")
        if self.target_r0 is not None and not self.target_r0 > 0:
            problems.append("target_r0 must be positive")
        if self.calibration_bins not in (6, 16):
            problems.append("calibration_bins must be 6 or 16")
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            problems.append(f"modes must be a nonempty subset of {MODES}, got {self.modes}")
        if len(self.setting_weights) != 4:
            problems.append("setting_weights needs four values (home, school, work, other)")
        if self.twod_form not in ("consistent", "as_written"):
            problems.append("twod_form must be 'consistent' or 'as_written'")
        for name in ("cut_height_contacts", "cut_height_combined", "cut_height_socio"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be nonnegative")
        if problems:
            raise ValidationError(problems)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(data))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def cut_height(self, mode: str) -> float:
        return {"contacts-only": self.cut_height_contacts, "combined": self.cut_height_combined,
                "socio-only": self.cut_height_socio}[mode]

    def target_structure(self) -> AgeStructure:
        part = self.age_partition()
        if part == AgePartition.between(FIVE_YEAR, CLUSTER_BINS):
            return CLUSTER_BINS
        return aggregate_population(PopulationVector("_", FIVE_YEAR, np.ones(16)), part).ages

    def age_partition(self) -> AgePartition:
        target = AgeStructure(tuple(str(b) for b in self.partition), tuple(self.partition))
        return AgePartition.between(FIVE_YEAR, target)


@dataclass
class Dataset:
    countries: tuple[str, ...]
    names: dict[str, str]
    settings: dict[tuple[str, str], ContactMatrix]
    populations: dict[str, PopulationVector]
    indicators: IndicatorTable


# -- manifest ---------------------------------------------------------------


@dataclass
class RunManifest:
    output_dir: str
    config: dict = field(default_factory=dict)
    software_version: str = __version__
    input_digests: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None

    @property
    def path(self) -> Path:
        return Path(self.output_dir) / MANIFEST

    def save(self) -> Path:
        return write_json(asdict(self), self.path)

    @classmethod
    def load(cls, output_dir: str | Path) -> "RunManifest":
        path = Path(output_dir) / MANIFEST
        if not path.exists():
            raise IncompleteRunError(f"no manifest in {output_dir}; run the 'ingest' stage first")
        return cls(**json.loads(path.read_text()))

    def completed(self, stage: str) -> bool:
        return self.stages.get(stage, {}).get("status") == "ok"

    def numeric_digests(self) -> dict[str, str]:
        """Digests of every stage output (timings excluded), for determinism checks."""
        out = {}
        for name in STAGES:
            out.update(self.stages.get(name, {}).get("outputs", {}))
        return out


def _input_paths(config: PipelineConfig) -> list[Path]:
    paths = sorted(Path(config.contacts_dir).glob("*.csv"))
    paths += [Path(config.population_file), Path(config.indicators_file), Path(config.profile)]
    if config.countries_file:
        paths.append(Path(config.countries_file))
    return [p for p in paths if p.exists()]


def _open_manifest(config: PipelineConfig, fresh: bool) -> RunManifest:
    if not fresh and (config.out / MANIFEST).exists():
        man = RunManifest.load(config.out)
        man.config = config.to_dict()
    else:
        man = RunManifest(str(config.out), config.to_dict())
    man.input_digests = digests(_input_paths(config))
    man.status, man.failed_stage, man.error = "running", None, None
    return man


def _run_stage(man: RunManifest, name: str, fn: Callable[[], list[Path]]) -> None:
    start = time.perf_counter()
    try:
        outputs = fn()
    except BaseException as exc:
        man.stages[name] = {"status": "failed", "seconds": time.perf_counter() - start}
        man.status, man.failed_stage = "failed", name
        man.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        man.save()
        raise
    root = Path(man.output_dir)
    man.stages[name] = {
        "status": "ok",
        "seconds": round(time.perf_counter() - start, 6),
        "outputs": digests(outputs, root),
    }
    man.save()


def run_stage(config: PipelineConfig, stage: str, fresh: bool = False) -> RunManifest:
    """Run one stage, recording it in the output directory's manifest."""
    config.validate()
    config.out.mkdir(parents=True, exist_ok=True)
    man = _open_manifest(config, fresh or stage == "ingest")
    prereq = STAGES[:STAGES.index(stage)]
    missing = [s for s in prereq if s != "export" and not man.completed(s)]
    if missing:
        man.status, man.failed_stage = "failed", stage
        man.error = f"stage '{stage}' needs completed stage(s): {', '.join(missing)}"
        man.save()
        raise IncompleteRunError(man.error)
    fn = {"ingest": _stage_ingest, "contacts": _stage_contacts, "calibrate": _stage_calibrate,
          "reduce": _stage_reduce, "cluster": _stage_cluster, "export": _stage_export}[stage]
    _run_stage(man, stage, lambda: fn(config))
    man.status = "ok" if stage == STAGES[-1] or all(man.completed(s) for s in STAGES) else "partial"
    man.save()
    return man


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Run every stage in order; the manifest records timings, digests and any failed stage."""
    man = None
    for stage in STAGES:
        man = run_stage(config, stage, fresh=stage == "ingest")
    man.status = "ok"
    man.save()
    return man


# -- ingest -----------------------------------------------------------------


def ingest(config: PipelineConfig) -> Dataset:
    """Load and cross-check all inputs, collecting every problem before failing."""
    problems: list[str] = []
    contacts_dir = Path(config.contacts_dir)

    names: dict[str, str] = {}
    if config.countries_file:
        cdf = pd.read_csv(config.countries_file, dtype=str)
        names = dict(zip(cdf["iso3"], cdf["name"]))

    try:
        pops = read_population_csv(Path(config.population_file), FIVE_YEAR)
    except (InputError, KeyError, ValueError) as exc:
        problems.append(f"population: {exc}")
        pops = {}
    try:
        ind_long = pd.read_csv(config.indicators_file, dtype={"iso3": str, "indicator_name": str})
        lacking = {"iso3", "indicator_name", "value"} - set(ind_long.columns)
        if lacking:
            raise InputError(f"missing columns {sorted(lacking)}")
    except (InputError, ValueError) as exc:
        problems.append(f"indicators: {exc}")
        ind_long = pd.DataFrame(columns=["iso3", "indicator_name", "value"])

    contact_isos = {p.name.split("_", 1)[0] for p in contacts_dir.glob("*_*.csv")}
    expected = set(names) or (set(pops) | set(ind_long["iso3"]) | contact_isos)
    countries = tuple(sorted(expected))

    for iso in sorted(contact_isos - expected):
        problems.append(f"{iso}: contact matrices present but country not listed")
    settings: dict[tuple[str, str], ContactMatrix] = {}
    missing_contacts = []
    for iso in countries:
        for s in SETTINGS:
            path = contacts_dir / f"{iso}_{s}.csv"
            if not path.exists():
                missing_contacts.append(f"{iso}_{s}")
                continue
            try:
                settings[(iso, s)] = read_contact_csv(path, iso, s, FIVE_YEAR)
            except (InputError, ValueError) as exc:
                problems.append(f"{path.name}: {exc}")
    missing_isos = sorted({m.split("_")[0] for m in missing_contacts})
    for iso in missing_isos:
        lacking = [m.split("_")[1] for m in missing_contacts if m.startswith(iso + "_")]
        problems.append(f"{iso}: missing contact file(s) for {', '.join(lacking)}")

    for iso in countries:
        if iso not in pops:
            problems.append(f"{iso}: absent from population file")
    for iso in sorted(set(pops) - set(countries)):
        problems.append(f"{iso}: in population file but not in the country list")
    ind_isos = set(ind_long["iso3"])
    for iso in countries:
        if iso not in ind_isos:
            problems.append(f"{iso}: absent from indicators file")
    for iso in sorted(ind_isos - set(countries)):
        problems.append(f"{iso}: in indicators file but not in the country list")

    table = None
    if not problems:
        try:
            table = IndicatorTable.from_long(ind_long, countries)
            if table.missing.any() and not config.impute_missing:
                for r, c in np.argwhere(table.missing):
                    problems.append(f"{countries[r]}: missing indicator {table.indicators[c]!r}")
        except InputError as exc:
            problems.append(f"indicators: {exc}")
    if problems:
        raise ValidationError(problems)
    return Dataset(countries, names, settings, {k: pops[k] for k in countries}, table)


def _stage_ingest(config: PipelineConfig) -> list[Path]:
    ds = ingest(config)
    d = config.out / "ingest"
    countries = pd.DataFrame({"iso3": ds.countries, "name": [ds.names.get(c, c) for c in ds.countries]})
    return [
        write_csv(countries, d / "countries.csv"),
        write_csv(ds.indicators.to_frame().reset_index(), d / "indicators_wide.csv"),
        write_csv(pd.DataFrame({"indicator": ds.indicators.indicators,
                                "n_missing": ds.indicators.missing.sum(axis=0)}), d / "indicator_summary.csv"),
    ]


# -- contacts ---------------------------------------------------------------


def process_country(ds: Dataset, iso: str, part: AgePartition, target: AgeStructure,
                    weights) -> tuple[list[ContactMatrix], list[PopulationVector]]:
    """Sum, symmetrize and aggregate one country's matrices (per setting and full)."""
    pop16 = ds.populations[iso]
    pop6 = aggregate_population(pop16, part, target)
    per_setting = [ds.settings[(iso, s)] for s in SETTINGS]
    full16 = symmetrize(sum_settings(*per_setting, weights=weights), pop16)
    mats = [full16]
    for m in per_setting:
        mats.append(aggregate_matrix(symmetrize(m, pop16), pop16, part, target))
    mats.append(aggregate_matrix(full16, pop16, part, target))
    return mats, [pop16, pop6]


def _stage_contacts(config: PipelineConfig) -> list[Path]:
    ds = ingest(config)
    part, target = config.age_partition(), config.target_structure()
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(lambda iso: process_country(ds, iso, part, target, config.setting_weights),
                                ds.countries))
    d = config.out / "contacts"
    mats = [m for r in results for m in r[0]]
    pops = [p for r in results for p in r[1]]
    return [write_csv(matrices_to_long(mats), d / "matrices.csv"),
            write_csv(populations_to_long(pops), d / "population.csv")]


def _structures(config: PipelineConfig) -> dict[int, AgeStructure]:
    t = config.target_structure()
    return {16: FIVE_YEAR, len(t): t}


def load_contacts_stage(config: PipelineConfig):
    d = config.out / "contacts"
    structs = _structures(config)
    mats = matrices_from_long(pd.read_csv(d / "matrices.csv", dtype={"iso3": str}), structs)
    pops = populations_from_long(pd.read_csv(d / "population.csv", dtype={"iso3": str, "bin_label": str}), structs)
    return mats, pops


# -- calibrate --------------------------------------------------------------


def _stage_calibrate(config: PipelineConfig) -> list[Path]:
    mats, pops = load_contacts_stage(config)
    profile = load_profile(config.profile)
    target_r0 = config.target_r0 if config.target_r0 is not None else profile.target_r0
    agg_pop = config.aggregation_population or profile.aggregation_population or "own"
    part = config.age_partition()
    n6 = len(config.target_structure())
    countries = list(dict.fromkeys(iso for iso, _ in pops))
    if agg_pop != "own" and (agg_pop, 16) not in pops:
        raise InputError(f"aggregation population {agg_pop!r} is not among the loaded countries")

    def one(iso: str):
        ref = pops[(iso if agg_pop == "own" else agg_pop, 16)]
        if config.calibration_bins == 16:
            params = profile.params_for()
            mu, pop = mats[(iso, "full", 16)], pops[(iso, 16)]
        else:
            params = profile.params_for(ref, part)
            mu, pop = mats[(iso, "full", n6)], pops[(iso, n6)]
        beta = calibrate_beta(mu, params, pop, target_r0)
        rho = spectral_radius(build_ngm(params, mu, pop))
        std = standardize_contacts(beta, mats[(iso, "full", n6)])
        return iso, beta, rho, std, params

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(one, countries))
    d = config.out / "calibrate"
    betas = pd.DataFrame({"iso3": [r[0] for r in results], "beta0": [r[1] for r in results],
                          "spectral_radius": [r[2] for r in results],
                          "r0": [r[1] * r[2] for r in results]})
    params = results[0][4]
    ptab = pd.DataFrame({"age_group": config.target_structure().labels if config.calibration_bins == 6 else FIVE_YEAR.labels,
                         "theta": params.theta, "eta": params.eta, "zeta": params.zeta, "h": params.h})
    return [
        write_csv(betas, d / "beta.csv"),
        write_csv(matrices_to_long([r[3] for r in results]), d / "standardized.csv"),
        write_csv(ptab, d / "params.csv"),
        write_json({"target_r0": target_r0, "calibration_bins": config.calibration_bins,
                    "aggregation_population": agg_pop, "rates": profile.rates}, d / "calibration.json"),
    ]


def load_standardized(config: PipelineConfig) -> list[ContactMatrix]:
    df = pd.read_csv(config.out / "calibrate" / "standardized.csv", dtype={"iso3": str})
    return list(matrices_from_long(df, _structures(config), standardized=True).values())


# -- reduce -----------------------------------------------------------------


def _stage_reduce(config: PipelineConfig) -> list[Path]:
    stack = load_standardized(config)
    labels = tuple(m.country for m in stack)
    wide = pd.read_csv(config.out / "ingest" / "indicators_wide.csv", dtype={"iso3": str}).set_index("iso3")
    wide = wide.reindex(list(labels))
    table = IndicatorTable(labels, tuple(wide.columns), wide.to_numpy(dtype=float))

    socio = pca(zscore_columns(table, impute=config.impute_missing), k=config.pca_k)
    proj = two_d2_pca(zscore_matrix_stack(stack), config.twod_row_k, config.twod_col_k, config.twod_form)
    contact_feats = FeatureTable(labels, proj.flattened)
    socio_feats = FeatureTable(labels, socio.scores)
    mode_feats = {"contacts-only": contact_feats, "socio-only": socio_feats,
                  "combined": append_features(contact_feats, socio_feats)}

    d = config.out / "reduce"
    n_eig = socio.eigenvalues.size
    total = socio.eigenvalues.sum()
    outs = [
        write_csv(features_to_frame(labels, socio.scores), d / "socio_features.csv"),
        write_csv(features_to_frame(labels, proj.flattened), d / "contact_features.csv"),
        write_csv(pd.DataFrame({"component": np.arange(1, n_eig + 1), "eigenvalue": socio.eigenvalues,
                                "explained_variance_ratio": socio.eigenvalues / total,
                                "cumulative": np.cumsum(socio.eigenvalues) / total}), d / "eigenvalues.csv"),
        write_csv(pd.DataFrame({"component": np.arange(1, socio.k + 1),
                                "explained_variance_ratio": socio.explained_variance_ratio,
                                "cumulative": np.cumsum(socio.explained_variance_ratio)}), d / "explained_variance.csv"),
        write_csv(pd.DataFrame(socio.loadings, index=pd.Index(socio.features, name="indicator"),
                               columns=[f"PC{k + 1}" for k in range(socio.k)]).reset_index(), d / "loadings.csv"),
        write_csv(_projection_frame(proj), d / "twod_projections.csv"),
    ]
    for mode in config.modes:
        outs.append(write_csv(features_to_frame(labels, mode_feats[mode].values), d / f"features_{mode}.csv"))
    return outs


def _projection_frame(proj) -> pd.DataFrame:
    rows = []
    for name, M, w in (("Y", proj.row_proj, proj.row_eigenvalues), ("Z", proj.col_proj, proj.col_eigenvalues)):
        for i in range(M.shape[0]):
            for k in range(M.shape[1]):
                rows.append({"matrix": name, "row": i, "component": k + 1, "value": M[i, k], "eigenvalue": w[k]})
    return pd.DataFrame(rows)


# -- cluster ----------------------------------------------------------------


def cluster_mode(config: PipelineConfig, mode: str):
    df = pd.read_csv(config.out / "reduce" / f"features_{mode}.csv", dtype={"iso3": str})
    labels = tuple(df["iso3"])
    dist = pairwise_euclidean(df.drop(columns="iso3").to_numpy(dtype=float), labels)
    dend = agglomerate(dist, config.linkage)
    return dist, dend, cut(dend, config.cut_height(mode))


def _stage_cluster(config: PipelineConfig) -> list[Path]:
    names = pd.read_csv(config.out / "ingest" / "countries.csv", dtype=str).set_index("iso3")["name"]
    outs = []
    for mode in config.modes:
        dist, dend, assign = cluster_mode(config, mode)
        d = config.out / "cluster" / mode
        order = leaf_order(dend)
        ser = seriate(dist, order)
        outs += [
            write_csv(pd.DataFrame(dist.values, index=pd.Index(dist.labels, name="iso3"), columns=dist.labels), d / "distances.csv", index=True),
            write_csv(pd.DataFrame(ser.values, index=pd.Index(ser.labels, name="iso3"), columns=ser.labels), d / "seriated_distances.csv", index=True),
            write_csv(pd.DataFrame({"iso3": assign.labels, "name": [names.get(l, l) for l in assign.labels],
                                    "cluster_id": assign.cluster_ids}), d / "clusters.csv"),
            write_csv(pd.DataFrame(dend.linkage_matrix(), columns=["left", "right", "height", "size"]), d / "linkage.csv"),
            write_csv(pd.DataFrame({"position": range(len(order)), "iso3": order}), d / "leaf_order.csv"),
            write_json(dend.to_dict(), d / "dendrogram.json"),
        ]
        (d / "dendrogram.nwk").write_text(dend.to_newick() + "\n")
        outs.append(d / "dendrogram.nwk")
        write_json({"mode": mode, "cut_height": assign.height, "n_clusters": assign.n_clusters,
                    "sizes": assign.sizes(), "clusters": assign.groups()}, d / "summary.json")
        outs.append(d / "summary.json")
    return outs


# -- export -----------------------------------------------------------------


def export_plots(run: RunManifest, out_dir: Path | None = None) -> list[Path]:
    """Long-format plot data for heatmaps, scree, loadings, 2-D projection and dendrograms."""
    missing = [s for s in STAGES[:-1] if not run.completed(s)]
    if missing:
        raise IncompleteRunError(f"run in {run.output_dir} is incomplete: missing stage(s) {', '.join(missing)}")
    config = PipelineConfig.from_mapping(run.config)
    root = Path(run.output_dir)
    d = out_dir or root / "export"
    outs = []

    mats = pd.read_csv(root / "contacts" / "matrices.csv", dtype={"iso3": str})
    n6 = len(config.target_structure())
    heat = mats[mats["n_bins"] == n6]
    std = pd.read_csv(root / "calibrate" / "standardized.csv", dtype={"iso3": str}).assign(setting="standardized")
    heat = pd.concat([heat, std], ignore_index=True)[["iso3", "setting", "age_i", "age_j", "value"]]
    outs.append(write_csv(heat, d / "contact_heatmaps.csv"))

    eig = pd.read_csv(root / "reduce" / "eigenvalues.csv")
    outs.append(write_csv(eig, d / "scree.csv"))
    load = pd.read_csv(root / "reduce" / "loadings.csv")
    pcs = [c for c in load.columns if c.startswith("PC")][:4]
    outs.append(write_csv(load.melt(id_vars="indicator", value_vars=pcs, var_name="component", value_name="loading"),
                          d / "loadings.csv"))

    socio = pd.read_csv(root / "reduce" / "socio_features.csv", dtype={"iso3": str})
    names = pd.read_csv(root / "ingest" / "countries.csv", dtype=str).set_index("iso3")["name"]
    proj = pd.DataFrame({"iso3": socio["iso3"], "name": socio["iso3"].map(names), "x": socio["f1"], "y": socio["f2"]})
    if "combined" in config.modes:
        cl = pd.read_csv(root / "cluster" / "combined" / "clusters.csv", dtype={"iso3": str})
        proj = proj.merge(cl[["iso3", "cluster_id"]], on="iso3", how="left")
    outs.append(write_csv(proj, d / "projection_2d.csv"))

    for mode in config.modes:
        cdir = root / "cluster" / mode
        ser = pd.read_csv(cdir / "seriated_distances.csv", dtype={"iso3": str}).set_index("iso3")
        long = ser.reset_index().melt(id_vars="iso3", var_name="col_iso3", value_name="distance")
        long = long.rename(columns={"iso3": "row_iso3"})
        pos = {lab: i for i, lab in enumerate(ser.index)}
        long.insert(0, "row", long["row_iso3"].map(pos))
        long.insert(1, "col", long["col_iso3"].map(pos))
        outs.append(write_csv(long, d / f"distance_heatmap_{mode}.csv"))

        lk = pd.read_csv(cdir / "linkage.csv")
        order = pd.read_csv(cdir / "leaf_order.csv", dtype={"iso3": str})["iso3"].tolist()
        dend = _dendrogram_from_linkage(_labels_from_clusters(cdir), lk)
        segs = pd.DataFrame(dendrogram_segments(dend))
        outs.append(write_csv(segs, d / f"dendrogram_{mode}.csv"))
        outs.append(write_csv(pd.DataFrame({"x": range(len(order)), "iso3": order}), d / f"dendrogram_leaves_{mode}.csv"))
    return outs


def _labels_from_clusters(cdir: Path) -> list[str]:
    return pd.read_csv(cdir / "clusters.csv", dtype={"iso3": str})["iso3"].tolist()


def _dendrogram_from_linkage(labels, lk: pd.DataFrame):
    from .clustering import Dendrogram, Merge

    merges = tuple(Merge(int(r.left), int(r.right), float(r.height), int(r.size)) for r in lk.itertuples())
    return Dendrogram(tuple(labels), merges)


def _stage_export(config: PipelineConfig) -> list[Path]:
    return export_plots(RunManifest.load(config.out))
