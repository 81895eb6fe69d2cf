#!/usr/bin/env python3
"""Rebuild the bundled dataset under ``src/contactclust/data`` from upstream wheels.

The bundled files are committed, so this script only needs to run when the
snapshot changes. It reads three published wheels directly (no install):

    synthpops   Prem et al. (2017) synthetic contact matrices, per setting
    covasim     UN WPP 2019 country age pyramids (year 2020, 10-year bins)
    rdatasets   UNICEF SOWC 2019, World Bank GDP series, CIA World Factbook

Usage
-----
    pip download --no-deps -d wheels synthpops==1.10.5 covasim==3.1.9 rdatasets==0.2.10
    python scripts/build_dataset.py --wheels wheels
"""
from __future__ import annotations

import argparse
import gzip
import io
import lzma
import pickle
import runpy
import tempfile
import zipfile
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator

OUT = Path(__file__).resolve().parents[1] / "src" / "contactclust" / "data"

# iso3 -> (display name, Prem/WPP/SOWC name, CIA factbook name, World Bank name)
COUNTRIES = {
    "DZA": ("Algeria", "Algeria", "Algeria", "Algeria"),
    "ZAF": ("South Africa", "South Africa", "South Africa", "South Africa"),
    "MAR": ("Morocco", "Morocco", "Morocco", "Morocco"),
    "TUN": ("Tunisia", "Tunisia", "Tunisia", "Tunisia"),
    "CMR": ("Cameroon", "Cameroon", "Cameroon", "Cameroon"),
    "MUS": ("Mauritius", "Mauritius", "Mauritius", "Mauritius"),
    "SYC": ("Seychelles", "Seychelles", "Seychelles", "Seychelles"),
    "UGA": ("Uganda", "Uganda", "Uganda", "Uganda"),
    "ZMB": ("Zambia", "Zambia", "Zambia", "Zambia"),
    "GHA": ("Ghana", "Ghana", "Ghana", "Ghana"),
    "NAM": ("Namibia", "Namibia", "Namibia", "Namibia"),
    "COG": ("Congo", "Congo", "Congo, Republic of the", "Congo, Rep."),
    "GIN": ("Guinea", "Guinea", "Guinea", "Guinea"),
    "BWA": ("Botswana", "Botswana", "Botswana", "Botswana"),
    "BEN": ("Benin", "Benin", "Benin", "Benin"),
    "MOZ": ("Mozambique", "Mozambique", "Mozambique", "Mozambique"),
    "RWA": ("Rwanda", "Rwanda", "Rwanda", "Rwanda"),
    "SLE": ("Sierra Leone", "Sierra Leone", "Sierra Leone", "Sierra Leone"),
    "TZA": ("Tanzania", "United Republic of Tanzania", "Tanzania", "Tanzania"),
    "ETH": ("Ethiopia", "Ethiopia", "Ethiopia", "Ethiopia"),
    "LSO": ("Lesotho", "Lesotho", "Lesotho", "Lesotho"),
    "STP": ("Sao Tome and Principe", "Sao Tome and Principe", "Sao Tome and Principe", "Sao Tome and Principe"),
    "BFA": ("Burkina Faso", "Burkina Faso", "Burkina Faso", "Burkina Faso"),
    "LBR": ("Liberia", "Liberia", "Liberia", "Liberia"),
    "NGA": ("Nigeria", "Nigeria", "Nigeria", "Nigeria"),
    "EGY": ("Egypt", "Egypt", "Egypt", "Egypt, Arab Rep."),
    "SEN": ("Senegal", "Senegal", "Senegal", "Senegal"),
    "KEN": ("Kenya", "Kenya", "Kenya", "Kenya"),
    "ZWE": ("Zimbabwe", "Zimbabwe", "Zimbabwe", "Zimbabwe"),
    "NER": ("Niger", "Niger", "Niger", "Niger"),
    "CPV": ("Cape Verde", "Cabo Verde", "Cabo Verde", "Cabo Verde"),
    "MRT": ("Mauritania", "Mauritania", "Mauritania", "Mauritania"),
}

PREM_ALIASES = {"Sao Tome and Principe": "Sao Tome and Principe "}
SETTINGS = {"home": "home", "school": "school", "work": "work", "other": "other_locations"}
AGE_LABELS = [f"{a}-{a + 4}" for a in range(0, 75, 5)] + ["75+"]

# Kenya 6-bin totals (0-4, 5-14, 15-19, 20-24, 25-64, 65+), WPP 2019 for 2020.
KENYA_SIX = [7044364, 13705769, 6010656, 5236593, 20424690, 1349228]


def _wheel(wheels: Path, prefix: str) -> zipfile.ZipFile:
    (path,) = sorted(wheels.glob(f"{prefix}-*.whl"))
    return zipfile.ZipFile(path)


def load_prem(wheels: Path) -> dict[str, dict[str, np.ndarray]]:
    zf = _wheel(wheels, "synthpops")
    out: dict[str, dict[str, np.ndarray]] = {}
    for setting, stem in SETTINGS.items():
        raw = zf.read(f"synthpops/data/MUestimates_{stem}.obj")
        out[setting] = pickle.loads(gzip.decompress(raw))
    return out


def load_wpp(wheels: Path) -> dict[str, dict[str, int]]:
    zf = _wheel(wheels, "covasim")
    src = zf.read("covasim/data/country_age_data.py").decode()
    with tempfile.NamedTemporaryFile("w", suffix=".py", delete=False) as fh:
        fh.write(src)
    return runpy.run_path(fh.name)["data"]


def load_rdataset(zf: zipfile.ZipFile, package: str, item: str) -> pd.DataFrame:
    raw = zf.read(f"rdatasets/_data/{package}/{item}.pkl.compress")
    return pd.read_pickle(io.BytesIO(lzma.decompress(raw)))


def graduate(ten_year: dict[str, int]) -> np.ndarray:
    """Split 10-year counts into the 16 five-year bins (last bin 75+).

    Monotone cubic interpolation of the cumulative count at ages 0, 10, ..., 80
    keeps every 10-year total exact and every 5-year count nonnegative.
    """
    keys = ["0-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79"]
    counts = np.array([ten_year[k] for k in keys], dtype=float)
    ages = np.arange(0, 90, 10, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(counts)])
    interp = PchipInterpolator(ages, cum)
    fine = np.rint(interp(np.arange(0, 80, 5, dtype=float))).astype(np.int64)
    fine[::2] = cum[:-1].astype(np.int64)
    edges = np.concatenate([fine, [int(cum[-1])]])
    five = np.diff(edges)
    five[-1] += ten_year["80+"]
    return five


def kenya_pyramid(ten_year: dict[str, int]) -> np.ndarray:
    """Kenya: the 6-bin totals are imposed exactly; splits within them are graduated."""
    five = graduate(ten_year)
    out = five.copy()
    out[0] = KENYA_SIX[0]
    out[1] = ten_year["0-9"] - KENYA_SIX[0]
    out[2] = KENYA_SIX[1] - out[1]
    out[3] = KENYA_SIX[2]
    out[4] = KENYA_SIX[3]
    out[5] = ten_year["20-29"] - KENYA_SIX[3]
    # 65-69 from the 65+ total; 70-74 / 75+ keep the graduated split
    out[13] = KENYA_SIX[5] - five[14] - five[15]
    out[12] = KENYA_SIX[4] - out[5:12].sum()
    assert (out > 0).all()
    return out


def build_contacts(prem, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for iso3, (_, name, _, _) in COUNTRIES.items():
        key = PREM_ALIASES.get(name, name)
        for setting in SETTINGS:
            m = np.asarray(prem[setting][key], dtype=float)
            assert m.shape == (16, 16)
            pd.DataFrame(m, columns=AGE_LABELS).to_csv(out_dir / f"{iso3}_{setting}.csv", index=False)


def build_population(wpp, path: Path) -> None:
    rows = []
    for iso3, (_, name, _, _) in COUNTRIES.items():
        counts = kenya_pyramid(wpp[name]) if iso3 == "KEN" else graduate(wpp[name])
        rows += [(iso3, lab, int(c)) for lab, c in zip(AGE_LABELS, counts)]
    pd.DataFrame(rows, columns=["iso3", "bin_label", "count"]).to_csv(path, index=False)


def build_indicators(rd: zipfile.ZipFile, path: Path) -> None:
    demo = load_rdataset(rd, "openintro", "sowc_demographics").set_index("countries_and_areas")
    child = load_rdataset(rd, "openintro", "sowc_child_mortality").set_index("countries_and_areas")
    mat = load_rdataset(rd, "openintro", "sowc_maternal_newborn").set_index("countries_and_areas")
    cia = load_rdataset(rd, "openintro", "cia_factbook").set_index("country")
    gdp = load_rdataset(rd, "openintro", "gdp_countries")

    def wb(name: str, desc: str) -> float:
        sel = gdp[(gdp.country == name) & (gdp.description == desc)]
        return float(sel["year_2020"].iloc[0])

    rows = []
    for iso3, (_, un, fb, wbname) in COUNTRIES.items():
        vals = {
            ("Population Density", 2014): cia.loc[fb, "population"] / cia.loc[fb, "area"],
            ("Urban Population", 2018): demo.loc[un, "percent_urban_2018"],
            ("Life expectancy", 2018): demo.loc[un, "life_expectancy_2018"],
            ("Population Growth Rate", 2018): demo.loc[un, "pop_growth_rate_2018"],
            ("GDP Growth Rate", 2020): wb(wbname, "GDP growth"),
            ("GDP Per Capita", 2020): wb(wbname, "GDP per capita"),
            ("Maternal Mortality Ratio", 2017): mat.loc[un, "maternal_mortality_ratio_2017"],
            ("Under-five Mortality Rate", 2018): child.loc[un, "under5_mortality_2018"],
            ("Fertility Rate", 2018): demo.loc[un, "fertility_2018"],
        }
        for (indicator, year), v in vals.items():
            rows.append((iso3, indicator, float(v), year))
    df = pd.DataFrame(rows, columns=["iso3", "indicator_name", "value", "year"])
    # the bundled snapshot must be complete; internet users (factbook) lacks DZA/BEN/NGA
    assert not df.value.isna().any(), df[df.value.isna()]
    df.to_csv(path, index=False, float_format="%.10g")


def build_countries(path: Path) -> None:
    pd.DataFrame(
        [(iso3, v[0]) for iso3, v in COUNTRIES.items()], columns=["iso3", "name"]
    ).to_csv(path, index=False)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--wheels", type=Path, required=True, help="directory holding the three wheels")
    args = parser.parse_args()

    build_contacts(load_prem(args.wheels), OUT / "contacts")
    build_population(load_wpp(args.wheels), OUT / "population.csv")
    build_indicators(_wheel(args.wheels, "rdatasets"), OUT / "indicators.csv")
    build_countries(OUT / "countries.csv")
    print(f"wrote dataset to {OUT}")


if __name__ == "__main__":
    main()
