"""Age-structured 15-compartment transmission model, next-generation matrix and R0 calibration.

States are stored compartment-major as a ``(15, n_ages)`` array. The
infected subsystem used for the next-generation matrix is the first nine
infected compartments (L1, L2, Ip, Ia1-3, Is1-3); hospital compartments do
not transmit, so leaving them out does not change the spectral radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml
from scipy.integrate import solve_ivp

from .contacts import AgePartition, ContactMatrix, PopulationVector
from .errors import DegenerateInputError, InputError, NumericalError

COMPARTMENTS = ("S", "L1", "L2", "Ip", "Ia1", "Ia2", "Ia3", "Is1", "Is2", "Is3", "Ih", "Ic", "Icr", "R", "D")
INFECTED = COMPARTMENTS[1:10]
_C = {name: k for k, name in enumerate(COMPARTMENTS)}

RATE_FIELDS = ("phi_l", "phi_p", "delta_a", "delta_s", "delta_h", "delta_c", "delta_cr")
AGE_FIELDS = ("theta", "eta", "zeta", "h")

DEFAULT_PROFILE = Path(__file__).parent / "data" / "params.profile"
DEFAULT_TARGET_R0 = 3.68


@dataclass(frozen=True)
class EpiParams:
    theta: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    h: np.ndarray
    phi_l: float = 1 / 2.5
    phi_p: float = 1 / 3
    delta_a: float = 1 / 4
    delta_s: float = 1 / 4
    delta_h: float = 1 / 10
    delta_c: float = 1 / 10
    delta_cr: float = 1 / 8
    inf_a: float = 0.75
    beta0: float = 1.0

    def __post_init__(self):
        n = None
        for name in AGE_FIELDS:
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if v.ndim != 1:
                raise InputError(f"{name} must be a vector")
            if n is None:
                n = v.size
            elif v.size != n:
                raise InputError(f"{name} has {v.size} entries, expected {n}")
            if np.any((v < 0) | (v > 1)) or not np.all(np.isfinite(v)):
                raise InputError(f"{name} must lie in [0, 1]")
            object.__setattr__(self, name, v)
        for name in RATE_FIELDS:
            r = float(getattr(self, name))
            if not r > 0 or not np.isfinite(r):
                raise InputError(f"rate {name} must be positive, got {r}")
            object.__setattr__(self, name, r)
        if not 0 <= self.inf_a <= 1:
            raise InputError("inf_a must lie in [0, 1]")
        if not self.beta0 >= 0:
            raise InputError("beta0 must be nonnegative")
        object.__setattr__(self, "inf_a", float(self.inf_a))
        object.__setattr__(self, "beta0", float(self.beta0))

    @property
    def n_ages(self) -> int:
        return self.theta.size

    def with_beta(self, beta0: float) -> "EpiParams":
        return replace(self, beta0=beta0)


@dataclass(frozen=True)
class ParamProfile:
    """Parameter profile as read from disk: 16-bin age vectors plus scalar rates."""

    rates: dict
    age_dependent: dict
    target_r0: float = DEFAULT_TARGET_R0
    aggregation_population: str | None = None

    def params_for(self, pop: PopulationVector | None = None, part: AgePartition | None = None) -> EpiParams:
        """Build EpiParams, aggregating the age vectors with ``pop`` over ``part`` when given."""
        ages = {}
        for name in AGE_FIELDS:
            v = np.asarray(self.age_dependent[name], dtype=float)
            ages[name] = aggregate_params(v, pop, part) if part is not None else v
        return EpiParams(**ages, **self.rates)

    def to_dict(self) -> dict:
        return {
            "target_r0": self.target_r0,
            "aggregation_population": self.aggregation_population,
            "rates": dict(self.rates),
            "age_dependent": {k: [float(x) for x in v] for k, v in self.age_dependent.items()},
        }


def load_profile(path: str | Path = DEFAULT_PROFILE, overrides: Mapping[str, float] | None = None) -> ParamProfile:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: not a valid profile ({exc})") from exc
    if not isinstance(raw, dict) or "rates" not in raw or "age_dependent" not in raw:
        raise InputError(f"{path}: profile needs 'rates' and 'age_dependent' sections")
    rates = {k: float(v) for k, v in raw["rates"].items()}
    unknown = set(rates) - set(RATE_FIELDS) - {"inf_a"}
    if unknown:
        raise InputError(f"{path}: unknown rate keys {sorted(unknown)}")
    missing = [k for k in AGE_FIELDS if k not in raw["age_dependent"]]
    if missing:
        raise InputError(f"{path}: missing age-dependent vectors {missing}")
    if overrides:
        rates.update({k: float(v) for k, v in overrides.items()})
    return ParamProfile(
        rates=rates,
        age_dependent={k: list(map(float, raw["age_dependent"][k])) for k in AGE_FIELDS},
        target_r0=float(raw.get("target_r0", DEFAULT_TARGET_R0)),
        aggregation_population=raw.get("aggregation_population"),
    )


def aggregate_params(p: Sequence[float], pop: PopulationVector, part: AgePartition) -> np.ndarray:
    """Population-weighted mean of a per-bin parameter within each group of ``part``."""
    p = np.asarray(p, dtype=float)
    if p.shape != pop.counts.shape:
        raise InputError(f"parameter has {p.size} entries, population has {pop.counts.size}")
    if part.source_dim != p.size:
        raise InputError(f"partition covers {part.source_dim} bins, parameter has {p.size}")
    P = part.indicator()
    weights = P @ pop.counts
    if np.any(weights <= 0):
        raise DegenerateInputError(f"{pop.country}: parameter group with zero population")
    return (P @ (pop.counts * p)) / weights


# -- dynamics ---------------------------------------------------------------


@dataclass(frozen=True)
class EpiState:
    values: np.ndarray  # (15, n_ages)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != len(COMPARTMENTS):
            raise InputError(f"state must have shape (15, n_ages), got {v.shape}")
        object.__setattr__(self, "values", v)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[_C[name]]

    @property
    def n_ages(self) -> int:
        return self.values.shape[1]

    @classmethod
    def disease_free(cls, pop: PopulationVector) -> "EpiState":
        v = np.zeros((len(COMPARTMENTS), len(pop.counts)))
        v[0] = pop.counts
        return cls(v)

    @classmethod
    def seeded(cls, pop: PopulationVector, compartment: str = "Ip", seeds: Sequence[float] | float = 1.0) -> "EpiState":
        """Disease-free state with ``seeds`` persons moved from S into ``compartment``."""
        v = cls.disease_free(pop).values
        seeds = np.broadcast_to(np.asarray(seeds, dtype=float), v[0].shape)
        v[0] -= seeds
        v[_C[compartment]] += seeds
        return cls(v)


def _check_frame(params: EpiParams, contacts: ContactMatrix, pop: PopulationVector, n: int | None = None) -> None:
    dims = {params.n_ages, contacts.values.shape[0], pop.counts.size}
    if n is not None:
        dims.add(n)
    if len(dims) != 1:
        raise InputError(f"age dimension mismatch between state, params, contacts and population: {sorted(dims)}")
    if np.any(pop.counts <= 0):
        raise DegenerateInputError(f"{pop.country}: zero population bin")


def _infectious_pressure(x: np.ndarray, inf_a: float) -> np.ndarray:
    C = _C
    return x[C["Ip"]] + inf_a * x[C["Ia1"]:C["Ia3"] + 1].sum(axis=0) + x[C["Is1"]:C["Is3"] + 1].sum(axis=0)


def _rhs(x: np.ndarray, p: EpiParams, mu: np.ndarray, W: np.ndarray) -> np.ndarray:
    C = _C
    S, L1, L2, Ip = x[C["S"]], x[C["L1"]], x[C["L2"]], x[C["Ip"]]
    Ia1, Ia2, Ia3 = x[C["Ia1"]], x[C["Ia2"]], x[C["Ia3"]]
    Is1, Is2, Is3 = x[C["Is1"]], x[C["Is2"]], x[C["Is3"]]
    Ih, Ic, Icr = x[C["Ih"]], x[C["Ic"]], x[C["Icr"]]
    # sum_j mu[j, i] * pressure_j
    foi = p.beta0 * (S / W) * (mu.T @ _infectious_pressure(x, p.inf_a))
    a3, s3 = 3 * p.delta_a, 3 * p.delta_s
    out_s3 = s3 * Is3
    d = np.empty_like(x)
    d[C["S"]] = -foi
    d[C["L1"]] = foi - 2 * p.phi_l * L1
    d[C["L2"]] = 2 * p.phi_l * (L1 - L2)
    d[C["Ip"]] = 2 * p.phi_l * L2 - p.phi_p * Ip
    d[C["Ia1"]] = p.theta * p.phi_p * Ip - a3 * Ia1
    d[C["Ia2"]] = a3 * (Ia1 - Ia2)
    d[C["Ia3"]] = a3 * (Ia2 - Ia3)
    d[C["Is1"]] = (1 - p.theta) * p.phi_p * Ip - s3 * Is1
    d[C["Is2"]] = s3 * (Is1 - Is2)
    d[C["Is3"]] = s3 * (Is2 - Is3)
    d[C["Ih"]] = p.h * (1 - p.zeta) * out_s3 - p.delta_h * Ih
    d[C["Ic"]] = p.h * p.zeta * out_s3 - p.delta_c * Ic
    d[C["Icr"]] = (1 - p.eta) * p.delta_c * Ic - p.delta_cr * Icr
    d[C["R"]] = a3 * Ia3 + (1 - p.h) * out_s3 + p.delta_h * Ih + p.delta_cr * Icr
    d[C["D"]] = p.eta * p.delta_c * Ic
    return d


def derivative(state: EpiState, params: EpiParams, contacts: ContactMatrix, pop: PopulationVector) -> np.ndarray:
    """Right-hand side of the ODE system, shaped like ``state.values``."""
    _check_frame(params, contacts, pop, state.n_ages)
    if np.any(state.values < 0):
        raise InputError("state has negative entries")
    return _rhs(state.values, params, contacts.values, pop.counts)


def rk4_step(x: np.ndarray, dt: float, params: EpiParams, contacts: ContactMatrix, pop: PopulationVector) -> np.ndarray:
    """One classical Runge-Kutta step of size ``dt`` on a (15, n) state array."""
    f = lambda y: _rhs(y, params, contacts.values, pop.counts)  # noqa: E731
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (len(t), 15, n_ages), clamped at zero
    age_labels: tuple[str, ...] = field(default=())

    def totals_by_age(self) -> np.ndarray:
        return self.states.sum(axis=1)

    def to_frame(self):
        import pandas as pd

        nt, nc, na = self.states.shape
        labels = self.age_labels or tuple(str(i) for i in range(na))
        return pd.DataFrame({
            "t": np.repeat(self.t, nc * na),
            "age_group": np.tile(np.asarray(labels, dtype=object), nt * nc),
            "compartment": np.tile(np.repeat(np.asarray(COMPARTMENTS, dtype=object), na), nt),
            "value": self.states.ravel(),
        })


def simulate(
    init: EpiState,
    params: EpiParams,
    contacts: ContactMatrix,
    pop: PopulationVector,
    horizon: float,
    step: float = 1.0,
    method: str = "RK45",
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> Trajectory:
    """Integrate the model from ``init`` and report the state every ``step`` days.

    ``method`` is any explicit ``solve_ivp`` method, or ``"rk4"`` for a
    fixed-step classical Runge-Kutta integrator with step size ``step``.
    """
    if not horizon > 0 or not step > 0:
        raise InputError("horizon and step must be positive")
    _check_frame(params, contacts, pop, init.n_ages)
    if np.any(init.values < 0):
        raise InputError("initial state has negative entries")
    shape = init.values.shape
    n_out = int(np.floor(horizon / step + 1e-9)) + 1
    t_eval = np.arange(n_out) * step
    if t_eval[-1] < horizon - 1e-9 * horizon:
        t_eval = np.append(t_eval, horizon)

    if method.lower() == "rk4":
        out = [init.values.copy()]
        x = init.values.copy()
        for k in range(1, len(t_eval)):
            x = rk4_step(x, t_eval[k] - t_eval[k - 1], params, contacts, pop)
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"non-finite state at t={t_eval[k]:g}")
            out.append(x)
        y = np.stack(out)
    else:
        fun = lambda t, y: _rhs(y.reshape(shape), params, contacts.values, pop.counts).ravel()  # noqa: E731
        sol = solve_ivp(fun, (0.0, float(t_eval[-1])), init.values.ravel(), method=method,
                        t_eval=t_eval, rtol=rtol, atol=atol)
        if sol.status != 0:
            t_fail = sol.t[-1] if sol.t.size else 0.0
            raise NumericalError(f"integration failed at t={t_fail:g}: {sol.message}")
        y = sol.y.T.reshape((len(t_eval),) + shape)
    return Trajectory(t_eval, np.clip(y, 0.0, None), tuple(contacts.ages.labels))


# -- next-generation matrix -------------------------------------------------


@dataclass(frozen=True)
class NgmDecomposition:
    """Transmission (T, beta0 factored out) and transition (Sigma) Jacobians of the infected subsystem.

    State index is ``compartment * n_ages + age`` over ``INFECTED``.
    """

    transmission: np.ndarray
    transition: np.ndarray
    n_ages: int

    def kernel(self) -> np.ndarray:
        """-T Sigma^-1, the next-generation matrix per unit beta0."""
        return -np.linalg.solve(self.transition.T, self.transmission.T).T

    def ngm(self, beta0: float) -> np.ndarray:
        return beta0 * self.kernel()


def build_ngm(params: EpiParams, contacts: ContactMatrix, pop: PopulationVector) -> NgmDecomposition:
    """Linearize the infected subsystem at the disease-free equilibrium S = W."""
    _check_frame(params, contacts, pop)
    n = params.n_ages
    idx = {name: k for k, name in enumerate(INFECTED)}
    m = len(INFECTED) * n
    blk = lambda c: slice(idx[c] * n, (idx[c] + 1) * n)  # noqa: E731
    mu_t = contacts.values.T  # row i gathers mu[j, i]

    T = np.zeros((m, m))
    T[blk("L1"), blk("Ip")] = mu_t
    for c in ("Ia1", "Ia2", "Ia3"):
        T[blk("L1"), blk(c)] = params.inf_a * mu_t
    for c in ("Is1", "Is2", "Is3"):
        T[blk("L1"), blk(c)] = mu_t

    eye = np.eye(n)
    a3, s3 = 3 * params.delta_a, 3 * params.delta_s
    S = np.zeros((m, m))
    S[blk("L1"), blk("L1")] = -2 * params.phi_l * eye
    S[blk("L2"), blk("L1")] = 2 * params.phi_l * eye
    S[blk("L2"), blk("L2")] = -2 * params.phi_l * eye
    S[blk("Ip"), blk("L2")] = 2 * params.phi_l * eye
    S[blk("Ip"), blk("Ip")] = -params.phi_p * eye
    S[blk("Ia1"), blk("Ip")] = np.diag(params.theta * params.phi_p)
    S[blk("Is1"), blk("Ip")] = np.diag((1 - params.theta) * params.phi_p)
    for chain, rate in ((("Ia1", "Ia2", "Ia3"), a3), (("Is1", "Is2", "Is3"), s3)):
        for k, c in enumerate(chain):
            S[blk(c), blk(c)] = -rate * eye
            if k:
                S[blk(c), blk(chain[k - 1])] = rate * eye
    return NgmDecomposition(T, S, n)


def spectral_radius(ngm: NgmDecomposition | np.ndarray) -> float:
    """Largest eigenvalue modulus of -T Sigma^-1 (or of a plain square matrix)."""
    A = ngm.kernel() if isinstance(ngm, NgmDecomposition) else np.asarray(ngm, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError("spectral radius needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix has non-finite entries")
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(np.abs(ev))) if ev.size else 0.0


def power_iteration(A: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Perron root of a nonnegative matrix by power iteration on ``A + I``.

    The unit shift makes the iteration converge for periodic (cyclic)
    matrices without changing the Perron vector.
    """
    A = np.asarray(A, dtype=float)
    if np.any(A < -1e-14):
        raise InputError("power iteration oracle needs a nonnegative matrix")
    n = A.shape[0]
    B = A + np.eye(n)
    v = np.full(n, 1.0 / n)
    lam = 0.0
    for _ in range(max_iter):
        w = B @ v
        lam_new = w.sum()
        w /= lam_new
        if abs(lam_new - lam) <= tol * max(lam_new, 1.0) and np.max(np.abs(w - v)) <= tol:
            return float(lam_new - 1.0)
        v, lam = w, lam_new
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations")


def basic_reproduction_number(params: EpiParams, contacts: ContactMatrix, pop: PopulationVector) -> float:
    return params.beta0 * spectral_radius(build_ngm(params, contacts, pop))


def calibrate_beta(contacts: ContactMatrix, params: EpiParams, pop: PopulationVector, target_r0: float = DEFAULT_TARGET_R0) -> float:
    """beta0 such that beta0 * rho(-T Sigma^-1) equals ``target_r0``."""
    if not target_r0 > 0:
        raise InputError(f"target R0 must be positive, got {target_r0}")
    rho = spectral_radius(build_ngm(params, contacts, pop))
    if rho <= 0:
        raise DegenerateInputError(f"{contacts.country}: spectral radius is zero, no transmission possible")
    return target_r0 / rho


def standardize_contacts(beta0: float, mu: ContactMatrix) -> ContactMatrix:
    """S_C = beta0 * mu, tagged as a standardized full matrix."""
    if not beta0 >= 0:
        raise InputError("beta0 must be nonnegative")
    return replace(mu, setting="full", values=beta0 * mu.values, standardized=True)
