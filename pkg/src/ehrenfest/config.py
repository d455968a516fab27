"""Scenario configuration: strict JSON schema and conversion to model objects."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import (
    Covariance,
    Harmonic,
    Morse,
    PolynomialPotential,
    Quartic,
    Step,
    symplectic_eigenvalues,
)
from .integrators import StepperConfig

__all__ = ["ScenarioConfig", "ConfigError", "load_config", "format_validation_error"]

SCENARIO_PARAMS = {
    "harmonic": {"k"},
    "quartic": {"lam"},
    "morse": {"D", "a"},
    "step": {"mu"},
    "custom": {"coefficients"},
}
MOMENT_MODELS = ("moment_xz", "moment_sigma")
FOURTH_ORDER_MODELS = ("fourth_order_conservative", "fourth_order_nonconservative")
GRID_MODELS = ("wigner_comoving", "wigner_lab")


class ConfigError(ValueError):
    """Configuration failed to parse or validate."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PotentialParams(_Strict):
    k: Optional[float] = None
    lam: Optional[float] = None
    D: Optional[float] = None
    a: Optional[float] = None
    mu: Optional[float] = None
    coefficients: Optional[List[float]] = None


class InitialState(_Strict):
    z: List[float]
    sigma: List[List[float]] = Field(description="physical covariance")


class StepperSection(_Strict):
    method: Literal["rk4_fixed", "embedded_adaptive"] = "embedded_adaptive"
    horizon: float
    dt: Optional[float] = None
    rtol: float = 1e-10
    atol: float = 1e-12
    dt_min: float = 1e-12
    dt_max: float = math.inf
    max_abs_state: float = 1e10


class GridSection(_Strict):
    q_range: Tuple[float, float]
    p_range: Tuple[float, float]
    resolution: Union[int, Tuple[int, int]] = 256
    order: Literal["classical", "hbar2"] = "classical"
    dissipation: float = Field(0.0, ge=0.0)
    snapshot_every: int = Field(0, ge=0)
    snapshot_format: Literal["csv", "binary", "both"] = "binary"


class OutputSection(_Strict):
    directory: str = "output"
    trajectory: str = "trajectory.csv"
    svg: bool = True


class ScenarioConfig(_Strict):
    scenario: Literal["harmonic", "quartic", "morse", "step", "custom"]
    model: Literal["moment_xz", "moment_sigma", "fourth_order_conservative",
                   "fourth_order_nonconservative", "wigner_comoving", "wigner_lab"]
    potential: PotentialParams = PotentialParams()
    truncation_order: int = Field(4, ge=0)
    initial: InitialState
    hbar: float = Field(1.0, gt=0.0)
    check_admissibility: bool = True
    stepper: StepperSection
    grid: Optional[GridSection] = None
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _consistent(self):
        problems = []
        allowed = SCENARIO_PARAMS[self.scenario]
        given = {k for k, v in self.potential.model_dump().items() if v is not None}
        if given - allowed:
            problems.append(f"potential parameters {sorted(given - allowed)} do not apply to "
                            f"scenario '{self.scenario}' (allowed: {sorted(allowed)})")
        if self.scenario == "custom" and not self.potential.coefficients:
            problems.append("custom scenario needs potential.coefficients")
        n2 = len(self.initial.z)
        if n2 == 0 or n2 % 2:
            problems.append("initial.z must have even, non-zero length")
        S = np.asarray(self.initial.sigma, dtype=float)
        if S.shape != (n2, n2):
            problems.append(f"initial.sigma must be {n2}x{n2}")
        elif not np.allclose(S, S.T, rtol=0, atol=1e-12):
            problems.append("initial.sigma must be symmetric")
        else:
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                problems.append("initial.sigma must be positive definite")
            else:
                if self.check_admissibility:
                    nu = symplectic_eigenvalues(S)
                    if np.any(nu < 0.5 * self.hbar - 1e-12):
                        problems.append(
                            f"initial.sigma violates the Williamson uncertainty bound: symplectic "
                            f"eigenvalues {np.round(nu, 12).tolist()} < hbar/2 = {0.5 * self.hbar}")
        if self.scenario == "step" and self.model != "wigner_comoving":
            problems.append("scenario 'step' requires model 'wigner_comoving'")
        if self.model in FOURTH_ORDER_MODELS and n2 != 2:
            problems.append("fourth-order models are one degree of freedom only")
        if self.model in GRID_MODELS:
            if self.grid is None:
                problems.append(f"model '{self.model}' requires a grid section")
            if n2 != 2:
                problems.append("grid models are one degree of freedom only")
        if (self.scenario == "step" and self.grid is not None and self.grid.order == "hbar2"):
            problems.append("the step scenario supports grid.order 'classical' only")
        try:
            self.stepper_config()
        except ValueError as exc:
            problems.append(f"stepper: {exc}")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def potential_model(self):
        p = self.potential
        if self.scenario == "harmonic":
            return Harmonic(k=1.0 if p.k is None else p.k)
        if self.scenario == "quartic":
            return Quartic(lam=1.0 if p.lam is None else p.lam)
        if self.scenario == "morse":
            return Morse(D=1.0 if p.D is None else p.D, a=1.0 if p.a is None else p.a)
        if self.scenario == "step":
            return Step(mu=1.0 if p.mu is None else p.mu)
        return PolynomialPotential(tuple(p.coefficients))

    def stepper_config(self, **overrides) -> StepperConfig:
        s = self.stepper.model_dump()
        s.update(overrides)
        return StepperConfig(method=s["method"], horizon=s["horizon"], dt=s["dt"],
                             rtol=s["rtol"], atol=s["atol"], dt_min=s["dt_min"],
                             dt_max=s["dt_max"], max_abs_state=s["max_abs_state"])

    @property
    def z0(self) -> np.ndarray:
        return np.asarray(self.initial.z, dtype=float)

    @property
    def sigma0(self) -> np.ndarray:
        """Physical covariance."""
        return np.asarray(self.initial.sigma, dtype=float)

    def dimensionless_covariance(self) -> Covariance:
        return Covariance(self.sigma0 / self.hbar, self.hbar)


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        lines.append(f"  {loc}: {msg}")
    return "invalid configuration:\n" + "\n".join(lines)


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from None
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None
