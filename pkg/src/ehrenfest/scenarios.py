"""Assemble and run configured scenarios.

Every model reports the same observables per accepted step: mean, physical
covariance, energy and the two first-order Casimirs, plus mass and the
co-moving first-moment norm for grid models.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .brackets import casimir, casimir_det
from .config import FOURTH_ORDER_MODELS, ScenarioConfig
from .core import (
    Step,
    covariance_from_moments,
    flatten_moments,
    second_moment_from_covariance,
    unflatten_moments,
)
from .gaussian import (
    ClosureSpec,
    FiveMoments,
    closure_energy,
    covariance_vector_field,
    five_moments,
    fourth_order_energy,
    fourth_order_vector_field,
    moment_energy_from_covariance,
    moment_vector_field,
)
from .integrators import TrajectoryRecord, integrate
from .wigner import (
    ComovingState,
    StepHamiltonian,
    TranslatedHamiltonian,
    WignerGrid,
    check_boundary,
    comoving_vector_field,
    gaussian_init,
    grid_covariance,
    lab_vector_field,
    moments,
    step_vector_field,
    write_binary,
    write_csv,
)

__all__ = [
    "RunResult",
    "observable_labels",
    "run_scenario",
    "write_observables",
    "compare_closures",
    "cross_validate",
]


def observable_labels(n: int, grid: bool = False) -> List[str]:
    if n == 1:
        labels = ["q", "p", "sigma_qq", "sigma_qp", "sigma_pp"]
    else:
        labels = [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
        labels += [f"sigma_{i}_{j}" for i in range(2 * n) for j in range(i, 2 * n)]
    labels += ["energy", "casimir_1", "casimir_det"]
    if grid:
        labels += ["mass", "first_moment_norm"]
    return labels


def _observables(z, S, energy, extra=()):
    iu = np.triu_indices(z.size)
    X = second_moment_from_covariance(z, S)
    return np.concatenate([z, S[iu], [energy, casimir(1, z, X), casimir_det(z, X)],
                           list(extra)])


@dataclass
class RunResult:
    record: TrajectoryRecord
    labels: List[str]
    template: Optional[WignerGrid] = None
    state_kind: str = "moment"

    @property
    def observables(self) -> np.ndarray:
        return self.record.series("obs")

    def column(self, name) -> np.ndarray:
        return self.observables[:, self.labels.index(name)]


def write_observables(result: RunResult, path) -> Path:
    """CSV with a header row and 17 significant digits."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + result.labels)
        for t, row in zip(result.record.times, result.observables):
            w.writerow([format(float(t), ".17g")] + [format(float(v), ".17g") for v in row])
    return path


def _moment_run(cfg: ScenarioConfig, store_every):
    pot = cfg.potential_model()
    n = cfg.z0.size // 2
    h = closure_energy(ClosureSpec(pot, cfg.truncation_order))
    z0, S0 = cfg.z0, cfg.sigma0
    if cfg.model == "moment_xz":
        H = moment_energy_from_covariance(h)
        rhs = moment_vector_field(H, n)
        y0 = flatten_moments(z0, second_moment_from_covariance(z0, S0))

        def obs(t, y):
            z, X = unflatten_moments(y, n)
            return _observables(z, covariance_from_moments(z, X), H(z, X))
    else:
        rhs = covariance_vector_field(h, n)
        y0 = flatten_moments(z0, S0)

        def obs(t, y):
            z, S = unflatten_moments(y, n)
            return _observables(z, S, h(z, S))

    rec = integrate(rhs, y0, cfg.stepper_config(), [("obs", obs)], store_every=store_every)
    return RunResult(rec, observable_labels(n))


def _fourth_order_run(cfg: ScenarioConfig, conservative: Optional[bool] = None, store_every=1):
    pot = cfg.potential_model()
    if conservative is None:
        conservative = cfg.model == "fourth_order_conservative"
    m0 = five_moments(cfg.z0, cfg.sigma0).as_array()

    def obs(t, y):
        z, S = FiveMoments.from_array(y).covariance()
        return _observables(z, S, fourth_order_energy(pot, y))

    rec = integrate(fourth_order_vector_field(pot, conservative), m0, cfg.stepper_config(),
                    [("obs", obs)], store_every=store_every)
    return RunResult(rec, observable_labels(1), state_kind="five_moments")


def _grid_setup(cfg: ScenarioConfig):
    g = cfg.grid
    frame = "comoving" if cfg.model == "wigner_comoving" else "lab"
    return gaussian_init(cfg.z0, cfg.dimensionless_covariance(), (g.q_range, g.p_range),
                         g.resolution, hbar=cfg.hbar, frame=frame,
                         require_admissible=cfg.check_admissibility)


def _comoving_hamiltonian(cfg: ScenarioConfig):
    pot = cfg.potential_model()
    return StepHamiltonian(pot.mu) if isinstance(pot, Step) else TranslatedHamiltonian(pot)


def _grid_run(cfg: ScenarioConfig, store_every=None, t_eval=None):
    template = _grid_setup(cfg)
    g = cfg.grid
    every = g.snapshot_every if store_every is None else store_every
    labels = observable_labels(1, grid=True)
    if cfg.model == "wigner_comoving":
        Ht = _comoving_hamiltonian(cfg)
        if isinstance(Ht, StepHamiltonian):
            rhs = step_vector_field(Ht.mu, template, g.dissipation)
        else:
            rhs = comoving_vector_field(Ht, template, g.order, g.dissipation)
        y0 = ComovingState(template, cfg.z0).pack()

        def obs(t, y):
            grid = template.with_values(y[2:])
            mass, mean, _ = moments(grid)
            _, S = grid_covariance(grid)
            z = y[:2] + mean / mass
            return _observables(z, S, Ht.energy(y[:2], grid), (mass, np.linalg.norm(mean)))

        def guard(t, y):
            check_boundary(template.with_values(y[2:]), t=t)
    else:
        H = TranslatedHamiltonian(cfg.potential_model()).field(np.zeros(2), template)
        rhs = lab_vector_field(lambda t, grid: H, template, g.order)
        y0 = template.values.ravel().copy()

        def obs(t, y):
            grid = template.with_values(y)
            mass = moments(grid)[0]
            mean, S = grid_covariance(grid)
            return _observables(mean, S, grid.integrate(H.values * grid.values),
                                (mass, float("nan")))

        def guard(t, y):
            check_boundary(template.with_values(y), t=t)

    rec = integrate(rhs, y0, cfg.stepper_config(), [("obs", obs)], guard=guard,
                    store_every=every, t_eval=t_eval)
    return RunResult(rec, labels, template, state_kind=cfg.model)


def run_scenario(cfg: ScenarioConfig, store_every: Optional[int] = None) -> RunResult:
    """Integrate the configured model.  Raises SimulationAbort on runtime
    failure (the partial record is attached)."""
    if cfg.model in ("moment_xz", "moment_sigma"):
        return _moment_run(cfg, 1 if store_every is None else store_every)
    if cfg.model in FOURTH_ORDER_MODELS:
        return _fourth_order_run(cfg, store_every=1 if store_every is None else store_every)
    return _grid_run(cfg, store_every)


def write_snapshots(result: RunResult, cfg: ScenarioConfig, directory) -> List[Path]:
    """Stored grid states as CSV and/or binary files plus an index CSV."""
    directory = Path(directory)
    fmt = cfg.grid.snapshot_format
    paths = []
    index = []
    for k, (t, y) in enumerate(zip(result.record.state_times, result.record.states)):
        values = y[2:] if cfg.model == "wigner_comoving" else y
        grid = result.template.with_values(values)
        stem = directory / f"grid_{k:04d}"
        if fmt in ("binary", "both"):
            write_binary(grid, stem.with_suffix(".bin"))
            paths.append(stem.with_suffix(".bin"))
        if fmt in ("csv", "both"):
            write_csv(grid, stem.with_suffix(".csv"))
            paths.append(stem.with_suffix(".csv"))
        index.append((k, t, stem.name))
    with open(directory / "grid_index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "t", "stem"])
        for k, t, stem in index:
            w.writerow([k, format(float(t), ".17g"), stem])
    return paths


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _relative_drift(E):
    E = np.asarray(E, dtype=float)
    return float(np.max(np.abs(E - E[0])) / max(abs(E[0]), np.finfo(float).tiny))


def compare_closures(cfg: ScenarioConfig) -> Dict:
    """Run both fourth-order systems from the same data and summarize their
    energy drift."""
    pot = cfg.potential_model()
    if pot.derivative_order < 5:
        raise ValueError(f"{pot.kind} potential lacks the fifth derivative the comparison needs")
    if cfg.z0.size != 2:
        raise ValueError("the fourth-order systems are one degree of freedom only")
    runs = {name: _fourth_order_run(cfg, cons) for name, cons in
            (("conservative", True), ("nonconservative", False))}
    drift = {name: _relative_drift(r.column("energy")) for name, r in runs.items()}
    a, b = runs["conservative"].record, runs["nonconservative"].record
    same_steps = a.times == b.times
    difference = (float(np.max(np.abs(a.state_array() - b.state_array())))
                  if same_steps else None)
    ratio = drift["nonconservative"] / drift["conservative"] if drift["conservative"] > 0 else (
        float("inf") if drift["nonconservative"] > 0 else 1.0)
    report = {
        "potential": pot.kind,
        "horizon": cfg.stepper.horizon,
        "conservative": {"max_relative_energy_drift": drift["conservative"],
                         "accepted_steps": len(a.times) - 1},
        "nonconservative": {"max_relative_energy_drift": drift["nonconservative"],
                            "accepted_steps": len(b.times) - 1},
        "drift_ratio": ratio,
        "identical_steps": same_steps,
        "max_state_difference": difference,
        "trajectories_identical": difference is not None and difference <= 1e-12,
    }
    return {"report": report, "runs": runs}


def _is_quadratic(pot) -> bool:
    if pot.kind == "harmonic":
        return True
    if pot.kind == "polynomial":
        return len(np.trim_zeros(np.asarray(pot.coeffs), "b")) <= 3
    return False


def cross_validate(cfg: ScenarioConfig) -> Dict:
    """Co-moving grid run against the covariance moment model from the same
    Gaussian; the deviation is measured at every accepted grid step."""
    if cfg.grid is None:
        raise ValueError("cross-validation needs a grid section")
    pot = cfg.potential_model()
    if isinstance(pot, Step):
        raise ValueError("cross-validation needs a smooth potential")
    grid_cfg = cfg.model_copy(update={"model": "wigner_comoving"})
    grid_run = _grid_run(grid_cfg, store_every=0)
    times = np.asarray(grid_run.record.times)

    n_order = max(cfg.truncation_order, 2)
    moment_cfg = cfg.model_copy(update={"model": "moment_sigma", "truncation_order": n_order})
    h = closure_energy(ClosureSpec(pot, n_order))
    model_cfg = moment_cfg.stepper_config(method="embedded_adaptive", rtol=1e-12, atol=1e-14)
    rec = integrate(covariance_vector_field(h, 1), flatten_moments(cfg.z0, cfg.sigma0),
                    model_cfg, store_every=0, t_eval=times)
    model = np.asarray(rec.states)
    if len(model) != len(times):
        raise RuntimeError("moment model did not land on every grid time")
    G = grid_run.observables
    cols = [grid_run.labels.index(k) for k in ("q", "p", "sigma_qq", "sigma_qp", "sigma_pp")]
    dev = np.abs(G[:, cols] - model)
    quadratic = _is_quadratic(pot)
    report = {
        "potential": pot.kind,
        "quadratic": quadratic,
        "horizon": cfg.stepper.horizon,
        "hbar": cfg.hbar,
        "grid_steps": len(times) - 1,
        "max_mean_deviation": float(dev[:, :2].max()),
        "max_covariance_deviation": float(dev[:, 2:].max()),
        "max_moment_deviation": float(dev.max()),
        "max_mass_error": float(np.max(np.abs(grid_run.column("mass") - 1.0))),
        "max_first_moment_norm": float(np.max(grid_run.column("first_moment_norm"))),
    }
    if quadratic:
        report["tolerance"] = 1e-4
        report["passed"] = report["max_moment_deviation"] < 1e-4
    return {"report": report, "grid": grid_run, "model_times": times, "model_states": model}


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
