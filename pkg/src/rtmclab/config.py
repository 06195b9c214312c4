"""Experiment configuration: a versioned JSON schema and its validation.

One file declares the driver law, the fiber structure with its mediator data,
the potential, metric parameters, depths, horizons and seeds.  validate()
performs the structural checks (stochasticity, row/column positivity, big
images/preimages, empirical summability and event frequency) without running
any experiment.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .driver import DriverSystem, EventSpec, event_frequency, sample_path
from .errors import ConfigError
from .potentials import (
    Potential,
    constant_potential,
    fitted_kappa,
    log_matrix_potential,
    summability_value,
    table_potential,
)
from .shifts import BipStructure, FiberStructure

SCHEMA_VERSION = 1

_DEPTH_DEFAULTS = {"working": 6, "algebra": 2, "entropy": 10, "gibbs": 4, "cap": 16}
_HORIZON_DEFAULTS = {
    "solve": 100, "pressure": 400, "decay": 40, "mixing": 14, "matrix": 60,
}
_TRIAL_DEFAULTS = {"lemma": 50, "gibbs": 2000}


@dataclass(eq=False)
class ExperimentConfig:
    raw: dict
    path: str
    system: DriverSystem
    fibers: FiberStructure
    potential: Potential
    beta: float
    depths: dict
    horizons: dict
    trials: dict
    seeds: list
    sequences: dict
    observables: dict
    pressure_letter: int
    comparison_kernel: list | None
    name: str

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def sample(self, seed: int, radius: int = 4096, max_radius: int | None = None):
        from . import driver as _driver

        cap = _driver.DEFAULT_MAX_RADIUS if max_radius is None else max_radius
        return sample_path(self.system, radius=min(radius, cap), seed=seed,
                           max_radius=cap)


def _parse_word(key: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(key).replace(" ", "").split(","))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if raw.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config schema must be {SCHEMA_VERSION}, got {raw.get('schema')!r}")
    for key in ("driver", "fibers", "potential"):
        if key not in raw:
            raise ConfigError(f"config misses the {key!r} section")
    drv = raw["driver"]
    law = drv.get("law", {})
    system = DriverSystem(
        states=tuple(drv.get("states", [])),
        kind=law.get("kind", "iid"),
        weights=np.asarray(law["weights"], dtype=float) if "weights" in law else None,
        matrix=np.asarray(law["matrix"], dtype=float) if "matrix" in law else None,
        seed=int(drv.get("seed", 0)),
    )
    fib = raw["fibers"]
    bip = None
    if "bip" in fib:
        b = fib["bip"]
        bip = BipStructure(
            letters=frozenset(int(x) for x in b["I"]),
            omega_bp=EventSpec.state_in(system, b.get("omega_bp", []), name="omega_bp"),
            omega_bi=EventSpec.state_in(system, b.get("omega_bi", []), name="omega_bi"),
        )
    fibers = FiberStructure.build(system, fib["alphabets"], fib["matrices"], bip=bip)
    pot = raw["potential"]
    kind = pot.get("kind", "table")
    r = float(pot.get("r", 0.49))
    if kind == "log_matrix":
        weights = [np.asarray(pot["matrices"][s], dtype=float) for s in system.states]
        potential = log_matrix_potential(fibers, weights, r=r)
    elif kind == "constant":
        potential = constant_potential(fibers, float(pot["value"]), r=r)
    elif kind == "table":
        tables = [
            {_parse_word(k): float(v) for k, v in pot["tables"][s].items()}
            for s in system.states
        ]
        potential = table_potential(tables, depth=int(pot["depth"]), r=r,
                                    index=int(pot.get("index", 2)),
                                    kappa=pot.get("kappa"))
        if "kappa" not in pot:
            probe = sample_path(system, radius=64, seed=system.seed)
            kappas = [0.0] * system.n_states
            for i in range(-32, 32):
                s = probe.state(i)
                kappas[s] = max(kappas[s], fitted_kappa(potential, fibers, probe, i))
            potential = table_potential(tables, depth=int(pot["depth"]), r=r,
                                        index=int(pot.get("index", 2)), kappa=kappas)
    else:
        raise ConfigError(f"unknown potential kind {kind!r}")
    metric = raw.get("metric", {})
    beta = float(metric.get("beta", 0.5))
    if not 0 < beta < 1:
        raise ConfigError("beta must lie in (0, 1)")
    if not 0 < r < 1:
        raise ConfigError("r must lie in (0, 1)")
    depths = {**_DEPTH_DEFAULTS, **raw.get("depths", {})}
    horizons = {**_HORIZON_DEFAULTS, **raw.get("horizons", {})}
    trials = {**_TRIAL_DEFAULTS, **raw.get("trials", {})}
    seeds = [int(s) for s in raw.get("seeds", [system.seed])]
    sequences = {"mode": "markov", "count": 10, "B": None, "C": None,
                 **raw.get("sequences", {})}
    observables = raw.get("observables", {})
    return ExperimentConfig(
        raw=raw, path=str(path), system=system, fibers=fibers, potential=potential,
        beta=beta, depths=depths, horizons=horizons, trials=trials, seeds=seeds,
        sequences=sequences, observables=observables,
        pressure_letter=int(raw.get("pressure", {}).get("letter", min(fibers.universe))),
        comparison_kernel=raw.get("equilibrium", {}).get("comparison_kernel"),
        name=raw.get("name", path.stem),
    )


def validate_config(cfg: ExperimentConfig, frequency_span: int = 100_000) -> dict:
    """Structural validation report: violations block runs, warnings do not."""
    violations = list(cfg.fibers.validate_rows_columns(cfg.system))
    warnings = []
    if cfg.fibers.bip is None:
        warnings.append("no b.i.p. structure declared; contraction experiments unavailable")
    else:
        violations.extend(cfg.fibers.validate_bip(cfg.system))
        probe = cfg.sample(cfg.system.seed, radius=1, max_radius=frequency_span + 10)
        for ev in (cfg.fibers.bip.omega_bp, cfg.fibers.bip.omega_bi):
            freq = event_frequency(probe, ev, frequency_span)
            if freq == 0.0:
                warnings.append(f"event {ev.name} has empirical frequency 0 "
                                f"over {frequency_span} steps")
    probe = cfg.sample(cfg.system.seed, radius=128)
    s_value = summability_value(cfg.potential, cfg.fibers, probe, span=64)
    if not math.isfinite(s_value):
        violations.append("summability probe diverged")
    if cfg.depths["working"] > cfg.depths["cap"]:
        violations.append("working depth exceeds the configured cap")
    return {
        "name": cfg.name,
        "hash": cfg.config_hash,
        "violations": violations,
        "warnings": warnings,
        "summability_mean": s_value,
        "ok": not violations,
    }
