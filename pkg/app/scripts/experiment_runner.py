#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Experiment runner: validates a config, runs one command and writes its artifacts.
Each command has a pydantic params model that rejects unknown fields, and a
handler returning the list of files it wrote plus a status ("ok" or "abstained").
"""

import json
import logging
import math
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.stats import expon

from app.certify import (
    Certified,
    DyadicReader,
    build_adversary,
    capped_certified_selector,
    certified_select,
    demo_failure,
    digit_blindness,
    truncate_then_solve,
)
from app.condition import condition_estimate, probe_condition_lb
from app.ensembles import (
    Distribution,
    EmpiricalCDF,
    gap_statistic_sample,
    ks_distance,
    run_figure1,
    run_theorem24,
)
from app.exceptions import ConfigError, NonpositiveSigmaHatError, TieError
from app.lasso_core import LassoInstance, support_from_threshold
from app.oracle1d import Instance1D, stsp_1d, support_1d
from app.scripts.artifact_writer import write_csv, write_json, write_manifest
from app.solver import solve_with
from app.wainwright import (
    EnsembleSpec,
    check_assumptions,
    check_simple,
    digits_bound,
    empirical_condition_tail,
    norm_tail_fraction,
)

logger = logging.getLogger(__name__)

CONFIG_COMMANDS = ("solve", "condition", "certify", "ensemble-t24", "figure1", "wainwright", "adversary", "gaps")
Number = Union[float, int, str]


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class InstanceParams(_Params):
    """Instance given as lists; certify also accepts rational strings such as "1/3"."""

    y: List[Number]
    A: List[List[Number]]
    lam: Number = Field(..., alias="lambda")

    def to_instance(self) -> LassoInstance:
        def as_float(v):
            return float(Fraction(v)) if isinstance(v, str) else float(v)

        return LassoInstance(y=[as_float(v) for v in self.y], A=[[as_float(v) for v in row] for row in self.A],
                             lam=as_float(self.lam))


DEMO_INSTANCE = {"y": [1.0], "A": [[0.9, 0.3]], "lambda": 0.01}
ADVERSARY_CENTER = {"y": [1.0], "A": [[0.9, 0.8999]], "lambda": 0.01}


class SolveParams(_Params):
    instance: InstanceParams
    gap_tol: float = Field(1e-12, gt=0)
    max_sweeps: int = Field(100_000, ge=1)
    check_every: int = Field(1, ge=0)
    backend: Literal["reference", "library"] = "reference"
    tau: float = Field(0.0, ge=0, description="Threshold for the reported support")


class ConditionParams(_Params):
    instance: InstanceParams
    gap_tol: float = Field(1e-12, gt=0)
    tau: float = Field(1e-9, ge=0)
    max_sweeps: int = Field(100_000, ge=1)
    probe_radius: Optional[float] = Field(None, gt=0, description="Also search for a support change at this radius")
    probe_samples: int = Field(200, ge=0)


class CertifyParams(_Params):
    instance: InstanceParams = Field(default_factory=lambda: InstanceParams.model_validate(DEMO_INSTANCE))
    n0: int = Field(1, ge=0)
    n_max: int = Field(60, ge=0)
    serve_exact: bool = False


class Theorem24Params(_Params):
    dist: Distribution = Field(default_factory=Distribution.exp1)
    N_grid: List[int] = Field(default_factory=lambda: [100, 1000])
    trials: int = Field(500, ge=0)
    y: float = 1.0
    lam: float = Field(0.01, alias="lambda", gt=0)


class Figure1Params(_Params):
    N_grid: List[int] = Field(default_factory=lambda: [10, 100, 1000, 10000])
    trials: int = Field(20, ge=0)
    thresholds: List[float] = Field(default_factory=lambda: [1e-3, 1e-12])
    lam: float = Field(0.01, alias="lambda", gt=0)
    dists: List[Distribution] = Field(default_factory=lambda: [
        Distribution.exp1(), Distribution.normal(1.0, 1e-4), Distribution.uniform01()])
    solver: Literal["reference", "library"] = "reference"
    gap_tol: float = Field(1e-12, gt=0)
    max_sweeps: int = Field(100_000, ge=1)
    check_every: int = Field(0, ge=0)


class WainwrightRunParams(_Params):
    Sigma: Optional[Union[Literal["identity"], List[List[float]]]] = None
    v: List[float]
    N: Optional[int] = Field(None, ge=1, description="Ambient dimension; v is padded with zeros up to N")
    eta: float = Field(0.0, ge=0)
    m: int = Field(..., ge=1)
    lam: float = Field(..., alias="lambda", gt=0)
    c3: float = Field(1.0, gt=0)
    c_bar: Optional[float] = None
    epsilon_rule: Literal["general", "simple"] = "general"
    norm_tail_draws: int = Field(0, ge=0)
    condition_tail_draws: int = Field(0, ge=0)

    def to_spec(self) -> EnsembleSpec:
        v = list(self.v)
        if self.N is not None:
            if self.N < len(v):
                raise ConfigError(f"N={self.N} is smaller than len(v)={len(v)}", field="params.N")
            v += [0.0] * (self.N - len(v))
        return EnsembleSpec(Sigma=self.Sigma, v=v, eta=self.eta, m=self.m, lam=self.lam, c3=self.c3,
                            c_bar=self.c_bar)


class AdversaryParams(_Params):
    center: InstanceParams = Field(default_factory=lambda: InstanceParams.model_validate(ADVERSARY_CENTER))
    k: int = Field(12, ge=0)
    r: Optional[float] = Field(None, gt=0)
    n_samples: int = Field(100, ge=0)
    victims: List[Literal["truncate_then_solve", "capped_certified_selector"]] = Field(
        default_factory=lambda: ["truncate_then_solve", "capped_certified_selector"])


class GapsParams(_Params):
    dist: Distribution = Field(default_factory=Distribution.uniform01)
    N: int = Field(1000, ge=2)
    trials: int = Field(1000, ge=1)


PARAMS_MODELS = {
    "solve": SolveParams,
    "condition": ConditionParams,
    "certify": CertifyParams,
    "ensemble-t24": Theorem24Params,
    "figure1": Figure1Params,
    "wainwright": WainwrightRunParams,
    "adversary": AdversaryParams,
    "gaps": GapsParams,
}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Literal["solve", "condition", "certify", "ensemble-t24", "figure1", "wainwright", "adversary", "gaps"]
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    out_dir: Optional[str] = None

    def resolved_params(self) -> _Params:
        return PARAMS_MODELS[self.command].model_validate(self.params)


def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a JSON or YAML config file into a dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}", field="config")
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if path.suffix.lower() in (".yaml", ".yml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not parse {path}: {e}", field="config")
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must contain an object", field="config")
    return data


def first_error_field(error: ValidationError) -> Optional[str]:
    """Dotted location of the first validation error."""
    errors = error.errors()
    if not errors:
        return None
    return ".".join(str(part) for part in errors[0].get("loc", ()))


def _support_list(support) -> List[int]:
    return support.to_list() if support is not None else None


def run_solve(params: SolveParams, seed: int, out_dir: Path, workers: int, progress: bool) -> Tuple[List[str], str]:
    inst = params.instance.to_instance()
    sol = solve_with(inst, backend=params.backend, gap_tol=params.gap_tol, max_sweeps=params.max_sweeps,
                     check_every=params.check_every)
    write_json(out_dir / "solution.json", {
        "solution": sol, "support": _support_list(support_from_threshold(sol.x, params.tau)), "tau": params.tau,
    })
    return ["solution.json"], "ok"


def run_condition(params: ConditionParams, seed: int, out_dir: Path, workers: int,
                  progress: bool) -> Tuple[List[str], str]:
    inst = params.instance.to_instance()
    sol, cert = condition_estimate(inst, gap_tol=params.gap_tol, tau=params.tau, max_sweeps=params.max_sweeps)
    result = {"solution": sol, "certificate": cert}
    if inst.m == 1:
        inst_1d = Instance1D.from_instance(inst)
        stsp = stsp_1d(inst_1d)
        result["exact_stsp"] = stsp
        result["exact_condition"] = 1.0 / stsp if stsp > 0 else math.inf
    if params.probe_radius is not None:
        search = probe_condition_lb(inst, params.probe_radius, params.probe_samples, seed,
                                    tau=params.tau, gap_tol=params.gap_tol, reference=cert.support_used)
        result["probe"] = {"radius": params.probe_radius, "found_change": search.found_change,
                           "cond_lb": search.cond_lb, "skipped": search.n_skipped}
    write_json(out_dir / "certificate.json", result)
    return ["certificate.json"], "ok"


def run_certify(params: CertifyParams, seed: int, out_dir: Path, workers: int,
                progress: bool) -> Tuple[List[str], str]:
    spec = params.instance
    reader = DyadicReader(spec.y, spec.A, spec.lam, serve_exact=params.serve_exact)
    outcome = certified_select(reader, n_max=params.n_max, n0=params.n0)
    result: Dict[str, Any] = {"outcome": outcome}
    inst = spec.to_instance()
    if inst.m == 1:
        try:
            result["oracle_support"] = _support_list(support_1d(Instance1D.from_instance(inst)))
        except TieError as e:
            logger.info(f"No exact support for a tied instance: {e}")
            result["oracle_support"] = None
    write_json(out_dir / "outcome.json", result)
    return ["outcome.json"], "ok" if isinstance(outcome, Certified) else "abstained"


def run_theorem24_command(params: Theorem24Params, seed: int, out_dir: Path, workers: int,
                          progress: bool) -> Tuple[List[str], str]:
    result = run_theorem24(params.dist, params.N_grid, params.trials, params.y, params.lam, seed,
                           workers=workers, progress=progress)
    write_csv(out_dir / "t24_trials.csv", result.records)
    write_csv(out_dir / "t24_summary.csv", result.summary)
    return ["t24_trials.csv", "t24_summary.csv"], "ok"


def run_figure1_command(params: Figure1Params, seed: int, out_dir: Path, workers: int,
                        progress: bool) -> Tuple[List[str], str]:
    trials, summary = run_figure1(params.N_grid, params.trials, params.thresholds, params.lam, seed,
                                  dists=params.dists, solver=params.solver, gap_tol=params.gap_tol,
                                  max_sweeps=params.max_sweeps, check_every=params.check_every,
                                  workers=workers, progress=progress)
    write_csv(out_dir / "trials.csv", trials)
    write_csv(out_dir / "summary.csv", summary)
    return ["trials.csv", "summary.csv"], "ok"


def run_wainwright(params: WainwrightRunParams, seed: int, out_dir: Path, workers: int,
                   progress: bool) -> Tuple[List[str], str]:
    spec = params.to_spec()
    report: Dict[str, Any] = {"spec": spec, "assumptions": check_assumptions(spec, params.epsilon_rule)}
    if spec.is_isotropic:
        report["simple_hypotheses"] = check_simple(spec)
    try:
        report["digits_bound"] = digits_bound(spec)
    except NonpositiveSigmaHatError as e:
        report["digits_bound"] = None
        logger.info(f"Digits bound not computed: {e}")
    if params.norm_tail_draws:
        fraction, stderr, threshold = norm_tail_fraction(spec, params.norm_tail_draws, seed)
        report["norm_tail"] = {"draws": params.norm_tail_draws, "fraction": fraction, "stderr": stderr,
                               "threshold": threshold, "bound": math.exp(-spec.m)}
    if params.condition_tail_draws and report["digits_bound"] is not None:
        report["condition_tail"] = empirical_condition_tail(spec, params.condition_tail_draws, seed)
    write_json(out_dir / "wainwright.json", report)
    return ["wainwright.json"], "ok"


VICTIMS: Dict[str, Callable] = {
    "truncate_then_solve": truncate_then_solve,
    "capped_certified_selector": capped_certified_selector,
}


def run_adversary(params: AdversaryParams, seed: int, out_dir: Path, workers: int,
                  progress: bool) -> Tuple[List[str], str]:
    kit = build_adversary(params.center.to_instance(), k=params.k, r=params.r, seed=seed)
    samples = kit.sample_inner_ball(params.n_samples, seed)
    write_json(out_dir / "kit.json", kit)
    files = ["kit.json"]
    summary = []
    for name in params.victims:
        victim = VICTIMS[name]
        report = demo_failure(kit, victim, samples)
        blind = digit_blindness(kit, victim, samples[: min(len(samples), 10)])
        write_json(out_dir / f"failure_{name}.json", report)
        files.append(f"failure_{name}.json")
        summary.append({"victim": name, "n_samples": len(samples), "n_wrong": report.n_wrong,
                        "n_abstained": report.n_abstained, "digit_blind": blind})
    write_csv(out_dir / "adversary_summary.csv", pd.DataFrame(summary))
    files.append("adversary_summary.csv")
    return files, "ok"


def run_gaps(params: GapsParams, seed: int, out_dir: Path, workers: int, progress: bool) -> Tuple[List[str], str]:
    sample = gap_statistic_sample(params.dist, params.N, params.trials, seed)
    ks = ks_distance(EmpiricalCDF(sample), expon.cdf)
    write_csv(out_dir / "gaps.csv", pd.DataFrame({"trial": np.arange(len(sample)), "scaled_delta": sample}))
    write_json(out_dir / "gaps_summary.json", {"dist": params.dist.label, "N": params.N, "trials": params.trials,
                                               "ks_distance_exp1": ks, "mean": float(np.mean(sample))})
    return ["gaps.csv", "gaps_summary.json"], "ok"


HANDLERS = {
    "solve": run_solve,
    "condition": run_condition,
    "certify": run_certify,
    "ensemble-t24": run_theorem24_command,
    "figure1": run_figure1_command,
    "wainwright": run_wainwright,
    "adversary": run_adversary,
    "gaps": run_gaps,
}


def run_experiment(config: ExperimentConfig, out_dir: Path, workers: int = 1, progress: bool = False) -> Dict:
    """
    Validate params, run the command and write artifacts plus manifest.json.

    Returns:
        dict with status, artifacts and wall time
    """
    params = config.resolved_params()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Running {config.command} with seed {config.seed} into {out_dir}")
    start = time.perf_counter()
    artifacts, status = HANDLERS[config.command](params, config.seed, out_dir, workers, progress)
    wall_time = time.perf_counter() - start
    resolved = {"command": config.command, "seed": config.seed, "out_dir": str(out_dir), "workers": workers,
                "params": params.model_dump(by_alias=True, mode="json")}
    write_manifest(out_dir, config.command, config.seed, resolved, wall_time, artifacts + ["manifest.json"], status)
    logger.info(f"{config.command} finished with status '{status}' in {wall_time:.2f}s")
    return {"status": status, "artifacts": artifacts, "wall_time": wall_time}
