"""Multi-task linear regression with group sparsity and task clustering.

The public API re-exports the main entry points of each submodule.
Attribute access is lazy so that importing the package (or its CLI)
does not pull in numpy before thread environment variables are set.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # errors
    "TaskregError": "errors",
    "SchemaError": "errors",
    "ParseError": "errors",
    "DegenerateTaskError": "errors",
    "SolverError": "errors",
    "LineSearchError": "errors",
    "DivergenceError": "errors",
    # dataset
    "TaskData": "dataset",
    "MultiTaskDataset": "dataset",
    "ScalingParams": "dataset",
    "load_csv": "dataset",
    "write_csv": "dataset",
    "minmax_scale": "dataset",
    "apply_scale": "dataset",
    "stratified_split": "dataset",
    # solver
    "ProximalProblem": "fista",
    "SolverConfig": "fista",
    "SolveTrace": "fista",
    "solve": "fista",
    "surrogate_q": "fista",
    "backtracking_step": "fista",
    # joint-sparsity model
    "MtlModel": "mtl",
    "fit_mtl": "mtl",
    "predict": "mtl",
    "prox_l21": "mtl",
    "lambda_max": "mtl",
    "l21_norm": "mtl",
    "objective": "mtl",
    # clustered model
    "CmtlParams": "cmtl",
    "RelaxedClusterMatrix": "cmtl",
    "ClusteredModel": "cmtl",
    "fit_cmtl": "cmtl",
    "extract_clusters": "cmtl",
    "project_spectral": "cmtl",
    "capped_simplex_project": "cmtl",
    "cluster_indicator": "cmtl",
    "cmtl_objective": "cmtl",
    # rankings
    "RankedFactor": "riskfactors",
    "RiskReport": "riskfactors",
    "rank_task_rfs": "riskfactors",
    "aggregate_population": "riskfactors",
    "aggregate_cluster_level": "riskfactors",
    "vote_merge_stl": "riskfactors",
    "build_report": "riskfactors",
    # baselines and evaluation
    "StlSpec": "baselines",
    "MaeReport": "baselines",
    "fit_stl": "baselines",
    "mae": "baselines",
    "evaluate": "baselines",
    "aggregate_reports": "baselines",
    "write_mae_table": "baselines",
    # persistence
    "save_model": "serialize",
    "load_model": "serialize",
    "model_to_dict": "serialize",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name: str):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
