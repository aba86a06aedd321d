"""File formats: dense CSV matrices, JSON documents for groups, models,
configs and rejection sets, and the scores/results CSV layouts.

All feature and group indices in files are 0-based, matching the Python
API. Infinite thresholds serialize as the string "inf".
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .knockoffs import GaussianModel
from .simulate import ExperimentConfig, ExperimentResult
from .structures import GroupStructure, KappaTauTable, RejectionSet, ScoreTable


def read_matrix_csv(path) -> np.ndarray:
    """Dense comma-separated matrix; a non-numeric first row is a header."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValidationError(f"{path} is empty")
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
        if not rows:
            raise ValidationError(f"{path} has a header but no data")
    try:
        mat = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}")
    if mat.ndim != 2:
        raise ValidationError(f"{path} rows have inconsistent lengths")
    return mat


def write_matrix_csv(path, mat, header: list[str] | None = None) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        if header is not None:
            out.writerow(header)
        out.writerows(mat.tolist())


def read_vector_csv(path) -> np.ndarray:
    mat = read_matrix_csv(path)
    if 1 not in mat.shape:
        raise ValidationError(f"{path} does not hold a vector")
    return mat.reshape(-1)


def groups_to_dict(gs: GroupStructure) -> dict:
    return {"p": gs.p, "groups": [list(g) for g in gs.groups]}


def groups_from_dict(doc: dict) -> GroupStructure:
    try:
        return GroupStructure.from_groups(doc["groups"], p=int(doc["p"]))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed groups document: {exc}")


def write_groups_json(path, gs: GroupStructure) -> None:
    Path(path).write_text(json.dumps(groups_to_dict(gs), indent=1))


def read_groups_json(path) -> GroupStructure:
    return groups_from_dict(json.loads(Path(path).read_text()))


def write_model_json(path, model: GaussianModel) -> None:
    doc = {
        "mu": model.mu.tolist(),
        "sigma": model.sigma.tolist(),
        "groups": [list(g) for g in model.gs.groups],
    }
    Path(path).write_text(json.dumps(doc))


def read_model_json(path) -> GaussianModel:
    doc = json.loads(Path(path).read_text())
    try:
        gs = GroupStructure.from_groups(doc["groups"])
        return GaussianModel(mu=np.asarray(doc["mu"]), sigma=np.asarray(doc["sigma"]), gs=gs)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model document: {exc}")


SCORES_HEADER = ["feature_id", "group_id", "t", "t_knock", "w"]


def write_scores_csv(path, scores: ScoreTable, w, gs: GroupStructure) -> None:
    w = np.asarray(w, dtype=float)
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(SCORES_HEADER)
        for j in range(len(scores)):
            out.writerow([j, int(gs.group_of[j]), scores.t[j], scores.t_knock[j], w[j]])


def read_scores_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (group_of, t, t_knock, w) from a single-knockoff scores file."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "w" not in rows[0]:
        raise ValidationError(f"{path} is not a single-knockoff scores file")
    order = np.argsort([int(r["feature_id"]) for r in rows])
    rows = [rows[i] for i in order]
    group_of = np.array([int(r["group_id"]) for r in rows])
    t = np.array([float(r["t"]) for r in rows])
    tk = np.array([float(r["t_knock"]) for r in rows])
    w = np.array([float(r["w"]) for r in rows])
    return group_of, t, tk, w


def write_multi_scores_csv(path, t_all: np.ndarray, kt: KappaTauTable) -> None:
    m_plus_1 = t_all.shape[0]
    header = ["feature_id", "group_id"] + [f"t_{m}" for m in range(m_plus_1)] + ["kappa", "tau"]
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for j in range(t_all.shape[1]):
            out.writerow(
                [j, int(kt.gs.group_of[j]), *t_all[:, j].tolist(), int(kt.kappa[j]), kt.tau[j]]
            )


def read_multi_scores_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Returns (group_of, kappa, tau, m) from a multi-knockoff scores file."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "kappa" not in rows[0]:
        raise ValidationError(f"{path} is not a multi-knockoff scores file")
    order = np.argsort([int(r["feature_id"]) for r in rows])
    rows = [rows[i] for i in order]
    m = sum(1 for k in rows[0] if k.startswith("t_")) - 1
    group_of = np.array([int(r["group_id"]) for r in rows])
    kappa = np.array([int(r["kappa"]) for r in rows])
    tau = np.array([float(r["tau"]) for r in rows])
    return group_of, kappa, tau, m


def group_structure_from_map(group_of: np.ndarray) -> GroupStructure:
    ids = np.unique(group_of)
    return GroupStructure.from_groups(
        [np.flatnonzero(group_of == k).tolist() for k in ids]
    )


def _threshold_out(t: float):
    return "inf" if math.isinf(t) else t


def rejection_to_dict(rej: RejectionSet) -> dict:
    doc = {
        "method": rej.method,
        "alpha": rej.alpha,
        "selected": sorted(rej.selected),
        "thresholds": [_threshold_out(t) for t in rej.thresholds],
        "fdp_hat": rej.fdp_hat,
        "budgets": list(rej.budgets) if rej.budgets is not None else None,
    }
    if rej.selected_groups is not None:
        doc["selected_groups"] = sorted(rej.selected_groups)
    return doc


def write_rejection_json(path, rej: RejectionSet) -> None:
    Path(path).write_text(json.dumps(rejection_to_dict(rej), indent=1))


def read_rejection_json(path) -> RejectionSet:
    doc = json.loads(Path(path).read_text())
    thresholds = tuple(
        float("inf") if t == "inf" or t is None else float(t) for t in doc["thresholds"]
    )
    groups = doc.get("selected_groups")
    return RejectionSet(
        method=doc["method"],
        alpha=float(doc["alpha"]),
        selected=frozenset(int(j) for j in doc["selected"]),
        thresholds=thresholds,
        fdp_hat=doc["fdp_hat"],
        budgets=tuple(doc["budgets"]) if doc.get("budgets") else None,
        selected_groups=frozenset(int(k) for k in groups) if groups is not None else None,
    )


_LIST_FIELDS = ("group_sizes", "alphas", "filters", "beta")


def config_from_dict(doc: dict) -> ExperimentConfig:
    known = set(ExperimentConfig.__dataclass_fields__)
    bad = set(doc) - known
    if bad:
        raise ValidationError(f"unknown config keys: {sorted(bad)}")
    kwargs = dict(doc)
    for key in _LIST_FIELDS:
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    if kwargs.get("sigma") is not None:
        kwargs["sigma"] = tuple(tuple(row) for row in kwargs["sigma"])
    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


def read_config_json(path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def write_config_json(path, config: ExperimentConfig) -> None:
    Path(path).write_text(json.dumps(asdict(config), indent=1))


AGGREGATE_HEADER = [
    "method",
    "alpha",
    "mean_fdr",
    "se_fdr",
    "mean_power",
    "se_power",
    "mean_catch_size",
    "mean_purity",
    "n_reps",
]
REPLICATION_HEADER = ["replication", "method", "alpha", "fdp", "power", "mean_catch_size", "mean_purity"]


def write_experiment_csvs(out_dir, result: ExperimentResult) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agg_path = out_dir / "aggregate.csv"
    rep_path = out_dir / "replications.csv"
    with agg_path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(AGGREGATE_HEADER)
        for r in result.aggregate:
            out.writerow(
                [
                    r.method,
                    r.alpha,
                    r.mean_fdr,
                    r.se_fdr,
                    r.mean_power,
                    r.se_power,
                    r.mean_catch_size,
                    r.mean_purity,
                    r.n_reps,
                ]
            )
    with rep_path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(REPLICATION_HEADER)
        for rep in result.replications:
            for o in rep.outcomes:
                out.writerow(
                    [o.rep, o.method, o.alpha, o.fdp, o.power, o.catch_size, o.catch_purity]
                )
    return agg_path, rep_path
