"""Dataset generation, policy evaluation, KPIs and parameter sweeps."""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import RadioParams, WindowBatch, simulate_windows
from .forest import Forest, ForestParams, decide_batch, train_forest
from .scene import SceneConfig, build_scene
from .scheduling import (
    CostVector,
    LinkCombination,
    QosRequirement,
    ScheduleResult,
    consecutive_outcomes,
    genie_solve,
    label_batch,
)

POLICIES = ("genie", "greedy", "min-multi-x", "forest")


# --------------------------------------------------------------------------
# realizations and datasets
# --------------------------------------------------------------------------


@dataclass
class Realization:
    seed: int
    user_kind: str
    duration: int  # slots
    windows: WindowBatch

    @property
    def n_windows(self) -> int:
        return len(self.windows)


def simulate_realization(scene_config: SceneConfig, seed: int, K: int, duration: int = 10_000,
                         slot_duration: float = 1e-3, radio: RadioParams = RadioParams(),
                         gamma: float = 10.0) -> Realization:
    """One independent scene (obstacles and user path) drawn from ``seed``."""
    if K < 1 or duration < K or duration % K:
        raise ValueError(f"duration {duration} must be a positive multiple of K={K}")
    config = dataclasses.replace(scene_config, seed=int(seed))
    scene = build_scene(config)
    batch = simulate_windows(scene, duration // K, K, slot_duration, radio, gamma)
    return Realization(int(seed), config.user.kind, duration, batch)


def simulate_realizations(scene_config: SceneConfig, seeds: Sequence[int], K: int, duration: int = 10_000,
                          slot_duration: float = 1e-3, radio: RadioParams = RadioParams(),
                          gamma: float = 10.0, workers: int = 1) -> list[Realization]:
    args = (K, duration, slot_duration, radio, gamma)
    if workers == 1 or len(seeds) < 2:
        return [simulate_realization(scene_config, s, *args) for s in seeds]
    from joblib import Parallel, delayed

    return list(Parallel(n_jobs=workers)(delayed(simulate_realization)(scene_config, s, *args) for s in seeds))


def feature_names(n_aps: int, n_beams: int) -> list[str]:
    """Column order of the classifier input."""
    names = [f"snr_ap{i + 1}_b{m:02d}" for i in range(n_aps) for m in range(n_beams)]
    return names + ["lb_snr_db", "D", "K", "x", "y"]


@dataclass(eq=False)
class Dataset:
    """One row per scheduling window: alignment features, label and genie channel."""

    X: np.ndarray  # (E, N*M + 5)
    y: np.ndarray  # (E,) combination index
    realization: np.ndarray  # (E,) seed of the source realization
    window: np.ndarray  # (E,)
    g: np.ndarray  # (E, N+1, K) uint8
    n_aps: int
    n_beams: int
    D: int

    def __post_init__(self):
        E = len(self.y)
        if not (len(self.X) == len(self.realization) == len(self.window) == len(self.g) == E):
            raise ValueError("dataset columns have different lengths")
        if self.X.shape[1] != self.n_aps * self.n_beams + 5:
            raise ValueError(f"feature dimension {self.X.shape[1]} does not match "
                             f"{self.n_aps} mmAPs x {self.n_beams} beams")
        if self.g.shape[1] != self.n_aps + 1:
            raise ValueError("g must have one row per link")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def K(self) -> int:
        return self.g.shape[2]

    @property
    def n_links(self) -> int:
        return self.n_aps + 1

    @property
    def n_classes(self) -> int:
        return 1 << self.n_links

    @property
    def qos(self) -> QosRequirement:
        return QosRequirement(self.D, self.K)

    @property
    def snr_db(self) -> np.ndarray:
        return self.X[:, : self.n_aps * self.n_beams].reshape(len(self), self.n_aps, self.n_beams)

    @property
    def lb_snr_db(self) -> np.ndarray:
        return self.X[:, self.n_aps * self.n_beams]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.realization[rows], self.window[rows], self.g[rows],
                       self.n_aps, self.n_beams, self.D)

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        p0 = parts[0]
        return Dataset(np.concatenate([p.X for p in parts]), np.concatenate([p.y for p in parts]),
                       np.concatenate([p.realization for p in parts]), np.concatenate([p.window for p in parts]),
                       np.concatenate([p.g for p in parts]), p0.n_aps, p0.n_beams, p0.D)


def dataset_from_realizations(realizations: Sequence[Realization], qos: QosRequirement,
                              costs: CostVector) -> Dataset:
    """Features from the k=0 measurement, labels from the genie channel of slots 1..K."""
    if not realizations:
        raise ValueError("no realizations")
    parts = []
    for r in realizations:
        w = r.windows
        if w.g.shape[2] != qos.K:
            raise ValueError(f"realization {r.seed} has K={w.g.shape[2]}, expected {qos.K}")
        W, N, M = w.snr_db.shape
        X = np.column_stack([w.snr_db.reshape(W, N * M), w.lb_snr_db, np.full(W, qos.D), np.full(W, qos.K),
                             w.position]).astype(float)
        y = label_batch(w.g, qos, costs)
        parts.append(Dataset(X, y, np.full(W, r.seed), np.arange(W), w.g.copy(), N, M, qos.D))
    return Dataset.concat(parts)


def generate_dataset(scene_config: SceneConfig, n_realizations: int, qos: QosRequirement, costs: CostVector,
                     *, seed: int = 0, duration: int = 10_000, slot_duration: float = 1e-3,
                     radio: RadioParams = RadioParams(), gamma: float = 10.0, workers: int = 1) -> Dataset:
    """Realization r is simulated from seed ``seed + r``."""
    scene_config.validate()
    seeds = [seed + r for r in range(n_realizations)]
    reals = simulate_realizations(scene_config, seeds, qos.K, duration, slot_duration, radio, gamma, workers)
    return dataset_from_realizations(reals, qos, costs)


def write_dataset_csv(path, ds: Dataset) -> None:
    """Columns: realization, window, features, label, then g_<link>_<slot> (link-major)."""
    g_cols = [f"g_{i}_{k}" for i in range(ds.n_links) for k in range(1, ds.K + 1)]
    header = ["realization", "window"] + feature_names(ds.n_aps, ds.n_beams) + ["label"] + g_cols
    flat = ds.g.reshape(len(ds), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e in range(len(ds)):
            w.writerow([int(ds.realization[e]), int(ds.window[e])] + [repr(float(v)) for v in ds.X[e]]
                       + [int(ds.y[e])] + flat[e].tolist())


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path} is empty")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path} has no samples")
    n_beam_cols = sum(1 for h in header if h.startswith("snr_ap"))
    n_aps = len({h.split("_")[1] for h in header if h.startswith("snr_ap")})
    if n_aps == 0 or n_beam_cols % n_aps:
        raise ValueError(f"{path}: malformed feature columns")
    n_beams = n_beam_cols // n_aps
    n_feat = n_beam_cols + 5
    li = header.index("label")
    if li != 2 + n_feat:
        raise ValueError(f"{path}: unexpected column layout")
    K = (len(header) - li - 1) // (n_aps + 1)
    if K * (n_aps + 1) != len(header) - li - 1:
        raise ValueError(f"{path}: g columns do not form an (N+1) x K grid")
    X = np.array([[float(v) for v in r[2:li]] for r in rows])
    y = np.array([int(r[li]) for r in rows], dtype=np.int64)
    g = np.array([[int(v) for v in r[li + 1:]] for r in rows], dtype=np.uint8).reshape(len(rows), n_aps + 1, K)
    D = int(X[0, n_beam_cols + 1])
    return Dataset(X, y, np.array([int(r[0]) for r in rows]), np.array([int(r[1]) for r in rows]), g,
                   n_aps, n_beams, D)


# --------------------------------------------------------------------------
# KPIs
# --------------------------------------------------------------------------


@dataclass
class KpiReport:
    completed: float  # fraction of episodes with >= D successes
    failed_fraction: Optional[float]  # failures / transmissions; None if nothing was sent
    lb_fraction: Optional[float]  # LB transmissions / transmissions
    mean_cost: float
    episodes: int
    transmissions: int = 0
    failures: int = 0
    lb_transmissions: int = 0
    genie_infeasible: int = 0  # episodes no policy can complete

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def compute_kpis(results: Sequence[ScheduleResult], genie_infeasible: int = 0) -> KpiReport:
    if not results:
        raise ValueError("cannot compute KPIs of zero episodes")
    tx = sum(r.transmissions for r in results)
    fail = sum(r.failures for r in results)
    lb = sum(r.lb_transmissions for r in results)
    done = sum(1 for r in results if r.completed)
    return KpiReport(
        completed=done / len(results),
        failed_fraction=fail / tx if tx else None,
        lb_fraction=lb / tx if tx else None,
        mean_cost=float(np.mean([r.cost for r in results])),
        episodes=len(results),
        transmissions=tx,
        failures=fail,
        lb_transmissions=lb,
        genie_infeasible=genie_infeasible,
    )


# --------------------------------------------------------------------------
# policies
# --------------------------------------------------------------------------


def min_multi_x_masks(ds: Dataset) -> np.ndarray:
    """Vectorised min Multi-x: the ceil(D/K) links with the best alignment SNR."""
    scores = np.column_stack([ds.lb_snr_db, ds.snr_db.max(axis=2)])
    n = min(ds.qos.min_links, ds.n_links)
    # stable sort on -score keeps lower link index first on ties
    ranked = np.argsort(-scores, axis=1, kind="stable")[:, :n]
    return (1 << ranked).sum(axis=1) if n else np.zeros(len(ds), dtype=np.int64)


def policy_masks(policy: str, ds: Dataset, forest: Optional[Forest] = None, beta: Optional[float] = None,
                 proba: Optional[np.ndarray] = None) -> np.ndarray:
    """Combination chosen per episode from the k=0 measurement only."""
    if policy == "greedy":
        return np.full(len(ds), LinkCombination.all_links(ds.n_links).index)
    if policy == "min-multi-x":
        return min_multi_x_masks(ds)
    if policy == "forest":
        if proba is None:
            if forest is None:
                raise ValueError("the forest policy needs a trained model")
            proba = forest.predict_proba(ds.X)
        if beta is None:
            raise ValueError("the forest policy needs beta")
        return decide_batch(proba, beta, ds.n_links)
    raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")


def _results_from_masks(ds: Dataset, masks: np.ndarray, costs: CostVector) -> list[ScheduleResult]:
    out = consecutive_outcomes(ds.g, masks, ds.D, costs)
    results = []
    for e, mask in enumerate(masks):
        links = [i for i in range(ds.n_links) if mask >> i & 1]
        stop = int(out["stop"][e])
        results.append(ScheduleResult(
            feasible=bool(out["feasible"][e]), combination=int(mask), schedule=[list(links)] * stop,
            cost=float(out["cost"][e]), successes=int(out["successes"][e]),
            successful_transmissions=int(out["successful"][e]), failures=int(out["failures"][e]),
            transmissions=int(out["transmissions"][e]), lb_transmissions=int(out["lb_transmissions"][e]),
            stop_slot=stop, D=ds.D))
    return results


def run_policy(policy: str, ds: Dataset, costs: CostVector, forest: Optional[Forest] = None,
               beta: Optional[float] = None, proba: Optional[np.ndarray] = None) -> list[ScheduleResult]:
    if len(ds) == 0:
        raise ValueError("empty test set")
    if len(costs) != ds.n_links:
        raise ValueError(f"{len(costs)} costs for {ds.n_links} links")
    if policy == "genie":
        return [genie_solve(ds.g[e], ds.qos, costs) for e in range(len(ds))]
    return _results_from_masks(ds, policy_masks(policy, ds, forest, beta, proba), costs)


def genie_infeasible_count(ds: Dataset) -> int:
    return int((ds.g.reshape(len(ds), -1).sum(axis=1) < ds.D).sum())


def evaluate_policy(policy: str, test: Dataset, costs: CostVector, forest: Optional[Forest] = None,
                    beta: Optional[float] = None, proba: Optional[np.ndarray] = None) -> KpiReport:
    """KPIs pooled over every window of every test realization."""
    return compute_kpis(run_policy(policy, test, costs, forest, beta, proba), genie_infeasible_count(test))


def sweep_beta(forest: Forest, test: Dataset, betas: Sequence[float], costs: CostVector) -> list[KpiReport]:
    betas = list(betas)
    if betas != sorted(betas):
        raise ValueError("betas must be sorted ascending")
    if not betas:
        return []
    proba = forest.predict_proba(test.X)
    return [evaluate_policy("forest", test, costs, forest, b, proba) for b in betas]


@dataclass
class SweepCell:
    train_size: int
    n_trees: int
    report: KpiReport


def sweep_training(forest_params: ForestParams, train_sizes: Sequence[int], tree_counts: Sequence[int],
                   train: Dataset, test: Dataset, costs: CostVector, beta: float = 0.0, seed: int = 0,
                   workers: int = 1) -> list[SweepCell]:
    """One forest per (size, trees) cell, trained on a prefix of a seeded shuffle of ``train``."""
    if any(s > len(train) or s < 1 for s in train_sizes):
        raise ValueError(f"train sizes must be in 1..{len(train)}")
    order = np.random.default_rng(seed).permutation(len(train))
    cells = []
    for size in train_sizes:
        part = train.subset(order[:size])
        for trees in tree_counts:
            params = dataclasses.replace(forest_params, n_trees=int(trees))
            model = train_forest(part.X, part.y, params, n_classes=train.n_classes, n_jobs=workers)
            cells.append(SweepCell(int(size), int(trees), evaluate_policy("forest", test, costs, model, beta)))
    return cells


# --------------------------------------------------------------------------
# report files
# --------------------------------------------------------------------------

KPI_COLUMNS = ("completed", "failed_fraction", "lb_fraction", "mean_cost", "episodes", "transmissions",
               "failures", "lb_transmissions", "genie_infeasible")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows_csv(path, rows: Sequence[dict], key_columns: Sequence[str]) -> None:
    """Long-format table: key columns then every KPI column; undefined values are empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(key_columns) + list(KPI_COLUMNS))
        for row in rows:
            w.writerow([_cell(row.get(k)) for k in key_columns] + [_cell(row[k]) for k in KPI_COLUMNS])


def write_rows_json(path, rows: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        json.dump(list(rows), fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_row(report: KpiReport, **keys) -> dict:
    return {**keys, **report.as_dict()}
