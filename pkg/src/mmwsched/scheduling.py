"""Link-combination space, genie-aided optimum, label generation and baselines.

Links are numbered 0..N with 0 the low-band base station. A combination is a
bitmask over links (link i <-> bit i), so its index in the canonical
ordering of the strategy space is the mask value itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

MAX_LINKS = 16


@dataclass(frozen=True)
class LinkCombination:
    index: int
    n_links: int

    @property
    def links(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_links) if self.index >> i & 1)

    def __len__(self) -> int:
        return bin(self.index).count("1")

    def __contains__(self, link: int) -> bool:
        return bool(self.index >> link & 1)

    @classmethod
    def of(cls, links, n_links: int) -> "LinkCombination":
        return cls(combination_index(links), n_links)

    @classmethod
    def all_links(cls, n_links: int) -> "LinkCombination":
        return cls((1 << n_links) - 1, n_links)

    def __repr__(self) -> str:
        return f"LinkCombination({set(self.links) or '{}'})"


def combination_index(links) -> int:
    idx = 0
    for i in links:
        idx |= 1 << int(i)
    return idx


def enumerate_combinations(n_links: int) -> tuple[LinkCombination, ...]:
    """All 2**n_links subsets in bitmask order; index 0 is the empty set."""
    if not 1 <= n_links <= MAX_LINKS:
        raise ValueError(f"n_links must be in 1..{MAX_LINKS}, got {n_links}")
    return tuple(LinkCombination(j, n_links) for j in range(1 << n_links))


def membership(n_links: int, masks=None) -> np.ndarray:
    """0/1 matrix (n_masks, n_links); all combinations when ``masks`` is None."""
    if masks is None:
        masks = np.arange(1 << n_links)
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[..., None] >> np.arange(n_links)) & 1).astype(np.int64)


@dataclass(frozen=True)
class QosRequirement:
    D: int
    K: int

    def __post_init__(self):
        if self.D < 0 or self.K < 1:
            raise ValueError(f"need D >= 0 and K >= 1, got D={self.D}, K={self.K}")

    @property
    def min_links(self) -> int:
        return math.ceil(self.D / self.K)


@dataclass(frozen=True)
class CostVector:
    costs: tuple[float, ...]

    def __post_init__(self):
        c = self.costs
        if len(c) < 2:
            raise ValueError("need the LB-BS cost and at least one mmAP cost")
        if min(c[1:]) < 1:
            raise ValueError("mmAP costs must be >= 1")
        if not c[0] > max(c[1:]):
            raise ValueError("LB-BS cost must exceed every mmAP cost")

    @classmethod
    def default(cls, n_aps: int, lb_cost: float = 100.0, ap_cost: float = 1.0) -> "CostVector":
        return cls((float(lb_cost),) + (float(ap_cost),) * n_aps)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.costs, dtype=float)

    def __len__(self) -> int:
        return len(self.costs)


@dataclass
class ScheduleResult:
    feasible: bool
    combination: Optional[int]
    schedule: list[list[int]]  # links used in slot k = 1, 2, ...
    cost: float
    successes: int  # delivered packets, clamped at D
    successful_transmissions: int
    failures: int
    transmissions: int
    lb_transmissions: int
    stop_slot: int
    D: int = 0

    @property
    def completed(self) -> bool:
        return self.successes >= self.D

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScheduleResult":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class Label:
    index: int
    n_links: int
    cost: float
    feasible: bool

    @property
    def combination(self) -> LinkCombination:
        return LinkCombination(self.index, self.n_links)


def _g(g) -> np.ndarray:
    return np.asarray(getattr(g, "g", g))


def _check(g: np.ndarray, costs: CostVector) -> None:
    if g.ndim != 2:
        raise ValueError("g must be a (links, slots) matrix")
    if g.shape[0] != len(costs):
        raise ValueError(f"g has {g.shape[0]} links but {len(costs)} costs were given")


# --------------------------------------------------------------------------
# genie-aided IP
# --------------------------------------------------------------------------


def _pick_best(cost: np.ndarray, feasible: np.ndarray, masks: np.ndarray) -> Optional[int]:
    """Row of the cheapest feasible entry; ties -> fewer links, then lower mask."""
    cand = np.nonzero(feasible)[0]
    if len(cand) == 0:
        return None
    sizes = np.array([bin(int(m)).count("1") for m in masks[cand]])
    order = np.lexsort((masks[cand], sizes, cost[cand]))
    return int(cand[order[0]])


def genie_solve(g, qos: QosRequirement, costs: CostVector) -> ScheduleResult:
    """Exact optimum of the genie-aided scheduling IP.

    For a fixed combination the objective is separable and only slots with a
    good channel are worth using, so the optimum takes the D cheapest
    good (link, slot) pairs inside the combination (ties by slot, then link).
    Minimising over combinations gives the IP optimum.
    """
    g = _g(g)
    _check(g, costs)
    L, K = g.shape
    c = costs.array
    masks = np.arange(1 << L)
    D = qos.D

    ii, kk = np.nonzero(g[:, :K])
    order = np.lexsort((ii, kk, c[ii]))
    ii, kk = ii[order], kk[order]
    member = membership(L, masks)[:, ii]  # (C, P)
    count = np.cumsum(member, axis=1)
    total = count[:, -1] if len(ii) else np.zeros(len(masks), dtype=np.int64)
    feasible = total >= D
    used = (member == 1) & (count <= D)
    cost = (used * c[ii][None, :]).sum(axis=1)

    j = _pick_best(cost, feasible, masks)
    if j is None:
        return ScheduleResult(False, None, [], 0.0, 0, 0, 0, 0, 0, 0, D)
    pick = used[j]
    chosen_i, chosen_k = ii[pick], kk[pick]
    stop = int(chosen_k.max()) + 1 if len(chosen_k) else 0
    schedule = [sorted(int(i) for i in chosen_i[chosen_k == k]) for k in range(stop)]
    return ScheduleResult(
        feasible=True,
        combination=int(masks[j]),
        schedule=schedule,
        cost=float(cost[j]),
        successes=D,
        successful_transmissions=D,
        failures=0,
        transmissions=D,
        lb_transmissions=int((chosen_i == 0).sum()),
        stop_slot=stop,
        D=D,
    )


# --------------------------------------------------------------------------
# consecutive-transmission semantics
# --------------------------------------------------------------------------


def consecutive_outcomes(g, masks, D: int, costs: CostVector) -> dict[str, np.ndarray]:
    """Vectorised consecutive transmission on every link of each mask.

    ``g`` is (..., L, K) and ``masks`` broadcasts against its leading axes
    (use a trailing mask axis: g[:, None] with masks[None, :] etc.).
    Transmission runs slot by slot until D successes or slot K.
    """
    g = np.asarray(g, dtype=np.int64)
    L, K = g.shape[-2:]
    masks = np.asarray(masks, dtype=np.int64)
    member = membership(L, masks)  # (..., L)
    per_slot = np.einsum("...l,...lk->...k", member, g)
    cum = np.cumsum(per_slot, axis=-1)
    if D == 0:
        stop = np.zeros(cum.shape[:-1], dtype=np.int64)
        feasible = np.ones(cum.shape[:-1], dtype=bool)
    else:
        reached = cum >= D
        feasible = reached.any(axis=-1)
        stop = np.where(feasible, reached.argmax(axis=-1) + 1, K)
    succ = np.where(stop > 0, np.take_along_axis(cum, np.maximum(stop - 1, 0)[..., None], axis=-1)[..., 0], 0)
    n_links = member.sum(axis=-1)
    tx = stop * n_links
    return {
        "feasible": feasible,
        "stop": stop,
        "transmissions": tx,
        "successful": succ,
        "successes": np.minimum(succ, D),
        "failures": tx - succ,
        "lb_transmissions": stop * member[..., 0],
        "cost": stop * (member * costs.array).sum(axis=-1),
    }


def consecutive_cost(combination, g, qos: QosRequirement, costs: CostVector) -> ScheduleResult:
    """Transmit on every link of the combination each slot until D successes or slot K."""
    g = _g(g)
    _check(g, costs)
    mask = combination.index if isinstance(combination, LinkCombination) else int(combination)
    out = consecutive_outcomes(g, mask, qos.D, costs)
    links = [i for i in range(g.shape[0]) if mask >> i & 1]
    stop = int(out["stop"])
    return ScheduleResult(
        feasible=bool(out["feasible"]),
        combination=mask,
        schedule=[list(links) for _ in range(stop)],
        cost=float(out["cost"]),
        successes=int(out["successes"]),
        successful_transmissions=int(out["successful"]),
        failures=int(out["failures"]),
        transmissions=int(out["transmissions"]),
        lb_transmissions=int(out["lb_transmissions"]),
        stop_slot=stop,
        D=qos.D,
    )


# The network controller runs a chosen combination exactly as in labelling.
execute_policy = consecutive_cost


def label_sample(g, qos: QosRequirement, costs: CostVector) -> Label:
    """Cheapest combination under consecutive transmission; empty set if none is feasible."""
    g = _g(g)
    _check(g, costs)
    L = g.shape[0]
    masks = np.arange(1 << L)
    out = consecutive_outcomes(g[None], masks, qos.D, costs)
    j = _pick_best(out["cost"], out["feasible"], masks)
    if j is None:
        return Label(0, L, 0.0, False)
    return Label(int(masks[j]), L, float(out["cost"][j]), True)


def label_batch(g: np.ndarray, qos: QosRequirement, costs: CostVector) -> np.ndarray:
    """Labels for a stack of windows ``g`` (E, L, K); same rule as :func:`label_sample`."""
    g = np.asarray(g)
    E, L, _ = g.shape
    masks = np.arange(1 << L)
    out = consecutive_outcomes(g[:, None], masks[None, :], qos.D, costs)
    cost = np.where(out["feasible"], out["cost"], np.inf)
    sizes = membership(L, masks).sum(axis=1)
    # lexicographic (cost, size, mask): cost is exact for integer-valued costs
    best = np.full(E, 0, dtype=np.int64)
    best_key = np.full(E, np.inf)
    best_size = np.full(E, L + 1)
    for j in masks:
        better = (cost[:, j] < best_key) | ((cost[:, j] == best_key) & (sizes[j] < best_size))
        better &= np.isfinite(cost[:, j])
        best = np.where(better, j, best)
        best_key = np.where(better, cost[:, j], best_key)
        best_size = np.where(better, sizes[j], best_size)
    return best


def greedy_multi_x(g, qos: QosRequirement, costs: CostVector) -> ScheduleResult:
    """All links, every slot, until the task completes or the deadline."""
    g = _g(g)
    return consecutive_cost(LinkCombination.all_links(g.shape[0]), g, qos, costs)


def min_multi_x(measurement, qos: QosRequirement) -> LinkCombination:
    """The ceil(D/K) links with the highest alignment SNR (mmAP: best beam)."""
    snr = np.asarray(measurement.snr_db)
    scores = np.concatenate([[float(measurement.lb_snr_db)], snr.max(axis=-1)])
    n_links = len(scores)
    n = min(qos.min_links, n_links)
    ranked = sorted(range(n_links), key=lambda i: (-scores[i], i))
    return LinkCombination.of(ranked[:n], n_links)


def results_to_json(results: Sequence[ScheduleResult]) -> str:
    return json.dumps([asdict(r) for r in results], sort_keys=True)
