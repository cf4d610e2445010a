"""Multi-BS association / multi-RB allocation by many-to-one exchange matching.

The problem: assign each BS-RB row to exactly one UE while every UE holds at
least Q RBs, maximizing the summed rate.  The main solver runs a greedy
proposal initialization followed by pairwise exchange sweeps (swap and the
two directed transfers) repeated to a fixed point; only strictly improving
moves are accepted, which guarantees termination and pairwise stability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleProblemError


@dataclass(frozen=True)
class AllocProblem:
    rates: np.ndarray  # W x M, Mbps, finite and >= 0
    quota: int
    row_labels: tuple[tuple[int, int], ...] = ()  # (bs_id, rb_index) per row
    ue_ids: tuple[int, ...] = ()

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.ndim != 2 or r.size == 0:
            raise ValueError("rates must be a nonempty W x M matrix")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("rates must be finite and nonnegative")
        if self.quota < 0:
            raise ValueError("quota must be >= 0")
        if r.shape[0] < self.quota * r.shape[1]:
            raise InfeasibleProblemError(
                f"W={r.shape[0]} < Q*M={self.quota * r.shape[1]}: no feasible matching"
            )

    @property
    def num_rbs(self) -> int:
        return self.rates.shape[0]

    @property
    def num_ues(self) -> int:
        return self.rates.shape[1]


@dataclass
class Matching:
    owner: np.ndarray  # length W, owner[w] = m

    def groups(self, num_ues: int) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(num_ues)]
        for w, m in enumerate(self.owner):
            out[int(m)].append(w)
        return out

    def sum_rate(self, p: AllocProblem) -> float:
        return float(np.sum(p.rates[np.arange(p.num_rbs), self.owner]))

    def per_ue_throughput(self, p: AllocProblem) -> np.ndarray:
        out = np.zeros(p.num_ues)
        np.add.at(out, self.owner, p.rates[np.arange(p.num_rbs), self.owner])
        return out

    def is_feasible(self, p: AllocProblem) -> bool:
        counts = np.bincount(self.owner, minlength=p.num_ues)
        return len(self.owner) == p.num_rbs and np.all(counts >= p.quota)


def init_matching(p: AllocProblem) -> Matching:
    """Proposal-based initialization.

    Deficient UEs apply to their best still-unallocated RBs (up to their
    remaining quota); every RB that received proposals accepts the proposer
    with the highest rate.  Leftover RBs go to their max-rate UE.  All ties
    break to the smallest index.
    """
    w_n, m_n = p.num_rbs, p.num_ues
    owner = np.full(w_n, -1, dtype=int)
    # Preference lists: rates descending, index ascending on ties.
    pref = [
        sorted(range(w_n), key=lambda w: (-p.rates[w, m], w)) for m in range(m_n)
    ]
    counts = np.zeros(m_n, dtype=int)
    while np.any(counts < p.quota):
        proposals: dict[int, list[int]] = {}
        for m in range(m_n):
            deficit = p.quota - counts[m]
            if deficit <= 0:
                continue
            targets = [w for w in pref[m] if owner[w] < 0][:deficit]
            for w in targets:
                proposals.setdefault(w, []).append(m)
        if not proposals:
            raise InfeasibleProblemError("proposal rounds stalled; problem infeasible")
        for w, applicants in proposals.items():
            best = min(applicants, key=lambda m: (-p.rates[w, m], m))
            owner[w] = best
            counts[best] += 1
    for w in range(w_n):
        if owner[w] < 0:
            owner[w] = int(np.argmax(p.rates[w]))  # first max wins ties
    return Matching(owner=owner)


@dataclass
class ExchangeResult:
    matching: Matching
    trace: list[float] = field(default_factory=list)  # sum rate after each accepted move
    sweeps: int = 0
    pair_evaluations: int = 0


def m3_mama(p: AllocProblem, max_sweeps: int = 1000) -> ExchangeResult:
    """Exchange-matching solver: init phase plus improvement sweeps.

    Each sweep visits every ordered RB pair (i, j) with different owners and
    evaluates keeping (T0), swapping the owners (T1), moving i to j's owner
    (T2) and moving j to i's owner (T3); transfers must leave the donor at
    quota.  The best strictly improving move is applied.  Sweeps repeat
    until one full pass accepts nothing.
    """
    init = init_matching(p)
    owner = init.owner.copy()
    counts = np.bincount(owner, minlength=p.num_ues)
    result = ExchangeResult(matching=Matching(owner=owner))
    arange_w = np.arange(p.num_rbs)

    def total() -> float:
        # Fixed summation order: the total is a pure function of the
        # configuration, so strict comparisons order configurations exactly
        # and no configuration can repeat.
        return float(np.sum(p.rates[arange_w, owner]))

    current = total()
    for _ in range(max_sweeps):
        result.sweeps += 1
        improved = False
        for i in range(p.num_rbs):
            for j in range(p.num_rbs):
                oi, oj = int(owner[i]), int(owner[j])
                if oi == oj:
                    continue
                result.pair_evaluations += 1
                owner[i], owner[j] = oj, oi
                t1 = total()
                owner[i], owner[j] = oi, oj
                if counts[oi] > p.quota:  # T2: RB i joins j's owner
                    owner[i] = oj
                    t2 = total()
                    owner[i] = oi
                else:
                    t2 = 0.0
                if counts[oj] > p.quota:  # T3: RB j joins i's owner
                    owner[j] = oi
                    t3 = total()
                    owner[j] = oj
                else:
                    t3 = 0.0
                best_t = max(t1, t2, t3)
                if best_t <= current:
                    continue
                if t1 == best_t:
                    owner[i], owner[j] = oj, oi
                elif t2 == best_t:
                    owner[i] = oj
                    counts[oi] -= 1
                    counts[oj] += 1
                else:
                    owner[j] = oi
                    counts[oj] -= 1
                    counts[oi] += 1
                current = total()
                result.trace.append(current)
                improved = True
        if not improved:
            break
    result.matching = Matching(owner=owner)
    return result


def is_pairwise_stable(m: Matching, p: AllocProblem) -> tuple[bool, tuple[int, int] | None]:
    """Scan all non-matched (UE, RB) pairs for a strictly improving move.

    A pair blocks when transferring the RB to the UE (donor stays at quota)
    or swapping it against one of the UE's RBs strictly raises the summed
    rate.  Returns (stable, witness-or-None).
    """
    counts = np.bincount(m.owner, minlength=p.num_ues)
    groups = m.groups(p.num_ues)
    owner = m.owner.copy()
    arange_w = np.arange(p.num_rbs)

    def total() -> float:
        # Same summation order as m3_mama so both sides agree on strictness.
        return float(np.sum(p.rates[arange_w, owner]))

    current = total()
    for w in range(p.num_rbs):
        ow = int(owner[w])
        for ue in range(p.num_ues):
            if ue == ow:
                continue
            if counts[ow] > p.quota:
                owner[w] = ue
                t = total()
                owner[w] = ow
                if t > current:
                    return False, (ue, w)
            for w2 in groups[ue]:
                owner[w], owner[w2] = ue, ow
                t = total()
                owner[w], owner[w2] = ow, ue
                if t > current:
                    return False, (ue, w)
    return True, None


def round_robin(p: AllocProblem) -> Matching:
    """Cyclic assignment: RB w -> UE (w mod M)."""
    return Matching(owner=np.arange(p.num_rbs) % p.num_ues)


def best_cqi(p: AllocProblem) -> Matching:
    """Per-RB argmax-rate assignment with minimal-loss quota repair.

    After the greedy pass, quota-deficient UEs take RBs from UEs holding
    surplus, choosing at each step the transfer with the smallest rate loss.
    """
    owner = np.argmax(p.rates, axis=1).astype(int)
    counts = np.bincount(owner, minlength=p.num_ues)
    while True:
        deficient = [m for m in range(p.num_ues) if counts[m] < p.quota]
        if not deficient:
            break
        target = deficient[0]
        best_move: tuple[float, int] | None = None  # (loss, rb)
        for w in range(p.num_rbs):
            donor = int(owner[w])
            if donor == target or counts[donor] <= p.quota:
                continue
            loss = p.rates[w, donor] - p.rates[w, target]
            if best_move is None or loss < best_move[0]:
                best_move = (loss, w)
        if best_move is None:
            raise InfeasibleProblemError("quota repair failed; problem infeasible")
        w = best_move[1]
        counts[int(owner[w])] -= 1
        owner[w] = target
        counts[target] += 1
    return Matching(owner=owner)


def brute_force_optimal(p: AllocProblem, limit: int = 10_000_000) -> Matching:
    """Exact argmax over all feasible assignments (small instances only).

    Enumerates owner vectors in lexicographic order; the first maximum over
    feasible configurations wins, making tie-breaking deterministic.
    """
    w_n, m_n = p.num_rbs, p.num_ues
    total = m_n**w_n
    if total > limit:
        raise ValueError(f"M^W = {total} exceeds enumeration limit {limit}")
    idx = np.arange(total)
    owners = np.empty((total, w_n), dtype=np.int8)
    for w in range(w_n):
        owners[:, w] = (idx // (m_n ** (w_n - 1 - w))) % m_n
    sums = p.rates[np.arange(w_n)[None, :], owners.astype(int)].sum(axis=1)
    feasible = np.ones(total, dtype=bool)
    for m in range(m_n):
        feasible &= (owners == m).sum(axis=1) >= p.quota
    if not np.any(feasible):
        raise InfeasibleProblemError("no feasible assignment")
    sums[~feasible] = -np.inf
    return Matching(owner=owners[int(np.argmax(sums))].astype(int))


def jain_index(throughputs) -> float:
    """(sum x)^2 / (n * sum x^2); 1 for equal shares, 1/n for one-hot."""
    x = np.asarray(throughputs, dtype=float)
    if x.size == 0:
        raise ValueError("jain index of an empty list")
    denom = x.size * float(np.sum(x**2))
    if denom == 0.0:
        return 1.0  # all-zero vector: perfectly equal
    return float(np.sum(x)) ** 2 / denom


def spectral_efficiency(sum_rate_mbps: float, bandwidth_mhz: float) -> float:
    """bits/s/Hz."""
    if bandwidth_mhz <= 0:
        raise ValueError("bandwidth must be positive")
    return sum_rate_mbps / bandwidth_mhz


def per_rb_cdf(m: Matching, p: AllocProblem) -> list[tuple[float, float]]:
    """Sorted (assigned rate, cumulative fraction) points over all RBs."""
    rates = np.sort(p.rates[np.arange(p.num_rbs), m.owner])
    n = len(rates)
    return [(float(r), (i + 1) / n) for i, r in enumerate(rates)]


def problem_to_json(p: AllocProblem) -> str:
    return json.dumps(
        {
            "rates": p.rates.tolist(),
            "quota": p.quota,
            "row_labels": [list(x) for x in p.row_labels],
            "ue_ids": list(p.ue_ids),
        }
    )


def problem_from_json(text: str) -> AllocProblem:
    doc = json.loads(text)
    return AllocProblem(
        rates=np.array(doc["rates"], dtype=float),
        quota=int(doc["quota"]),
        row_labels=tuple(tuple(x) for x in doc.get("row_labels", [])),
        ue_ids=tuple(doc.get("ue_ids", [])),
    )


def matching_to_json(m: Matching) -> str:
    return json.dumps({"owner": [int(x) for x in m.owner]})


def matching_from_json(text: str) -> Matching:
    return Matching(owner=np.array(json.loads(text)["owner"], dtype=int))
