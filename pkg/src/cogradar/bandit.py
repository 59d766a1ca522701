"""Contextual-bandit waveform selection under a distortion constraint.

The learner keeps an :class:`ObservationHistory` of costs per (waveform,
sensed interference vector) pair.  Each PRI the context of a waveform is the
sample mean, sample variance and last value of its costs under the current
sensed vector.  Two policies consume these contexts: linear Thompson sampling
(stochastic costs) and linear EXP3 (adversarial costs).  Both are restricted
to the admissible set of waveforms whose distortion relative to the previous
pulse stays below the tolerance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Mapping, Optional, Sequence

import numpy as np

from .spectrum import Catalog, CostWeights, Waveform, bits_key, bits_to_str

CONTEXT_DIM = 3
RIDGE = 1e-6


@dataclass
class PairStats:
    """Running cost statistics for one (waveform, sensed vector) pair."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    last: float = 0.0

    def push(self, c: float) -> None:
        self.n += 1
        delta = c - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (c - self.mean)
        self.last = c

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


@dataclass(frozen=True)
class EpisodeRecord:
    t: int
    s_hat: tuple
    s_true: tuple
    waveform_id: int
    cost: float
    distortion: float = 0.0


class ObservationHistory:
    """Append-only episode log plus per-pair running statistics.

    Pairs are keyed on the *sensed* interference vector, because that is what
    the learner can condition on when it builds contexts.
    """

    def __init__(self):
        self.log: list[EpisodeRecord] = []
        self._stats: dict[tuple[int, int], PairStats] = {}

    def record(self, t, s_hat, s_true, waveform_id, cost, distortion=0.0) -> None:
        s_hat = tuple(bool(b) for b in s_hat)
        s_true = tuple(bool(b) for b in s_true)
        self.log.append(
            EpisodeRecord(t, s_hat, s_true, int(waveform_id), float(cost), float(distortion))
        )
        key = (int(waveform_id), bits_key(s_hat))
        self._stats.setdefault(key, PairStats()).push(float(cost))

    def stats(self, waveform_id: int, s_hat) -> PairStats:
        return self._stats.get((int(waveform_id), bits_key(s_hat)), PairStats())

    def count(self, waveform_id: int, s_hat) -> int:
        return self.stats(waveform_id, s_hat).n

    def __len__(self) -> int:
        return len(self.log)


def build_context(waveform_id: int, s_hat, hist: ObservationHistory) -> np.ndarray:
    """Context ``(mean, sample variance, last cost)``; zeros for unseen pairs."""
    st = hist.stats(waveform_id, s_hat)
    if st.n == 0:
        return np.zeros(CONTEXT_DIM)
    return np.array([st.mean, st.variance, st.last])


def context_matrix(ids: Sequence[int], s_hat, hist: ObservationHistory) -> np.ndarray:
    """Stack contexts of ``ids`` into a ``len(ids) x 3`` matrix."""
    key = bits_key(s_hat)
    X = np.zeros((len(ids), CONTEXT_DIM))
    stats = hist._stats
    for row, i in enumerate(ids):
        st = stats.get((int(i), key))
        if st is not None:
            X[row] = (st.mean, st.variance, st.last)
    return X


def constrain_actions(
    catalog: Catalog, w_prev: Optional[Waveform], weights: CostWeights
) -> np.ndarray:
    """Ids of catalog waveforms whose distortion w.r.t. ``w_prev`` is below ``dhat``."""
    if w_prev is None:
        return np.arange(len(catalog))
    d = (
        weights.gamma1 * (catalog.fc - w_prev.fc) ** 2
        + weights.gamma2 * (catalog.bw - w_prev.bw) ** 2
    )
    return np.flatnonzero(d < weights.dhat)


def argmin_action(ids: Sequence[int], X: np.ndarray, theta: np.ndarray) -> int:
    """Waveform minimising ``<x, theta>``; ties go to the lowest id."""
    ids = np.asarray(ids)
    scores = X @ theta
    best = scores.min()
    return int(ids[scores == best].min())


# -- Thompson sampling -------------------------------------------------------


@dataclass
class TsState:
    """Gaussian posterior ``N(theta_hat, B^-1)`` over the cost parameter."""

    B: np.ndarray
    f: np.ndarray
    theta_hat: np.ndarray

    @classmethod
    def initial(cls, d: int = CONTEXT_DIM) -> "TsState":
        return cls(np.eye(d), np.zeros(d), np.zeros(d))

    def copy(self) -> "TsState":
        return TsState(self.B.copy(), self.f.copy(), self.theta_hat.copy())


def sample_theta(state: TsState, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Draw ``theta ~ N(theta_hat, scale * B^-1)``."""
    # B >= I, so the Cholesky factor always exists
    L = np.linalg.cholesky(state.B)
    z = rng.standard_normal(state.theta_hat.size)
    return state.theta_hat + np.sqrt(scale) * np.linalg.solve(L.T, z)


def ts_select(
    contexts: Mapping[int, np.ndarray],
    state: TsState,
    rng: np.random.Generator,
    scale: float = 1.0,
) -> int:
    if not contexts:
        raise ValueError("empty action set")
    ids = sorted(contexts)
    X = np.array([contexts[i] for i in ids])
    return argmin_action(ids, X, sample_theta(state, rng, scale))


def ts_update(state: TsState, x, c: float) -> TsState:
    x = np.asarray(x, dtype=float)
    B = state.B + np.outer(x, x)
    f = state.f + x * c
    return TsState(B, f, np.linalg.solve(B, f))


# -- EXP3 --------------------------------------------------------------------


def exp3_distribution(cum_cost, epsilon: float, gamma: float, pi=None) -> np.ndarray:
    """Exponential weights over cumulative estimated costs mixed with ``pi``."""
    cum = np.asarray(cum_cost, dtype=float)
    if pi is None:
        pi = np.full(cum.size, 1.0 / cum.size)
    logits = -epsilon * cum
    w = np.exp(logits - logits.max())
    return gamma * np.asarray(pi) + (1 - gamma) * w / w.sum()


def exp3_estimate(
    X: np.ndarray, P: np.ndarray, chosen: int, c: float, ridge: float = RIDGE
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares cost estimate from a single bandit observation.

    ``chosen`` is a row index into ``X``.  Returns ``(theta_t, chat)`` with
    ``chat[k] = <X[k], theta_t>``.
    """
    Q = (X * P[:, None]).T @ X
    theta = np.linalg.solve(Q + ridge * np.eye(X.shape[1]), X[chosen] * c)
    return theta, X @ theta


@dataclass
class Exp3State:
    cum_cost_est: np.ndarray
    epsilon: float = 0.1
    gamma: float = 0.05

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")


# -- policies ----------------------------------------------------------------


class ThompsonSampling:
    """Linear contextual Thompson sampling over an admissible action set."""

    name = "ts"

    def __init__(self, d: int = CONTEXT_DIM, scale: float = 1.0):
        self.state = TsState.initial(d)
        self.scale = scale

    def select(self, ids, X, rng) -> int:
        return argmin_action(ids, X, sample_theta(self.state, rng, self.scale))

    def update(self, ids, X, chosen_id: int, c: float) -> None:
        row = int(np.flatnonzero(np.asarray(ids) == chosen_id)[0])
        self.state = ts_update(self.state, X[row], c)


class Exp3:
    """Linear contextual EXP3 with exploration uniform over the admissible set.

    Cumulative estimates of waveforms outside the admissible set are left
    untouched for that PRI.
    """

    name = "exp3"

    def __init__(self, n_actions: int, epsilon: float = 0.1, gamma: float = 0.05):
        self.state = Exp3State(np.zeros(n_actions), epsilon, gamma)
        self._P: Optional[np.ndarray] = None

    def distribution(self, ids) -> np.ndarray:
        st = self.state
        return exp3_distribution(st.cum_cost_est[np.asarray(ids)], st.epsilon, st.gamma)

    def select(self, ids, X, rng) -> int:
        self._P = self.distribution(ids)
        return int(np.asarray(ids)[rng.choice(len(ids), p=self._P)])

    def update(self, ids, X, chosen_id: int, c: float) -> None:
        ids = np.asarray(ids)
        P = self._P if self._P is not None and self._P.size == ids.size else self.distribution(ids)
        row = int(np.flatnonzero(ids == chosen_id)[0])
        _, chat = exp3_estimate(X, P, row, c)
        self.state.cum_cost_est[ids] += chat
        self._P = None


class FixedWaveform:
    """Baseline that always transmits the same waveform."""

    name = "fixed-fullband"

    def __init__(self, waveform_id: int):
        self.waveform_id = int(waveform_id)

    def select(self, ids, X, rng) -> int:
        return self.waveform_id

    def update(self, ids, X, chosen_id, c) -> None:
        pass


# -- regret ------------------------------------------------------------------


@dataclass
class RegretLedger:
    """Strong regret against the per-PRI hindsight optimum of the full catalog."""

    realized: list = field(default_factory=list)
    optimal: list = field(default_factory=list)
    optimal_constrained: list = field(default_factory=list)
    cumulative: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.cumulative[-1] if self.cumulative else 0.0

    def step(self, realized_cost: float, all_costs, admissible=None) -> float:
        """Append one PRI and return its regret increment."""
        all_costs = np.asarray(all_costs, dtype=float)
        best = float(all_costs.min())
        inc = float(realized_cost) - best
        self.realized.append(float(realized_cost))
        self.optimal.append(best)
        if admissible is not None:
            self.optimal_constrained.append(float(all_costs[np.asarray(admissible)].min()))
        else:
            self.optimal_constrained.append(best)
        self.cumulative.append(self.total + inc)
        return inc


def regret_step(ledger: RegretLedger, realized_cost: float, all_costs) -> RegretLedger:
    if isinstance(all_costs, Mapping):
        all_costs = list(all_costs.values())
    ledger.step(realized_cost, all_costs)
    return ledger


EPISODE_HEADER = ["t", "s_hat_bits", "s_true_bits", "waveform_id", "cost", "distortion", "regret_cum"]


def write_episode_csv(fh: IO[str], hist: ObservationHistory, ledger: RegretLedger) -> None:
    if len(ledger.cumulative) != len(hist.log):
        raise ValueError("history and regret ledger lengths differ")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(EPISODE_HEADER)
    for rec, reg in zip(hist.log, ledger.cumulative):
        writer.writerow(
            [
                rec.t,
                bits_to_str(rec.s_hat),
                bits_to_str(rec.s_true),
                rec.waveform_id,
                repr(rec.cost),
                repr(rec.distortion),
                repr(reg),
            ]
        )


def read_episode_csv(fh: IO[str]) -> list[dict]:
    rows = []
    for row in csv.DictReader(fh):
        rows.append(
            {
                "t": int(row["t"]),
                "s_hat_bits": row["s_hat_bits"],
                "s_true_bits": row["s_true_bits"],
                "waveform_id": int(row["waveform_id"]),
                "cost": float(row["cost"]),
                "distortion": float(row["distortion"]),
                "regret_cum": float(row["regret_cum"]),
            }
        )
    return rows
