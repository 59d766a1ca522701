"""Waveform catalog, shared-channel grid and the waveform cost model.

Frequencies are complex-baseband offsets in Hz, so the shared channel spans
``[-B/2, +B/2]``.  Interference vectors are length-``S`` arrays of 0/1 with
element 0 being the lowest sub-channel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import cached_property
from typing import IO, Iterator, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

MHZ = 1e6


@dataclass(frozen=True)
class Waveform:
    """One LFM chirp of the catalog.

    Parameters
    ----------
    id : int
        Index into the catalog.
    fc : float
        Baseband center frequency, Hz.
    bw : float
        Swept bandwidth, Hz.
    T : float
        Pulse duration, s.
    A : float
        Linear amplitude.
    """

    id: int
    fc: float
    bw: float
    T: float = 10.24e-6
    A: float = 1.0

    def __post_init__(self):
        if self.bw <= 0 or self.T <= 0 or self.A <= 0:
            raise ValueError(f"waveform {self.id}: bw, T and A must be positive")

    @property
    def slope(self) -> float:
        """Chirp rate in Hz/s."""
        return self.bw / self.T

    @property
    def band(self) -> tuple[float, float]:
        return (self.fc - self.bw / 2, self.fc + self.bw / 2)


@dataclass(frozen=True)
class ChannelGrid:
    """Shared channel of bandwidth ``B`` split into ``S`` equal sub-channels."""

    B: float = 100 * MHZ
    S: int = 10
    H: float = -90.0  # harmful-interference threshold, dBm

    def __post_init__(self):
        if self.S < 1:
            raise ValueError("S must be >= 1")
        if self.B <= 0:
            raise ValueError("B must be positive")

    @property
    def width(self) -> float:
        return self.B / self.S

    @property
    def edges(self) -> np.ndarray:
        return -self.B / 2 + self.width * np.arange(self.S + 1)

    def occupancy(self, fc: float, bw: float) -> np.ndarray:
        """Boolean mask of sub-channels overlapped with nonzero measure by a band."""
        edges = self.edges
        lo, hi = fc - bw / 2, fc + bw / 2
        overlap = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
        return overlap > 1e-9 * self.B

    def contains(self, fc: float, bw: float) -> bool:
        tol = 1e-9 * self.B
        return fc - bw / 2 >= -self.B / 2 - tol and fc + bw / 2 <= self.B / 2 + tol


class Catalog(Sequence[Waveform]):
    """Immutable waveform catalog with vectorised views used by the cost model."""

    def __init__(self, waveforms: Sequence[Waveform], grid: ChannelGrid):
        self._waveforms = tuple(waveforms)
        if not self._waveforms:
            raise ValueError("catalog must be nonempty")
        for i, w in enumerate(self._waveforms):
            if w.id != i:
                raise ValueError("waveform ids must be 0..W-1 in order")
            if not grid.contains(w.fc, w.bw):
                raise ValueError(f"waveform {i} does not fit the shared channel")
        self.grid = grid
        self.fc = np.array([w.fc for w in self._waveforms])
        self.bw = np.array([w.bw for w in self._waveforms])
        self.masks = np.array([grid.occupancy(w.fc, w.bw) for w in self._waveforms])

    def __getitem__(self, i):
        return self._waveforms[i]

    def __len__(self) -> int:
        return len(self._waveforms)

    def __iter__(self) -> Iterator[Waveform]:
        return iter(self._waveforms)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Catalog)
            and self._waveforms == other._waveforms
            and self.grid == other.grid
        )

    def __hash__(self):
        return hash((self._waveforms, self.grid))

    @cached_property
    def fullband_id(self) -> int:
        """Id of the widest waveform (lowest id on ties)."""
        return int(np.argmax(self.bw))

    def find(self, fc: float, bw: float) -> Waveform:
        hit = np.flatnonzero(
            np.isclose(self.fc, fc, atol=1.0) & np.isclose(self.bw, bw, atol=1.0)
        )
        if hit.size == 0:
            raise KeyError(f"no waveform with fc={fc}, bw={bw}")
        return self._waveforms[int(hit[0])]


def build_catalog(
    grid: ChannelGrid = ChannelGrid(),
    bw_min: float = 10 * MHZ,
    bw_max: float = 100 * MHZ,
    step: float = 10 * MHZ,
    T: float = 10.24e-6,
    A: float = 1.0,
    fc_step: Optional[float] = None,
) -> Catalog:
    """Enumerate every gridded LFM chirp that fits inside the shared channel.

    For each bandwidth ``bw_min, bw_min + step, ..., bw_max`` the center
    frequency walks the ``fc_step`` grid (default ``step``) from the lowest to
    the highest position that keeps the band inside ``[-B/2, B/2]``.  Waveforms
    are ordered by bandwidth, then center frequency.
    """
    if step <= 0 or bw_min > bw_max or bw_min <= 0:
        raise ValueError("invalid bandwidth range")
    fc_step = step if fc_step is None else fc_step
    if fc_step <= 0:
        raise ValueError("invalid center-frequency step")
    n_bw = (bw_max - bw_min) / step
    if abs(n_bw - round(n_bw)) > 1e-9 * max(1.0, n_bw):
        raise ValueError("step must divide bw_max - bw_min")
    if bw_max > grid.B * (1 + 1e-12):
        raise ValueError("widest waveform does not fit the shared channel")

    waveforms = []
    for k in range(int(round(n_bw)) + 1):
        bw = bw_min + k * step
        span = (grid.B - bw) / fc_step
        n_fc = int(np.floor(span + 1e-9))
        for j in range(n_fc + 1):
            fc = -grid.B / 2 + bw / 2 + j * fc_step
            waveforms.append(Waveform(len(waveforms), float(fc), float(bw), T, A))
    return Catalog(waveforms, grid)


@dataclass(frozen=True)
class CostWeights:
    """Cost-term weights, distortion normalisers and distortion tolerance."""

    beta1: float = 1 / 3
    beta2: float = 1 / 3
    beta3: float = 1 / 3
    gamma1: float = 0.0
    gamma2: float = 0.0
    dhat: float = 0.2

    def __post_init__(self):
        betas = (self.beta1, self.beta2, self.beta3)
        if any(b < 0 or b > 1 for b in betas) or abs(sum(betas) - 1) > 1e-12:
            raise ValueError("betas must lie in [0, 1] and sum to 1")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("gammas must be nonnegative")
        if self.dhat < 0:
            raise ValueError("dhat must be nonnegative")

    @classmethod
    def for_catalog(
        cls,
        catalog: Catalog,
        betas: Sequence[float] = (1 / 3, 1 / 3, 1 / 3),
        dhat: float = 0.2,
    ) -> "CostWeights":
        """Weights whose distortion term peaks at exactly 1 over the catalog."""
        dfc = np.ptp(catalog.fc)
        dbw = np.ptp(catalog.bw)
        g1 = 1 / (2 * dfc**2) if dfc > 0 else 0.0
        g2 = 1 / (2 * dbw**2) if dbw > 0 else 0.0
        dmax = _pairwise_distortion(catalog, g1, g2).max()
        if dmax > 0:
            g1, g2 = g1 / dmax, g2 / dmax
        b1, b2, b3 = betas
        return cls(b1, b2, b3, float(g1), float(g2), dhat)

    def replace(self, **changes) -> "CostWeights":
        return replace(self, **changes)


def _pairwise_distortion(catalog: Catalog, g1: float, g2: float) -> np.ndarray:
    dfc = catalog.fc[:, None] - catalog.fc[None, :]
    dbw = catalog.bw[:, None] - catalog.bw[None, :]
    return g1 * dfc**2 + g2 * dbw**2


def collision_bw(w: Waveform, s, grid: ChannelGrid) -> float:
    """Fraction of the ``S`` sub-channels occupied by both ``w`` and ``s``."""
    s = np.asarray(s, dtype=bool)
    if s.shape != (grid.S,):
        raise ValueError(f"interference vector must have length {grid.S}")
    return float(np.count_nonzero(grid.occupancy(w.fc, w.bw) & s)) / grid.S


def widest_clean_id(catalog: Catalog, s) -> Optional[int]:
    """Id of the widest waveform with zero collision against ``s``, or None."""
    s = np.asarray(s, dtype=bool)
    clean = ~(catalog.masks & s).any(axis=1)
    if not clean.any():
        return None
    bw = np.where(clean, catalog.bw, -np.inf)
    return int(np.argmax(bw))


def missed_bw(w: Waveform, s, catalog: Catalog) -> float:
    """Bandwidth left unused relative to the widest clean waveform, over ``B``."""
    best = widest_clean_id(catalog, s)
    if best is None:
        return 0.0
    return max(0.0, (catalog.bw[best] - w.bw) / catalog.grid.B)


def distortion(w_t: Waveform, w_prev: Optional[Waveform], weights: CostWeights) -> float:
    if w_prev is None:
        return 0.0
    return float(
        weights.gamma1 * (w_t.fc - w_prev.fc) ** 2
        + weights.gamma2 * (w_t.bw - w_prev.bw) ** 2
    )


def cost(
    w: Waveform,
    s_true,
    w_prev: Optional[Waveform],
    catalog: Catalog,
    weights: CostWeights,
) -> float:
    """Weighted sum of collision, missed bandwidth and distortion.

    ``s_true`` is the interference actually present during the pulse, not the
    sensed estimate.
    """
    return (
        weights.beta1 * collision_bw(w, s_true, catalog.grid)
        + weights.beta2 * missed_bw(w, s_true, catalog)
        + weights.beta3 * distortion(w, w_prev, weights)
    )


@dataclass
class CostTerms:
    """Per-waveform cost components over a whole catalog."""

    collision: np.ndarray
    missed: np.ndarray
    distortion: np.ndarray
    total: np.ndarray


def catalog_costs(
    catalog: Catalog,
    s_true,
    w_prev: Optional[Waveform],
    weights: CostWeights,
) -> CostTerms:
    """Vectorised cost of every catalog waveform against one interference vector."""
    s = np.asarray(s_true, dtype=bool)
    grid = catalog.grid
    coll = (catalog.masks & s).sum(axis=1) / grid.S
    best = widest_clean_id(catalog, s)
    if best is None:
        miss = np.zeros(len(catalog))
    else:
        miss = np.maximum(0.0, (catalog.bw[best] - catalog.bw) / grid.B)
    if w_prev is None:
        dist = np.zeros(len(catalog))
    else:
        dist = (
            weights.gamma1 * (catalog.fc - w_prev.fc) ** 2
            + weights.gamma2 * (catalog.bw - w_prev.bw) ** 2
        )
    total = weights.beta1 * coll + weights.beta2 * miss + weights.beta3 * dist
    return CostTerms(coll, miss, dist, total)


def lipschitz_metric(w_i: Waveform, w_j: Waveform, L1: float, L2: float) -> float:
    if L1 <= 0 or L2 <= 0:
        raise ValueError("Lipschitz constants must be positive")
    return L1 * abs(w_i.fc - w_j.fc) + L2 * abs(w_i.bw - w_j.bw)


def fit_lipschitz_constants(
    catalog: Catalog,
    weights: CostWeights,
    states: Sequence,
    w_prev: Optional[Waveform] = None,
) -> tuple[float, float]:
    """Smallest (L1, L2) bounding every pairwise cost gap over ``states``.

    Solves the linear program ``min L1*max|dfc| + L2*max|dbw|`` subject to
    ``L1*|dfc| + L2*|dbw| >= |dC|`` for all catalog pairs and states.  Both
    constants are kept strictly positive.
    """
    dfc = np.abs(catalog.fc[:, None] - catalog.fc[None, :]) / MHZ
    dbw = np.abs(catalog.bw[:, None] - catalog.bw[None, :]) / MHZ
    iu = np.triu_indices(len(catalog), k=1)
    gap = np.zeros(iu[0].size)
    for s in states:
        c = catalog_costs(catalog, s, w_prev, weights).total
        gap = np.maximum(gap, np.abs(c[:, None] - c[None, :])[iu])
    A_ub = -np.column_stack([dfc[iu], dbw[iu]])
    res = linprog(
        c=[dfc.max() or 1.0, dbw.max() or 1.0],
        A_ub=A_ub,
        b_ub=-gap,
        bounds=[(1e-12, None), (1e-12, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"Lipschitz fit failed: {res.message}")
    # absorb solver tolerance so the fitted bound holds for every pair
    slack = np.max(gap - (-A_ub @ res.x), initial=0.0)
    L = res.x * (1 + 1e-9) + slack
    return float(L[0] / MHZ), float(L[1] / MHZ)


def bits_to_str(s) -> str:
    """Render an interference vector as a 0/1 string, lowest sub-channel first."""
    return "".join("1" if b else "0" for b in np.asarray(s, dtype=bool))


def str_to_bits(text: str) -> np.ndarray:
    if any(ch not in "01" for ch in text):
        raise ValueError(f"not a bit string: {text!r}")
    return np.array([ch == "1" for ch in text], dtype=bool)


def bits_key(s) -> int:
    """Integer code of an interference vector (lowest sub-channel is the MSB)."""
    key = 0
    for b in np.asarray(s, dtype=bool):
        key = (key << 1) | int(b)
    return key


def key_to_bits(key: int, S: int) -> np.ndarray:
    return np.array([(key >> (S - 1 - i)) & 1 for i in range(S)], dtype=bool)


def write_catalog_csv(catalog: Catalog, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["id", "fc_hz", "bw_hz", "duration_s", "amplitude"])
    for w in catalog:
        writer.writerow([w.id, repr(w.fc), repr(w.bw), repr(w.T), repr(w.A)])


def read_catalog_csv(fh: IO[str], grid: ChannelGrid) -> Catalog:
    reader = csv.DictReader(fh)
    waveforms = [
        Waveform(
            int(row["id"]),
            float(row["fc_hz"]),
            float(row["bw_hz"]),
            float(row["duration_s"]),
            float(row["amplitude"]),
        )
        for row in reader
    ]
    return Catalog(waveforms, grid)
