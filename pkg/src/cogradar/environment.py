"""Interference environments seen by the radar.

Each environment exposes the same two-step protocol per PRI::

    s_hat = env.sense()                     # start of PRI, before transmission
    s_true = env.advance(w_t, w_prev, rng)  # interference present during the pulse

``env.power_mw`` then holds the per-sub-channel interference power (mW) that
was present during that pulse, which the signal chain turns into band-limited
noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .spectrum import Catalog, ChannelGrid, Waveform


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(mw, dtype=float))


# -- radar / communications coexistence --------------------------------------


@dataclass(frozen=True)
class CoexistenceParams:
    n_bs: int = 5
    tx_power_dbm: tuple[float, float] = (40.0, 46.5)
    distance_m: tuple[float, float] = (5000.0, 6000.0)
    path_loss_exp: float = 3.5
    rx_gain_db: float = 0.0
    shadow_mean: float = 0.0
    shadow_sigma: float = 2.0  # natural-log units, enters as exp(X)
    shadow_corr: float = 0.0  # share of shadowing variance common to all BSs
    coherence: int = 7  # PRIs per interference block
    bs_bandwidth: float = 20e6

    def __post_init__(self):
        if self.n_bs < 1 or self.coherence < 1:
            raise ValueError("n_bs and coherence must be >= 1")
        if not 0 <= self.shadow_corr <= 1:
            raise ValueError("shadow_corr must lie in [0, 1]")


@dataclass
class CoexistenceState:
    """Cellular base stations sharing the channel with the radar.

    ``band_start[j]`` is the first sub-channel of BS ``j``'s cellular band for
    the current block.  ``counter`` counts the PRIs left in the block.
    """

    params: CoexistenceParams
    grid: ChannelGrid
    tx_power_dbm: np.ndarray
    distance_m: np.ndarray
    active: np.ndarray
    band_start: np.ndarray
    shadowing: np.ndarray
    counter: int
    power_mw: np.ndarray = field(default=None)
    bits: np.ndarray = field(default=None)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def n_sub(self) -> int:
        return bs_subchannels(self.params, self.grid)

    def received_dbm(self) -> np.ndarray:
        """Received power from every BS (active or not), dBm."""
        p = self.params
        return (
            self.tx_power_dbm
            + p.rx_gain_db
            - 10 * p.path_loss_exp * np.log10(self.distance_m)
            + 10 * np.log10(np.e) * self.shadowing
        )

    def copy(self) -> "CoexistenceState":
        return replace(
            self,
            active=self.active.copy(),
            band_start=self.band_start.copy(),
            shadowing=self.shadowing.copy(),
            power_mw=None if self.power_mw is None else self.power_mw.copy(),
            bits=None if self.bits is None else self.bits.copy(),
        )


def bs_subchannels(params: CoexistenceParams, grid: ChannelGrid) -> int:
    return max(1, min(grid.S, int(np.ceil(params.bs_bandwidth / grid.width - 1e-9))))


def subchannel_power(state: CoexistenceState) -> np.ndarray:
    """Aggregate interference per sub-channel, mW.

    Every active BS contributes its full received power to each sub-channel
    its cellular band overlaps.
    """
    S = state.grid.S
    rx = dbm_to_mw(state.received_dbm())
    power = np.zeros(S)
    for j in np.flatnonzero(state.active):
        lo = int(state.band_start[j])
        power[lo : lo + state.n_sub] += rx[j]
    return power


def _draw_block(state: CoexistenceState, rng: np.random.Generator) -> None:
    p = state.params
    n_act = int(rng.integers(1, p.n_bs + 1))
    active = np.zeros(p.n_bs, dtype=bool)
    active[rng.choice(p.n_bs, size=n_act, replace=False)] = True
    state.active = active
    state.band_start = rng.integers(0, state.grid.S - state.n_sub + 1, size=p.n_bs)
    common = rng.standard_normal()
    own = rng.standard_normal(p.n_bs)
    z = np.sqrt(p.shadow_corr) * common + np.sqrt(1 - p.shadow_corr) * own
    state.shadowing = p.shadow_mean + p.shadow_sigma * z
    _refresh(state)


def _refresh(state: CoexistenceState) -> None:
    state.power_mw = subchannel_power(state)
    state.bits = state.power_mw > dbm_to_mw(state.grid.H)


def init_coexistence(
    grid: ChannelGrid, params: CoexistenceParams, rng: np.random.Generator
) -> CoexistenceState:
    lo, hi = params.tx_power_dbm
    dlo, dhi = params.distance_m
    state = CoexistenceState(
        params=params,
        grid=grid,
        tx_power_dbm=rng.uniform(lo, hi, params.n_bs),
        distance_m=rng.uniform(dlo, dhi, params.n_bs),
        active=np.zeros(params.n_bs, dtype=bool),
        band_start=np.zeros(params.n_bs, dtype=int),
        shadowing=np.zeros(params.n_bs),
        counter=params.coherence,
    )
    _draw_block(state, rng)
    return state


def coexistence_step(
    state: CoexistenceState, rng: np.random.Generator
) -> tuple[CoexistenceState, np.ndarray]:
    """Advance one PRI; a new block is drawn when the coherence counter runs out."""
    new = state.copy()
    new.counter -= 1
    if new.counter <= 0:
        _draw_block(new, rng)
        new.counter = new.params.coherence
    return new, new.bits.copy()


# -- adaptive jammer ---------------------------------------------------------


@dataclass(frozen=True)
class JammerState:
    band: tuple  # occupied sub-channels, one bool per sub-channel
    jnr_db: float = 20.0
    last_id: Optional[int] = None


def jammer_step(
    state: JammerState, w_t: Waveform, w_prev: Optional[Waveform], grid: ChannelGrid
) -> tuple[JammerState, np.ndarray]:
    """Jammer reaction for the next PRI.

    A repeated waveform is jammed next PRI across its whole band; otherwise the
    jammer stays where it was.
    """
    if w_prev is not None and w_t.id == w_prev.id:
        band = tuple(bool(b) for b in grid.occupancy(w_t.fc, w_t.bw))
    else:
        band = state.band
    new = JammerState(band, state.jnr_db, w_t.id)
    return new, np.array(band, dtype=bool)


def jammer_transition_table(catalog: Catalog, band) -> np.ndarray:
    """Next jam band for every ``(w_t, w_prev)`` catalog pair, shape ``W x W x S``."""
    grid = catalog.grid
    W = len(catalog)
    out = np.empty((W, W, grid.S), dtype=bool)
    state = JammerState(tuple(bool(b) for b in band))
    for i in range(W):
        for j in range(W):
            out[i, j] = jammer_step(state, catalog[i], catalog[j], grid)[1]
    return out


# -- environment objects used by the experiment loop -------------------------


class CoexistenceEnvironment:
    name = "coexistence"

    def __init__(self, grid: ChannelGrid, params: CoexistenceParams, rng: np.random.Generator):
        self.grid = grid
        self.state = init_coexistence(grid, params, rng)
        self.power_mw = self.state.power_mw.copy()

    def sense(self) -> np.ndarray:
        return self.state.bits.copy()

    def advance(self, w_t, w_prev, rng) -> np.ndarray:
        self.state, s = coexistence_step(self.state, rng)
        self.power_mw = self.state.power_mw.copy()
        return s


class JammerEnvironment:
    """Adaptive jammer at a fixed jammer-to-noise ratio.

    ``noise_subchannel_mw`` is the receiver noise power inside one sub-channel;
    a jammed sub-channel carries ``JNR`` times that.
    """

    name = "jammer"

    def __init__(self, grid: ChannelGrid, noise_subchannel_mw: float, jnr_db: float = 20.0):
        self.grid = grid
        self.state = JammerState(tuple([False] * grid.S), jnr_db)
        self.noise_subchannel_mw = noise_subchannel_mw
        self.power_mw = np.zeros(grid.S)

    def sense(self) -> np.ndarray:
        return np.array(self.state.band, dtype=bool)

    def advance(self, w_t, w_prev, rng=None) -> np.ndarray:
        s = np.array(self.state.band, dtype=bool)
        jam = self.noise_subchannel_mw * 10 ** (self.state.jnr_db / 10)
        self.power_mw = np.where(s, jam, 0.0)
        self.state, _ = jammer_step(self.state, w_t, w_prev, self.grid)
        return s


class StaticEnvironment:
    """Fixed interference vector; sensing is always exact."""

    name = "static"

    def __init__(self, bits, power_mw=None):
        self.bits = np.asarray(bits, dtype=bool)
        self.power_mw = np.zeros(self.bits.size) if power_mw is None else np.asarray(power_mw)

    def sense(self) -> np.ndarray:
        return self.bits.copy()

    def advance(self, w_t, w_prev, rng=None) -> np.ndarray:
        return self.bits.copy()
