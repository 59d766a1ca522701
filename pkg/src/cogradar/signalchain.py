"""Pulse-agile CPI synthesis, pulse-Doppler processing and CA-CFAR scoring.

Everything is complex baseband sampled at ``fs`` over the shared channel.
Fast time is indexed in samples from the start of each PRI, so range bin
``n`` corresponds to a round-trip delay of ``n / fs``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import IO, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .spectrum import ChannelGrid, Waveform

C = 299_792_458.0


class AliasingError(ValueError):
    pass


@dataclass(frozen=True)
class CpiConfig:
    n_pulses: int = 400
    pri: float = 1.024e-4
    fs: float = 100e6
    fc_rf: float = 3e9
    noise_power_dbm: float = -90.0
    n_fast: int = 10240
    n_range: int = 512

    def __post_init__(self):
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        if self.n_range < 1 or self.n_fast < 1:
            raise ValueError("n_range and n_fast must be >= 1")

    @property
    def noise_mw(self) -> float:
        return 10 ** (self.noise_power_dbm / 10)

    @property
    def range_bin_m(self) -> float:
        return C / (2 * self.fs)

    @property
    def doppler_bin_hz(self) -> float:
        return 1.0 / (self.n_pulses * self.pri)

    @property
    def wavelength(self) -> float:
        return C / self.fc_rf


@dataclass(frozen=True)
class Target:
    """Point target.

    ``snr_db`` is the single-pulse SNR after pulse compression.  ``phase`` is
    the echo phase in radians at the first pulse.
    """

    range_m: float
    velocity: float
    snr_db: float = 15.0
    phase: float = 0.0

    def delay_samples(self, cfg: CpiConfig) -> float:
        return 2 * self.range_m / C * cfg.fs

    def doppler_hz(self, cfg: CpiConfig) -> float:
        return 2 * self.velocity * cfg.fc_rf / C

    def cell(self, cfg: CpiConfig) -> tuple[int, int]:
        """Nearest (range bin, Doppler bin) of the target in a centred map."""
        r = int(round(self.delay_samples(cfg)))
        d = int(round(self.doppler_hz(cfg) / cfg.doppler_bin_hz)) + cfg.n_pulses // 2
        return r, d % cfg.n_pulses

    def check(self, cfg: CpiConfig) -> None:
        if not 0 <= self.range_m < C * cfg.pri / 2:
            raise ValueError("target range outside the unambiguous range")
        if abs(self.doppler_hz(cfg)) >= 1 / (2 * cfg.pri):
            raise ValueError("target velocity outside the unambiguous Doppler")


def pulse_length(T: float, fs: float) -> int:
    return int(round(T * fs))


def synth_pulse(w: Waveform, fs: float, T: Optional[float] = None) -> np.ndarray:
    """Samples of ``A exp(j2pi(fc t + slope/2 t^2))`` for ``t`` in ``[-T/2, T/2)``."""
    T = w.T if T is None else T
    if abs(w.fc) + w.bw / 2 > fs / 2 * (1 + 1e-12):
        raise AliasingError(f"waveform {w.id} band exceeds fs={fs:g}")
    n = pulse_length(T, fs)
    t = (np.arange(n) - n / 2) / fs
    alpha = w.bw / T
    return w.A * np.exp(2j * np.pi * (w.fc * t + 0.5 * alpha * t**2))


@lru_cache(maxsize=512)
def _pulse_spectrum(w: Waveform, fs: float, nfft: int) -> np.ndarray:
    return sfft.fft(synth_pulse(w, fs), nfft)


def _nfft(cfg: CpiConfig, L: int) -> int:
    return sfft.next_fast_len(cfg.n_fast + L, real=False)


def _spectra(waveforms: Sequence[Waveform], cfg: CpiConfig, nfft: int) -> np.ndarray:
    uniq = {}
    rows = []
    for w in waveforms:
        if w not in uniq:
            uniq[w] = len(uniq)
        rows.append(uniq[w])
    table = np.array([_pulse_spectrum(w, cfg.fs, nfft) for w in uniq])
    return table[np.array(rows)]


def target_gain(t: Target, w: Waveform, cfg: CpiConfig) -> float:
    """Echo amplitude giving ``t.snr_db`` after compression against ``w``."""
    energy = w.A**2 * pulse_length(w.T, cfg.fs)
    return float(np.sqrt(10 ** (t.snr_db / 10) * cfg.noise_mw / energy))


def interference_noise(
    power_mw: np.ndarray, grid: ChannelGrid, cfg: CpiConfig, rng: np.random.Generator
) -> np.ndarray:
    """Band-limited complex Gaussian noise per pulse.

    ``power_mw`` has shape ``(M, S)``; row ``m`` gives the power inside each
    sub-channel during pulse ``m``.  Returns ``(M, n_fast)`` samples.
    """
    M, N = power_mw.shape[0], cfg.n_fast
    freqs = sfft.fftfreq(N, 1 / cfg.fs)
    sub = np.floor((freqs + grid.B / 2) / grid.width).astype(int)
    inside = (sub >= 0) & (sub < grid.S)
    sub = np.clip(sub, 0, grid.S - 1)
    n_bins = np.bincount(sub[inside], minlength=grid.S).astype(float)
    n_bins[n_bins == 0] = 1
    # per-bin spectral variance so that each sub-channel carries its power
    var = power_mw[:, sub] * N**2 / n_bins[sub]
    var[:, ~inside] = 0.0
    spec = np.sqrt(var / 2) * (
        rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
    )
    return sfft.ifft(spec, axis=1)


def simulate_cpi(
    waveforms: Sequence[Waveform],
    targets: Sequence[Target],
    cfg: CpiConfig,
    rng: np.random.Generator,
    interference_mw: Optional[np.ndarray] = None,
    grid: Optional[ChannelGrid] = None,
    noise: bool = True,
    clutter: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Raw fast-time data, one row per pulse, shape ``(M, n_fast)``.

    Target echoes are delayed by a (possibly fractional) number of samples and
    rotated by the round-trip Doppler phase ``2pi f_d m PRI``.
    """
    M = cfg.n_pulses
    if len(waveforms) != M:
        raise ValueError(f"need {M} waveforms, got {len(waveforms)}")
    L = max(pulse_length(w.T, cfg.fs) for w in waveforms)
    nfft = _nfft(cfg, L)
    out = np.zeros((M, cfg.n_fast), dtype=complex)

    if targets:
        for t in targets:
            t.check(cfg)
        f = sfft.fftfreq(nfft, 1 / cfg.fs)
        m = np.arange(M)
        # rows: pulses, cols: targets; gains depend on the pulse energy
        gains = np.array([[target_gain(t, w, cfg) for t in targets] for w in waveforms])
        dop = np.exp(
            1j
            * (
                2 * np.pi * np.outer(m * cfg.pri, [t.doppler_hz(cfg) for t in targets])
                + np.array([t.phase for t in targets])
            )
        )
        delays = np.array([t.delay_samples(cfg) / cfg.fs for t in targets])
        shift = np.exp(-2j * np.pi * np.outer(delays, f))
        spec = _spectra(waveforms, cfg, nfft) * ((gains * dop) @ shift)
        out += sfft.ifft(spec, axis=1)[:, : cfg.n_fast]

    if interference_mw is not None and np.any(interference_mw > 0):
        if grid is None:
            raise ValueError("grid is required to synthesise interference")
        out += interference_noise(np.asarray(interference_mw, float), grid, cfg, rng)

    if clutter is not None:
        out += clutter

    if noise:
        sigma = np.sqrt(cfg.noise_mw / 2)
        out += sigma * (
            rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape)
        )
    return out


def matched_filter(raw: np.ndarray, waveforms: Sequence[Waveform], cfg: CpiConfig) -> np.ndarray:
    """Correlate each pulse's return with that same pulse; keep ``n_range`` lags."""
    M, N = raw.shape
    L = max(pulse_length(w.T, cfg.fs) for w in waveforms)
    n_range = min(cfg.n_range, N)
    nfft = sfft.next_fast_len(N + L, real=False)
    Y = sfft.fft(raw, nfft, axis=1)
    Y *= np.conj(_spectra(waveforms, cfg, nfft))
    return sfft.ifft(Y, axis=1)[:, :n_range]


@dataclass
class RangeDopplerMap:
    """Doppler-centred map, rows are Doppler bins and columns range bins."""

    data: np.ndarray
    range_bin_m: float
    doppler_bin_hz: float
    power: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.power = np.abs(self.data) ** 2

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def doppler_axis_hz(self) -> np.ndarray:
        M = self.data.shape[0]
        return (np.arange(M) - M // 2) * self.doppler_bin_hz

    @property
    def range_axis_m(self) -> np.ndarray:
        return np.arange(self.data.shape[1]) * self.range_bin_m


def range_doppler(profiles: np.ndarray, cfg: Optional[CpiConfig] = None) -> RangeDopplerMap:
    """Unitary slow-time FFT per range bin, zero Doppler in the middle row."""
    data = sfft.fftshift(sfft.fft(profiles, axis=0, norm="ortho"), axes=0)
    if cfg is None:
        return RangeDopplerMap(data, np.nan, np.nan)
    return RangeDopplerMap(data, cfg.range_bin_m, cfg.doppler_bin_hz)


def process_cpi(raw: np.ndarray, waveforms: Sequence[Waveform], cfg: CpiConfig) -> RangeDopplerMap:
    return range_doppler(matched_filter(raw, waveforms, cfg), cfg)


# -- CFAR --------------------------------------------------------------------


def _box_sum(a: np.ndarray, half: tuple[int, int]) -> np.ndarray:
    """Sum over a clipped ``(2h0+1) x (2h1+1)`` window centred on each cell."""
    out = a
    for axis, h in enumerate(half):
        n = out.shape[axis]
        c = np.cumsum(out, axis=axis)
        pad = [(0, 0)] * out.ndim
        pad[axis] = (1, 0)
        c = np.pad(c, pad)
        idx = np.arange(n)
        hi = np.minimum(idx + h + 1, n)
        lo = np.maximum(idx - h, 0)
        out = np.take(c, hi, axis=axis) - np.take(c, lo, axis=axis)
    return out


def cfar_statistic(
    power: np.ndarray, guard: tuple[int, int] = (2, 2), train: tuple[int, int] = (8, 8)
) -> tuple[np.ndarray, np.ndarray]:
    """Training-ring mean and training-cell count for every cell.

    ``guard`` and ``train`` are half-widths per dimension ``(Doppler, range)``.
    The ring is the outer window minus the guard window, clipped at the edges.
    """
    guard = tuple(int(g) for g in guard)
    train = tuple(int(t) for t in train)
    if any(g < 0 for g in guard) or any(t < 1 for t in train):
        raise ValueError("guard must be >= 0 and train >= 1")
    outer = (guard[0] + train[0], guard[1] + train[1])
    ones = np.ones_like(power)
    total = _box_sum(power, outer) - _box_sum(power, guard)
    count = _box_sum(ones, outer) - _box_sum(ones, guard)
    count = np.rint(count)
    if np.any(count < 1):
        raise ValueError("training window is empty")
    return total / count, count


def cfar_factor(pfa: float, n_train) -> np.ndarray:
    """Cell-averaging threshold multiplier for exponential cell powers."""
    if not 0 < pfa < 1:
        raise ValueError("pfa must lie in (0, 1)")
    n = np.asarray(n_train, dtype=float)
    return n * (pfa ** (-1.0 / n) - 1.0)


@dataclass
class DetectionReport:
    mask: np.ndarray
    pfa: float
    detections: list
    n_true: Optional[int] = None
    n_false: Optional[int] = None


def cfar_2d(
    rd,
    pfa: float,
    guard: tuple[int, int] = (2, 2),
    train: tuple[int, int] = (8, 8),
) -> DetectionReport:
    """2-D cell-averaging CFAR on a range-Doppler power map."""
    power = rd.power if isinstance(rd, RangeDopplerMap) else np.asarray(rd, float)
    est, count = cfar_statistic(power, guard, train)
    mask = power > cfar_factor(pfa, count) * est
    return _report(mask, pfa)


def _report(mask: np.ndarray, pfa: float) -> DetectionReport:
    d, r = np.nonzero(mask)
    return DetectionReport(mask, pfa, list(zip(r.tolist(), d.tolist())))


def cfar_sweep(
    rd, pfas: Sequence[float], guard=(2, 2), train=(8, 8)
) -> list[DetectionReport]:
    """CFAR at several false-alarm rates sharing one background estimate."""
    power = rd.power if isinstance(rd, RangeDopplerMap) else np.asarray(rd, float)
    est, count = cfar_statistic(power, guard, train)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = power / est
    ratio[~np.isfinite(ratio)] = 0.0
    return [_report(ratio > cfar_factor(p, count), p) for p in pfas]


@dataclass(frozen=True)
class Score:
    pfa_desired: float
    pd: float
    n_detected: int
    n_targets: int
    n_false: int
    pfa_empirical: float


def score_detections(
    report: DetectionReport,
    targets: Sequence[Target],
    cfg: CpiConfig,
    tolerance: tuple[int, int] = (1, 2),
    cluster: bool = True,
) -> Score:
    """Split flagged cells into target hits and false alarms.

    ``tolerance`` is ``(range bins, Doppler bins)`` around each target cell;
    Doppler distance wraps around.  A target counts as detected when any
    flagged cell falls in its window.  With ``cluster`` (the default) flagged
    cells are grouped into 8-connected blobs and every blob that touches no
    target window is one false alarm; otherwise each such cell is one.
    """
    mask = report.mask
    M, N = mask.shape
    tr, td = tolerance
    if tr < 0 or td < 0:
        raise ValueError("tolerance must be nonnegative")
    near = np.zeros_like(mask)
    detected = 0
    for t in targets:
        r0, d0 = t.cell(cfg)
        rs = np.arange(max(0, r0 - tr), min(N, r0 + tr + 1))
        ds = np.arange(d0 - td, d0 + td + 1) % M
        if rs.size == 0:
            continue
        win = np.ix_(ds, rs)
        if mask[win].any():
            detected += 1
        near[win] = True
    report.n_true = int(np.count_nonzero(mask & near))
    if cluster:
        labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
        hit = np.unique(labels[mask & near])
        n_false = int(n - np.count_nonzero(hit))
    else:
        n_false = int(np.count_nonzero(mask & ~near))
    n_t = len(targets)
    report.n_false = n_false
    return Score(
        report.pfa,
        detected / n_t if n_t else 0.0,
        detected,
        n_t,
        n_false,
        n_false / mask.size,
    )


def roc_curve(scores: Sequence[Score], pfas: Optional[Sequence[float]] = None) -> list[tuple]:
    """Average P_d and empirical P_fa per desired P_fa, ascending."""
    if not scores:
        raise ValueError("need at least one score")
    groups: dict[float, list[Score]] = {}
    for s in scores:
        groups.setdefault(s.pfa_desired, []).append(s)
    keys = sorted(groups) if pfas is None else sorted(pfas)
    return [
        (
            p,
            float(np.mean([s.pd for s in groups[p]])),
            float(np.mean([s.pfa_empirical for s in groups[p]])),
        )
        for p in keys
    ]


def off_target_doppler_energy(
    rd: RangeDopplerMap, targets: Sequence[Target], cfg: CpiConfig, guard: int = 2
) -> float:
    """Energy in the targets' range bins away from their Doppler bins."""
    P = rd.power
    M = P.shape[0]
    total = 0.0
    for t in targets:
        r, d = t.cell(cfg)
        col = P[:, r].copy()
        col[np.arange(d - guard, d + guard + 1) % M] = 0.0
        total += col.sum()
    return float(total)


# -- file formats ------------------------------------------------------------


ROC_HEADER = ["pfa_desired", "pd_mean", "pfa_empirical", "algo", "scenario", "constrained"]


def write_roc_csv(fh: IO[str], rows: Sequence[tuple], algo: str, scenario: str, constrained: bool) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ROC_HEADER)
    for pfa, pd, pfa_emp in rows:
        writer.writerow([repr(pfa), repr(pd), repr(pfa_emp), algo, scenario, str(bool(constrained)).lower()])


def write_rd_dump(prefix, rd: RangeDopplerMap, scenario_id: str = "") -> tuple[Path, Path]:
    """Write ``<prefix>.bin`` (little-endian float32 magnitudes) and ``<prefix>.hdr``."""
    prefix = Path(prefix)
    bin_path = prefix.with_suffix(".bin")
    hdr_path = prefix.with_suffix(".hdr")
    mag = np.abs(rd.data).astype("<f4")
    bin_path.write_bytes(np.ascontiguousarray(mag).tobytes())
    rows, cols = mag.shape
    hdr_path.write_text(
        "\n".join(
            [
                f"rows: {rows}",
                f"cols: {cols}",
                "row_axis: doppler",
                "col_axis: range",
                "dtype: float32-le",
                "order: row-major",
                f"range_bin_m: {rd.range_bin_m!r}",
                f"doppler_bin_hz: {rd.doppler_bin_hz!r}",
                f"doppler_zero_row: {rows // 2}",
                f"scenario: {scenario_id}",
            ]
        )
        + "\n"
    )
    return bin_path, hdr_path


def read_rd_dump(prefix) -> tuple[np.ndarray, dict]:
    prefix = Path(prefix)
    header = {}
    for line in prefix.with_suffix(".hdr").read_text().splitlines():
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()
    rows, cols = int(header["rows"]), int(header["cols"])
    mag = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f4").reshape(rows, cols)
    return mag, header
