"""Observation generators: planted-rule references and a chunk-level ABR simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

ABR_LADDER = (300, 750, 1200, 1850, 2850, 4300)


@dataclass(frozen=True)
class PlantedRule:
    box: tuple[tuple[float, float], ...]
    allowed: frozenset
    priority: int = 0

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        for lo, hi in box:
            if lo > hi:
                raise ValueError(f"empty rule interval [{lo}, {hi}]")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "allowed", frozenset(int(a) for a in self.allowed))
        if not self.allowed:
            raise ValueError("a rule must allow at least one label")

    def covers(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        ok = np.ones(len(x), dtype=bool)
        for i, (lo, hi) in enumerate(self.box):
            ok &= (x[:, i] >= lo) & (x[:, i] <= hi)
        return ok

    def to_dict(self) -> dict:
        return {"box": [list(b) for b in self.box], "allowed": sorted(self.allowed), "priority": self.priority}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PlantedRule":
        return cls(tuple(tuple(b) for b in data["box"]), frozenset(data["allowed"]), int(data.get("priority", 0)))


def _overlap(a: PlantedRule, b: PlantedRule) -> bool:
    return all(alo < bhi and blo < ahi for (alo, ahi), (blo, bhi) in zip(a.box, b.box))


class PlantedReference:
    """A reference whose label is drawn from the highest-priority covering rule.

    Points covered by no rule fall back to ``default_allowed`` (the full
    alphabet unless given).  With probability ``noise_rate`` the label is
    replaced by a uniform draw from the whole alphabet.  Draws come from a
    generator seeded once, so results depend on the seed and call order.
    """

    def __init__(
        self,
        rules: Sequence[PlantedRule],
        num_labels: int,
        noise_rate: float = 0.0,
        seed: int = 0,
        default_allowed: Optional[Sequence[int]] = None,
    ):
        if not 0 <= noise_rate < 0.5:
            raise ValueError(f"noise_rate must lie in [0, 0.5), got {noise_rate}")
        rules = sorted(rules, key=lambda r: -r.priority)
        for i, a in enumerate(rules):
            for b in rules[i + 1:]:
                if a.priority == b.priority and _overlap(a, b):
                    raise ValueError(f"rules of equal priority {a.priority} overlap: {a.box} and {b.box}")
            if max(a.allowed) >= num_labels:
                raise ValueError(f"rule allows label {max(a.allowed)} outside a {num_labels}-label alphabet")
        self.rules = rules
        self.num_labels = num_labels
        self.noise_rate = noise_rate
        self.default_allowed = frozenset(range(num_labels) if default_allowed is None else default_allowed)
        self.rng = np.random.default_rng(seed)

    def rule_index(self, x: np.ndarray) -> np.ndarray:
        """Index into :attr:`rules` of the governing rule, -1 for the default."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        which = np.full(len(x), -1, dtype=np.int64)
        for i, rule in enumerate(self.rules):
            hit = (which < 0) & rule.covers(x)
            which[hit] = i
        return which

    def allowed_sets(self, x: np.ndarray) -> list[frozenset]:
        return [self.rules[i].allowed if i >= 0 else self.default_allowed for i in self.rule_index(x)]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        which = self.rule_index(x)
        labels = np.empty(len(x), dtype=np.int64)
        u = self.rng.random(len(x))
        for i in range(-1, len(self.rules)):
            sel = which == i
            if not sel.any():
                continue
            allowed = np.array(sorted(self.rules[i].allowed if i >= 0 else self.default_allowed))
            labels[sel] = allowed[np.minimum((u[sel] * len(allowed)).astype(np.int64), len(allowed) - 1)]
        if self.noise_rate > 0:
            flip = self.rng.random(len(x)) < self.noise_rate
            labels[flip] = self.rng.integers(0, self.num_labels, int(flip.sum()))
        return labels


def planted_reference(rules, num_labels, noise_rate=0.0, seed=0, default_allowed=None) -> PlantedReference:
    return PlantedReference(rules, num_labels, noise_rate, seed, default_allowed)


# --- ABR ---------------------------------------------------------------------


@dataclass(frozen=True)
class BandwidthTrace:
    timestamps: tuple[float, ...]
    throughput_mbps: tuple[float, ...]
    name: str = "trace"

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timestamps)
        bw = tuple(float(b) for b in self.throughput_mbps)
        if len(ts) != len(bw) or not ts:
            raise ValueError("a trace needs equally many timestamps and throughput samples")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"trace {self.name!r}: timestamps must be strictly increasing")
        if any(not (b > 0 and math.isfinite(b)) for b in bw):
            raise ValueError(f"trace {self.name!r}: throughput samples must be positive")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "throughput_mbps", bw)

    def throughput_at(self, t: float) -> float:
        """Piecewise-constant throughput; the last sample holds past the end."""
        i = int(np.searchsorted(self.timestamps, t, side="right")) - 1
        return self.throughput_mbps[max(i, 0)]

    @classmethod
    def constant(cls, mbps: float, duration: float = 1e6, name: str = "constant") -> "BandwidthTrace":
        return cls((0.0, duration), (mbps, mbps), name)

    @classmethod
    def load(cls, path) -> "BandwidthTrace":
        path = Path(path)
        ts, bw = [], []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            cells = line.replace(",", " ").split()
            if not cells:
                continue
            try:
                t, b = float(cells[0]), float(cells[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: expected 'timestamp throughput'") from None
            ts.append(t)
            bw.append(b)
        return cls(tuple(ts), tuple(bw), path.stem)


@dataclass(frozen=True)
class AbrState:
    buffer: float
    last_download_time: float
    throughputs: tuple[float, ...] = ()


def buffer_based_abr(
    buffer: float,
    reservoir: float = 5.0,
    cushion: float = 10.0,
    ladder: Sequence[int] = ABR_LADDER,
) -> int:
    """Buffer-based rate choice.

    Lowest rate at or below the reservoir, highest rate once the buffer
    reaches reservoir + cushion; in between the ladder index grows linearly
    with ``(buffer - reservoir) / cushion`` and is rounded down.
    """
    if buffer < 0:
        raise ValueError("buffer level must be non-negative")
    if cushion <= 0:
        raise ValueError("cushion must be positive")
    n = len(ladder)
    if buffer <= reservoir:
        return ladder[0]
    if buffer >= reservoir + cushion:
        return ladder[-1]
    step = int(math.floor((buffer - reservoir) / cushion * (n - 1)))
    return ladder[min(max(step, 0), n - 1)]


def rate_based_abr(throughputs: Sequence[float], ladder: Sequence[int] = ABR_LADDER, window: int = 5) -> int:
    """Highest rate not above the harmonic mean of recent throughput samples (kbps)."""
    recent = [t for t in throughputs[-window:] if t > 0]
    if not recent:
        return ladder[0]
    estimate = len(recent) / sum(1.0 / t for t in recent)
    best = ladder[0]
    for rate in ladder:
        if rate <= estimate:
            best = rate
    return best


Controller = Callable[[AbrState], int]


def bb_controller(reservoir: float = 5.0, cushion: float = 10.0, ladder: Sequence[int] = ABR_LADDER) -> Controller:
    return lambda state: buffer_based_abr(state.buffer, reservoir, cushion, ladder)


def rb_controller(ladder: Sequence[int] = ABR_LADDER, window: int = 5) -> Controller:
    return lambda state: rate_based_abr(state.throughputs, ladder, window)


CONTROLLERS = {"bb": bb_controller, "rb": rb_controller}

LOG_COLUMNS = ("reference", "trace", "step", "buffer", "download_time", "bitrate")


def simulate_abr(
    trace: BandwidthTrace,
    controller: Controller,
    chunks: int,
    chunk_seconds: float = 4.0,
    buffer_cap: float = 60.0,
    chunk_bits: Optional[Callable[[int], float]] = None,
    reference: str = "bb",
) -> list[tuple]:
    """Play ``chunks`` video chunks over ``trace`` and log each decision.

    Each row is ``(reference, trace, step, buffer, download_time, bitrate)``
    where ``buffer`` is the level when the decision is made and
    ``download_time`` is the duration of the previous chunk's download (0
    before the first one).  A chunk at rate ``r`` kbps is
    ``r * 1000 * chunk_seconds`` bits unless ``chunk_bits`` says otherwise;
    it downloads at the throughput sampled when the download starts.
    """
    if chunks < 0:
        raise ValueError("chunk count must be non-negative")
    size = chunk_bits or (lambda rate: rate * 1000.0 * chunk_seconds)
    rows = []
    buffer = 0.0
    last_dt = 0.0
    clock = 0.0
    seen: list[float] = []
    for step in range(chunks):
        rate = controller(AbrState(buffer, last_dt, tuple(seen)))
        rows.append((reference, trace.name, step, buffer, last_dt, rate))
        mbps = trace.throughput_at(clock)
        if not mbps > 0:
            raise ValueError(f"non-positive throughput at t={clock}")
        dt = size(rate) / (mbps * 1e6)
        buffer = max(buffer - dt, 0.0) + chunk_seconds
        clock += dt
        if buffer > buffer_cap:
            clock += buffer - buffer_cap
            buffer = buffer_cap
        last_dt = dt
        seen.append(size(rate) / dt / 1000.0)
    return rows


def write_log(rows: Sequence[tuple], path, columns: Sequence[str] = LOG_COLUMNS) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sample_planted(
    references: Mapping[str, PlantedReference],
    lower: Sequence[float],
    upper: Sequence[float],
    n: int,
    seed: int,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Uniform inputs over the box, labelled by each planted reference."""
    rng = np.random.default_rng(seed)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    out = {}
    for name in references:
        x = lower + rng.random((n, len(lower))) * (upper - lower)
        out[name] = (x, references[name](x))
    return out


# --- congestion-control-shaped synthetic data ---------------------------------

# per regime: mean (latency gradient, latency ratio, sending ratio)
CC_REGIMES = np.array([
    [0.0, 1.05, 1.0],   # steady
    [0.3, 1.3, 1.1],    # queue building
    [0.6, 1.8, 0.9],    # congested
    [-0.3, 1.4, 0.8],   # draining
])
# allowed sign labels (+, -, 0 as indices 0, 1, 2) per regime for two reference policies
CC_POLICIES = {
    "bbr": ({0}, {2}, {1}, {0, 2}),
    "cubic": ({0}, {0}, {1}, {1, 2}),
}


def cc_like_observations(n_per_reference: int, seed: int = 0, history: int = 4, flow_length: int = 500, noise: float = 0.002):
    """Two sign-output references over lagged (LG, LR, SR) features, d = 3 * history.

    A sticky four-regime Markov chain drives the features; each reference
    maps the current regime to a sign drawn from its allowed set.  Data are
    concentrated around the regime means, as logged controller states are.
    """
    from .ingest import window_history
    from .model import ObservationSet, OutputAlphabet, ReferenceData

    rng = np.random.default_rng(seed)
    stay = 0.85
    k = len(CC_REGIMES)
    refs = []
    for name, policy in CC_POLICIES.items():
        feats, outs = [], []
        remaining = n_per_reference
        while remaining > 0:
            steps = min(flow_length, remaining) + history - 1
            regime = np.empty(steps, dtype=np.int64)
            regime[0] = rng.integers(k)
            moves = rng.random(steps)
            jumps = rng.integers(1, k, steps)
            for t in range(1, steps):
                regime[t] = regime[t - 1] if moves[t] < stay else (regime[t - 1] + jumps[t]) % k
            raw = CC_REGIMES[regime] + rng.normal(0.0, noise, (steps, 3))
            vec = window_history(raw, [True, True, True], history)
            cur = regime[history - 1:]
            u = rng.random(len(cur))
            labels = np.empty(len(cur), dtype=np.int64)
            for r in range(k):
                allowed = np.array(sorted(policy[r]))
                sel = cur == r
                labels[sel] = allowed[(u[sel] * len(allowed)).astype(np.int64)]
            feats.append(vec)
            outs.append(labels)
            remaining -= len(vec)
        refs.append(ReferenceData(name, np.concatenate(feats), np.concatenate(outs)))
    names = tuple(f"{f}[-{j}]" for f in ("LG", "LR", "SR") for j in range(1, history + 1))
    return ObservationSet(tuple(refs), OutputAlphabet.sign(), names, "dSR")


def random_trace(seed: int, duration: float = 2000.0, step: float = 1.0, median_mbps: float = 1.35, spread: float = 0.8, name: str = "") -> BandwidthTrace:
    """Log-normal throughput samples clipped to [0.2, 30] Mbps."""
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration, step)
    bw = np.clip(median_mbps * rng.lognormal(0.0, spread, len(t)), 0.2, 30.0)
    return BandwidthTrace(tuple(t.tolist()), tuple(bw.tolist()), name or f"trace_{seed}")


def abr_observations(
    traces: Sequence[BandwidthTrace],
    controllers: Sequence[str] = ("bb", "rb"),
    chunks: int = 300,
    history: int = 3,
    scale: float = 0.1,
):
    """In-memory equivalent of simulate + ingest with the ABR schema (BS, DT[-1..-h] -> BR)."""
    from .ingest import apply_affine, window_history
    from .model import ObservationSet, OutputAlphabet, ReferenceData

    d = 1 + history
    refs = []
    for name in controllers:
        feats, outs, ids = [], [], []
        for trace in traces:
            rows = simulate_abr(trace, CONTROLLERS[name](), chunks, reference=name)
            raw = np.array([[r[3], r[4]] for r in rows]).reshape(-1, 2)
            vec = apply_affine(window_history(raw, [False, True], history), [(scale, 0.0)] * d)
            feats.append(vec)
            outs.append([ABR_LADDER.index(r[5]) for r in rows[history - 1:]])
            ids.extend([trace.name] * len(vec))
        refs.append(ReferenceData(name, np.concatenate(feats), np.concatenate(outs), tuple(ids)))
    names = ("BS",) + tuple(f"DT[-{j}]" for j in range(1, history + 1))
    alphabet = OutputAlphabet(tuple(str(r) for r in ABR_LADDER))
    return ObservationSet(tuple(refs), alphabet, names, "BR", ((scale, 0.0),) * d)
