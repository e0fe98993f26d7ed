"""Deterministic discrete-event simulator of coordinated and legacy FMCW
radar networks sharing a narrowband control channel.

All event times are integer ticks (default resolution 0.2 us). One trial is
a pure function of (scenario, radar, comm, seed): a strictly sequential event
loop drives per-unit radar frames, CSMA contention, packet collisions and
protocol state updates, then a per-frame geometric interference oracle scores
every radar (coordinated or legacy) as a victim.

Synchronization error model: each unit carries a fixed clock offset drawn
uniformly from [-eps, +eps] and quantized to the tick grid. The offset
perturbs where that unit's transmissions fall on the shared slot grid as
seen by any victim; a victim's own schedule is exact in its own clock (its
receive window is referenced to its own chirp), so the oracle compares
``(interferer start + interferer offset) - victim start``. This is the
reading under which offsets of at most half the vulnerable period are
provably harmless in steady state.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from chirpnet import mac
from chirpnet.waveform import CommConfig, ConfigError, RadarWaveformConfig, derive_quantities

# event kinds
RADAR_START = 0
FRAME_BOUNDARY = 1
CARRIER_SENSE = 2
COMM_TX_START = 3
COMM_TX_END = 4

EVENT_KIND_NAMES = {
    RADAR_START: "radar_frame_start",
    FRAME_BOUNDARY: "frame_boundary",
    CARRIER_SENSE: "carrier_sense",
    COMM_TX_START: "comm_tx_start",
    COMM_TX_END: "comm_tx_end",
}


@dataclass(frozen=True)
class Event:
    """Queue entry; pops in (time, sequence) lexicographic order."""

    time: int
    sequence: int
    kind: int
    unit: int


@dataclass(frozen=True)
class ScenarioConfig:
    """Monte Carlo scenario description."""

    M: int                          # vehicle count (one radar unit each)
    n_frames: int = 10              # simulated frames per trial
    n_trials: int = 1000
    seed: int = 1
    alpha_d: float = 1.0            # longest-interference-path factor
    penetration: float = 1.0        # fraction of coordinated (vs legacy) units
    sync_error_bound: float = 0.0   # eps [s]; per-unit offset ~ U[-eps, +eps]
    tick: float = 0.2e-6            # time resolution [s]
    topology: str = "full-mesh"
    legacy_B_r: float = 1e9         # sweep bandwidth of legacy radars [Hz]
    per_slot_capacity: int = 7      # concurrent radars per time slot

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        if not 0.0 <= self.penetration <= 1.0:
            raise ConfigError(f"penetration must be in [0, 1], got {self.penetration}")
        if self.tick <= 0:
            raise ConfigError(f"tick must be > 0, got {self.tick}")
        if self.n_frames < 1 or self.n_trials < 1:
            raise ConfigError("n_frames and n_trials must be >= 1")
        if self.sync_error_bound < 0:
            raise ConfigError("sync_error_bound must be >= 0")
        if self.topology != "full-mesh":
            raise ConfigError("only full-mesh topology is configurable here; "
                              "pass an explicit adjacency to run_trial")


@dataclass
class TrialMetrics:
    """Per-trial outcome."""

    interfered: np.ndarray          # (n_frames, M) bool
    t_final: int                    # first frame index with no interference after it
    converged: bool                 # False when the final frame was still interfered
    jitter: float                   # max |inter-start gap - T_f| [s]
    realized_penetration: float
    saturated_units: int


@dataclass(frozen=True)
class MonteCarloResult:
    per_frame_probability: np.ndarray   # (n_frames,) fraction of trials interfered
    t_final_min: int
    t_final_mean: float
    t_final_max: int
    trials: list = field(default_factory=list)  # (trial, t_final, converged, realized_penetration)


# --- tick helpers ------------------------------------------------------------

def ticks_floor(x: float, tick: float) -> int:
    """Quantize a time down onto the tick grid (with an epsilon guard)."""
    return int(math.floor(x / tick + 1e-9))


def ticks_ceil(x: float, tick: float) -> int:
    return int(math.ceil(x / tick - 1e-9))


def vulnerable_ticks(radar_B_r: float, T: float, B_max: float, alpha_d: float,
                     tick: float) -> tuple[int, int]:
    """Per-chirp vulnerable interval bounds in ticks, rounded outward.

    Offsets tau with -lo <= tau_ticks < hi interfere (half-open, so the
    interval measure on the tick grid equals (lo + hi) * tick exactly).
    """
    t_max = T * B_max / radar_B_r
    return ticks_ceil(alpha_d * t_max, tick), ticks_ceil(t_max, tick)


def effective_vulnerable_duration(radar: RadarWaveformConfig, alpha_d: float,
                                  tick: float) -> float:
    """|V| as realized on the tick grid (e.g. 2.4 us for Table-style params)."""
    lo, hi = vulnerable_ticks(radar.B_r, radar.T, radar.B_max, alpha_d, tick)
    return (lo + hi) * tick


def _hits_union(tau_ticks, chirp_ticks: int, n_chirps: int, lo, hi):
    """Membership of tick offsets in the frame-wide union of per-chirp
    vulnerable intervals [k*T - lo, k*T + hi) for k in [-(N-1), N-1]."""
    tau = np.asarray(tau_ticks)
    span = (n_chirps - 1) * chirp_ticks
    inside = (tau >= -(span + lo)) & (tau < span + hi)
    m = np.mod(tau, chirp_ticks)
    return inside & ((m < hi) | (m >= chirp_ticks - lo))


def interference_oracle(victim_t_rs: float, interferer_t_rs, radar: RadarWaveformConfig,
                        alpha_d: float, tick: float = 0.2e-6) -> bool:
    """True iff any interferer start offset falls in the victim's frame-wide
    vulnerable union, with all arithmetic quantized to the tick."""
    lo, hi = vulnerable_ticks(radar.B_r, radar.T, radar.B_max, alpha_d, tick)
    chirp_ticks = ticks_floor(radar.T, tick)
    v = ticks_floor(victim_t_rs, tick)
    taus = np.array([ticks_floor(t, tick) - v for t in np.atleast_1d(interferer_t_rs)])
    return bool(np.any(_hits_union(taus, chirp_ticks, radar.N, lo, hi)))


# --- channel -----------------------------------------------------------------

def comm_channel_deliver(transmissions, adjacency, radar_busy):
    """Resolve overlapping control-packet transmissions into receptions.

    ``transmissions``: list of (sender, start, end, packet).
    ``adjacency``: dict unit -> iterable of neighbors, or None for full mesh
    over every unit mentioned.
    ``radar_busy``: callable (unit, start, end) -> bool, True when the unit is
    transmitting radar during any part of [start, end].

    A receiver gets a packet iff it is adjacent to the sender, it is not in
    radar-transmit mode for the packet's full duration, and no other
    transmission overlaps the packet in time (any overlap of two or more
    destroys all overlapped packets; no capture effect). Returns a dict
    receiver -> list of received packets.
    """
    units = set()
    for sender, _, _, _ in transmissions:
        units.add(sender)
    if adjacency is not None:
        units.update(adjacency.keys())
        for neigh in adjacency.values():
            units.update(neigh)

    def neighbors(sender):
        if adjacency is None:
            return [u for u in sorted(units) if u != sender]
        return [u for u in adjacency.get(sender, ()) if u != sender]

    delivered: dict = {}
    for i, (sender, start, end, packet) in enumerate(transmissions):
        clean = True
        for j, (_, s2, e2, _) in enumerate(transmissions):
            if j != i and s2 < end and e2 > start:
                clean = False
                break
        if not clean:
            continue
        for r in neighbors(sender):
            if radar_busy(r, start, end):
                continue
            delivered.setdefault(r, []).append(packet)
    return delivered


# --- trial -------------------------------------------------------------------

class _Grid:
    """Tick-quantized timing constants shared by a trial."""

    def __init__(self, scenario: ScenarioConfig, radar: RadarWaveformConfig,
                 comm: CommConfig):
        tick = scenario.tick
        derived = derive_quantities(radar, comm)
        if not math.isfinite(derived.T_pkt):
            raise ConfigError("coordinated scenarios need a non-zero comm bandwidth")
        self.tick = tick
        self.chirp = ticks_floor(radar.T, tick)
        self.frame = ticks_floor(radar.T_f, tick)
        self.radar_on = radar.N * self.chirp
        self.slot = (radar.N + 1) * self.chirp
        self.t_pkt = max(1, ticks_floor(derived.T_pkt, tick))
        self.delta = max(1, ticks_floor(comm.slot_time, tick))
        lo, hi = vulnerable_ticks(radar.B_r, radar.T, radar.B_max,
                                  scenario.alpha_d, tick)
        self.lo, self.hi = lo, hi
        lo_leg, hi_leg = vulnerable_ticks(scenario.legacy_B_r, radar.T, radar.B_max,
                                          scenario.alpha_d, tick)
        self.lo_legacy, self.hi_legacy = lo_leg, hi_leg
        n_slots = self.frame // self.slot
        if n_slots < 1:
            raise ConfigError("frame shorter than one slot duration")
        self.plan = mac.SlotPlan(m_max=scenario.per_slot_capacity * n_slots,
                                 per_slot_capacity=scenario.per_slot_capacity,
                                 slot_duration=self.slot,
                                 v_spacing=lo + hi)
        self.timing = mac.ProtocolTiming(frame_time=self.frame,
                                         slot_duration=self.slot,
                                         t_pkt=self.t_pkt,
                                         slot_time=self.delta)


class _TrialRunner:
    def __init__(self, scenario, radar, comm, trial_index, adjacency=None):
        self.scenario = scenario
        self.radar = radar
        self.comm = comm
        self.grid = _Grid(scenario, radar, comm)
        self.adjacency = adjacency
        self.rng = np.random.default_rng([scenario.seed, trial_index])
        m = scenario.M
        g = self.grid
        self.is_coord = self.rng.random(m) < scenario.penetration
        eps = scenario.sync_error_bound
        if eps > 0:
            raw = self.rng.uniform(-eps, eps, size=m)
            self.offsets = np.floor(raw / g.tick + 1e-12).astype(np.int64)
        else:
            self.offsets = np.zeros(m, dtype=np.int64)
        self.states: list = [None] * m
        self.next_start = [0] * m
        self.radar_gen = [0] * m
        self.comm_gen = [0] * m
        self.frames_done = [0] * m
        self.starts = [[] for _ in range(m)]
        self.last_radar = [(-1, -1)] * m   # most recent fired radar interval
        self.tx_done = [False] * m
        self.ongoing: dict = {}            # unit -> [start, end, packet, collided]
        self.recent_ends: list = []        # (start, end) of finished txs, for sensing
        self.heap: list = []
        self.seq = 0
        self.saturated_events = 0
        for u in range(m):
            if self.is_coord[u]:
                st = mac.init_unit(u, radar, comm, self.rng, timing=g.timing)
                self.states[u] = st
                t0 = st.t_rs
            else:
                t0 = int(self.rng.integers(0, g.frame))
            self.next_start[u] = t0
            self._push(t0, RADAR_START, u, self.radar_gen[u])
            if self.is_coord[u]:
                st = self.states[u]
                if 0 <= st.t_cs <= t0 - g.t_pkt:
                    self._push(st.t_cs, CARRIER_SENSE, u, self.comm_gen[u])

    def _push(self, time, kind, unit, gen):
        heapq.heappush(self.heap, (time, self.seq, kind, unit, gen))
        self.seq += 1

    # -- channel helpers --

    def _sense(self, t):
        """Perfect instantaneous carrier sensing over one SlotTime.

        The channel counts as busy when any transmission was on the air during
        (t - delta, t]: still-ongoing ones that started before t, or ones that
        ended inside the window. Transmissions beginning at the same tick
        cannot observe one another and will collide.
        """
        horizon = t - self.grid.delta
        self.recent_ends = [(s, e) for (s, e) in self.recent_ends if e > horizon]
        if self.recent_ends:
            return "busy"
        for s, _, _, _ in self.ongoing.values():
            if s < t:
                return "busy"
        return "idle"

    def _adjacent(self, sender, receiver):
        if self.adjacency is None:
            return True
        return receiver in self.adjacency.get(sender, ())

    def _radar_busy(self, unit, start, end):
        s, e = self.last_radar[unit]
        return s < end and e > start

    # -- event handlers --

    def _on_radar_start(self, t, u, gen):
        if gen != self.radar_gen[u]:
            return
        self.starts[u].append(t)
        self.last_radar[u] = (t, t + self.grid.radar_on)
        self.frames_done[u] += 1
        if self.frames_done[u] >= self.scenario.n_frames:
            return
        nxt = t + self.grid.frame
        self.next_start[u] = nxt
        if self.is_coord[u]:
            self.states[u].t_rs = nxt
        self._push(nxt, RADAR_START, u, self.radar_gen[u])
        if self.is_coord[u]:
            boundary = nxt - self.grid.slot - self.grid.t_pkt
            self._push(boundary, FRAME_BOUNDARY, u, self.radar_gen[u])

    def _on_frame_boundary(self, t, u, gen):
        # boundaries belong to a radar schedule; a reassignment supersedes them
        if gen != self.radar_gen[u] or not self.is_coord[u]:
            return
        if self.frames_done[u] >= self.scenario.n_frames:
            return
        st = self.states[u]
        self.tx_done[u] = False
        mac.reset_contention(st, self.rng, self.comm)
        st.t_cs = mac.comm_start_time(st, self.grid.timing)
        if t <= st.t_cs <= self.next_start[u] - self.grid.t_pkt:
            self._push(st.t_cs, CARRIER_SENSE, u, self.comm_gen[u])

    def _on_carrier_sense(self, t, u, gen):
        if gen != self.comm_gen[u]:
            return
        if self.tx_done[u]:
            return
        window_end = self.next_start[u] - self.grid.t_pkt
        if t > window_end:
            return
        st = self.states[u]
        verdict = self._sense(t)
        if verdict == "busy":
            mac.csma_step(st, True, t, self.rng, self.comm,
                          slot_time=self.grid.delta)
            if st.t_cs <= window_end:
                self._push(st.t_cs, CARRIER_SENSE, u, self.comm_gen[u])
            return
        self._push(t, COMM_TX_START, u, gen)

    def _on_comm_tx_start(self, t, u, gen):
        if gen != self.comm_gen[u] or self.tx_done[u]:
            return
        st = self.states[u]
        if st.si == mac.UNASSIGNED:
            if not mac.self_assign(st, self.grid.plan, self.rng):
                self.saturated_events += 1
                return
        packet = mac.build_packet(st)
        end = t + self.grid.t_pkt
        entry = [t, end, packet, False]
        for other in self.ongoing.values():
            if other[0] < end and other[1] > t:
                other[3] = True
                entry[3] = True
        self.ongoing[u] = entry
        self.tx_done[u] = True
        self._push(end, COMM_TX_END, u, gen)

    def _on_comm_tx_end(self, t, u, gen):
        entry = self.ongoing.pop(u, None)
        if entry is None:
            return
        start, end, packet, collided = entry
        self.recent_ends.append((start, end))
        if collided:
            return
        g = self.grid
        for r in range(self.scenario.M):
            if r == u or not self.is_coord[r]:
                continue
            if not self._adjacent(u, r):
                continue
            if self._radar_busy(r, start, end) or r in self.ongoing:
                continue
            st = self.states[r]
            changed = mac.process_control_packet(
                st, packet, g.plan, g.timing, rng=self.rng, now=t)
            if st.saturated:
                self.saturated_events += 1
            if changed and st.si != mac.UNASSIGNED:
                self._reschedule(r, t)

    def _reschedule(self, r, now):
        """Move a reassigned unit onto its new radar start and contention window."""
        g = self.grid
        st = self.states[r]
        self.radar_gen[r] += 1
        self.comm_gen[r] += 1
        self.next_start[r] = st.t_rs
        self._push(st.t_rs, RADAR_START, r, self.radar_gen[r])
        boundary = st.t_rs - g.slot - g.t_pkt
        if boundary > now:
            # the new window has not opened yet; contend there afresh
            self._push(boundary, FRAME_BOUNDARY, r, self.radar_gen[r])
        elif not self.tx_done[r]:
            t_cs = max(st.t_cs, now)
            if t_cs <= st.t_rs - g.t_pkt:
                st.t_cs = t_cs
                self._push(t_cs, CARRIER_SENSE, r, self.comm_gen[r])

    def run(self) -> TrialMetrics:
        handlers = {
            RADAR_START: self._on_radar_start,
            FRAME_BOUNDARY: self._on_frame_boundary,
            CARRIER_SENSE: self._on_carrier_sense,
            COMM_TX_START: self._on_comm_tx_start,
            COMM_TX_END: self._on_comm_tx_end,
        }
        heap = self.heap
        while heap:
            t, _, kind, unit, gen = heapq.heappop(heap)
            handlers[kind](t, unit, gen)
        return self._metrics()

    def _metrics(self) -> TrialMetrics:
        sc = self.scenario
        g = self.grid
        m, f = sc.M, sc.n_frames
        # distinct out-of-range sentinels so missing entries can never alias
        sentinel = np.iinfo(np.int64).max // 4
        starts = np.arange(m, dtype=np.int64)[:, None] * (1 << 40) + sentinel \
            + np.zeros((m, f), dtype=np.int64)
        for u in range(m):
            got = self.starts[u][:f]
            starts[u, :len(got)] = got
        shifted = starts + self.offsets[:, None]
        lo = np.where(self.is_coord, g.lo, g.lo_legacy)[:, None]
        hi = np.where(self.is_coord, g.hi, g.hi_legacy)[:, None]
        interfered = np.zeros((f, m), dtype=bool)
        if m > 1:
            eye = np.eye(m, dtype=bool)
            span = (self.radar.N - 1) * g.chirp
            for fi in range(f):
                victim = starts[:, fi][:, None]
                hit = np.zeros((m, m), dtype=bool)
                for gi in (fi - 1, fi, fi + 1):
                    if not 0 <= gi < f:
                        continue
                    tau = shifted[:, gi][None, :] - victim
                    inside = (tau >= -(span + lo)) & (tau < span + hi)
                    mm = np.mod(tau, g.chirp)
                    hit |= inside & ((mm < hi) | (mm >= g.chirp - lo))
                hit &= ~eye
                interfered[fi] = hit.any(axis=1)
        frame_bad = interfered.any(axis=1)
        if frame_bad.any():
            t_final = int(np.max(np.nonzero(frame_bad)[0])) + 1
        else:
            t_final = 0
        converged = t_final < f
        jitter = 0.0
        for u in range(m):
            s = np.asarray(self.starts[u][:f])
            if len(s) >= 2:
                dev = np.max(np.abs(np.diff(s) - g.frame))
                jitter = max(jitter, float(dev) * g.tick)
        return TrialMetrics(
            interfered=interfered,
            t_final=t_final,
            converged=converged,
            jitter=jitter,
            realized_penetration=float(np.count_nonzero(self.is_coord)) / m,
            saturated_units=self.saturated_events,
        )


def _warn_duty_cycle(radar: RadarWaveformConfig):
    if radar.duty_cycle_slotted > 1 / 3 + 1e-12:
        warnings.warn(
            f"slotted duty cycle U' = {radar.duty_cycle_slotted:.3f} exceeds 1/3; "
            "units cannot hear enough of the frame and convergence is not guaranteed",
            stacklevel=3)


def run_trial(scenario: ScenarioConfig, radar: RadarWaveformConfig,
              comm: CommConfig, trial_index: int = 0, adjacency=None) -> TrialMetrics:
    """Run one trial; a pure function of (scenario, radar, comm, trial_index)."""
    _warn_duty_cycle(radar)
    runner = _TrialRunner(scenario, radar, comm, trial_index, adjacency)
    return runner.run()


def _trial_job(args):
    scenario, radar, comm, idx = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        met = run_trial(scenario, radar, comm, idx)
    return idx, met.interfered.any(axis=1), met.t_final, met.converged, \
        met.realized_penetration


def run_monte_carlo(scenario: ScenarioConfig, radar: RadarWaveformConfig,
                    comm: CommConfig, parallel: int | None = None) -> MonteCarloResult:
    """Aggregate n_trials independent trials.

    The per-frame probability is the fraction of trials in which at least one
    victim was interfered at that frame index. Trial seeds derive from
    (scenario.seed, trial index), so results do not depend on worker
    scheduling; aggregation is a commutative sum keyed by trial index.
    """
    _warn_duty_cycle(radar)
    jobs = [(scenario, radar, comm, i) for i in range(scenario.n_trials)]
    if parallel and parallel > 1 and scenario.n_trials > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=8))
        results.sort(key=lambda r: r[0])
    else:
        results = [_trial_job(j) for j in jobs]

    frame_counts = np.zeros(scenario.n_frames, dtype=np.int64)
    rows = []
    t_finals = []
    for idx, frame_bad, t_final, converged, pen in results:
        frame_counts += frame_bad
        t_finals.append(t_final)
        rows.append((idx, t_final, converged, pen))
    prob = frame_counts / scenario.n_trials
    return MonteCarloResult(
        per_frame_probability=prob,
        t_final_min=int(min(t_finals)),
        t_final_mean=float(np.mean(t_finals)),
        t_final_max=int(max(t_finals)),
        trials=rows,
    )


# --- CSV output ----------------------------------------------------------------

def decimal_12sig(x: float) -> str:
    """Plain decimal with 12 significant digits, never scientific notation."""
    if x == 0 or not math.isfinite(x):
        return "0" if x == 0 else repr(x)
    digits = 12 - 1 - int(math.floor(math.log10(abs(x))))
    digits = min(max(digits, 0), 40)
    return f"{x:.{digits}f}"


def format_probability(p: float) -> tuple[str, int]:
    """CSV probability cell plus a clamp flag for values below 1e-12."""
    if 0 < p < 1e-12:
        return "0", 1
    return decimal_12sig(p), 0


def write_frame_probability_csv(path, result: MonteCarloResult, config_hash: str,
                                seed: int):
    lines = [f"# config_hash={config_hash} seed={seed}",
             "frame_index,interference_probability,clamped"]
    for i, p in enumerate(result.per_frame_probability):
        cell, clamped = format_probability(float(p))
        lines.append(f"{i},{cell},{clamped}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trials_csv(path, result: MonteCarloResult, config_hash: str, seed: int):
    lines = [f"# config_hash={config_hash} seed={seed}",
             "trial,t_final_frames,converged_flag,realized_penetration"]
    for idx, t_final, converged, pen in result.trials:
        lines.append(f"{idx},{t_final},{int(converged)},{decimal_12sig(pen)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
