"""Distributed rTDMA slot-coordination MAC.

Each radar unit owns a MAC state (time-reference id, slot index, priority
strength, radar/communication start times, BEB counter and a database of
overheard assignments). Units broadcast control packets on a dedicated
narrowband channel using non-persistent CSMA with binary exponential
backoff; receiving a packet triggers the state-update procedure that
converges the network onto one shared time reference with pairwise distinct
slot indices, which places the radar frames in disjoint vulnerable periods.

All protocol arithmetic is unit-agnostic: times may be float seconds or
integer simulator ticks, as long as every field of :class:`ProtocolTiming`
and every MacState time uses the same unit. Integer inputs produce integer
outputs, which the discrete-event engine relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from chirpnet.waveform import CommConfig, RadarWaveformConfig, derive_quantities

UNASSIGNED = 0


@dataclass(frozen=True)
class SlotPlan:
    """Static slot grid: M_max = per_slot_capacity * (slots per frame)."""

    m_max: int             # total rTDMA slot indices
    per_slot_capacity: int  # concurrent radars per time slot T_k
    slot_duration: float    # (N+1)*T
    v_spacing: float        # |V|, spacing of radar starts inside a slot

    @property
    def n_time_slots(self) -> int:
        return self.m_max // self.per_slot_capacity


@dataclass(frozen=True)
class ProtocolTiming:
    """Times the MAC needs for scheduling, in the same unit as the slot plan."""

    frame_time: float
    slot_duration: float  # (N+1)*T, matches the plan's
    t_pkt: float
    slot_time: float      # CSMA SlotTime delta


@dataclass(frozen=True)
class ControlPacket:
    """Broadcast scheduling message on the communication subchannel."""

    sender: int
    ref_id: int
    si_set: frozenset       # slot indices used on the sender's vehicle
    strength: int
    base_t_rs: float        # radar start time of the sender vehicle's base unit
    base_si: int            # slot index of that base unit

    def __post_init__(self):
        if self.si_set and self.base_si not in self.si_set:
            raise ValueError(f"base_si {self.base_si} not in si_set {set(self.si_set)}")


@dataclass
class MacState:
    """Mutable per-unit protocol state; owned by exactly one simulation actor."""

    unit: int
    ref_id: int                 # time-reference identifier
    si: int = UNASSIGNED        # rTDMA slot index, 0 = unassigned
    strength: int = 0           # time-reference priority counter
    t_rs: float = 0.0           # next radar start time
    t_cs: float = 0.0           # next control-packet start time
    counter: int = 0            # BEB counter
    backoff_stage: int = 0      # b in [0, B_stage]
    saturated: bool = False     # slot pool exhausted on last selection
    # (sender, ref_id) -> (si_set, strength); upserted on every packet heard
    database: dict = field(default_factory=dict)


def protocol_timing(radar: RadarWaveformConfig, comm: CommConfig) -> ProtocolTiming:
    """Timing in seconds for stand-alone (non-engine) use."""
    derived = derive_quantities(radar, comm)
    return ProtocolTiming(frame_time=radar.T_f,
                          slot_duration=(radar.N + 1) * radar.T,
                          t_pkt=derived.T_pkt, slot_time=comm.slot_time)


def build_slot_plan(radar: RadarWaveformConfig, comm: CommConfig,
                    alpha_d: float = 1.0, per_slot_capacity: int = 7) -> SlotPlan:
    """Slot plan in seconds with the configured per-slot radar count."""
    n_slots = capacity_time_slots(radar)
    period = radar.T * radar.B_max / radar.B_r * (1 + alpha_d)
    return SlotPlan(m_max=per_slot_capacity * n_slots,
                    per_slot_capacity=per_slot_capacity,
                    slot_duration=(radar.N + 1) * radar.T,
                    v_spacing=period)


def capacity_time_slots(radar: RadarWaveformConfig) -> int:
    """Number of (N+1)*T time slots per frame, floor(1/U') with an epsilon guard."""
    return int(math.floor(radar.T_f / ((radar.N + 1) * radar.T) + 1e-9))


def capacity(plan: SlotPlan) -> int:
    """Operating capacity M_max of the plan."""
    return plan.m_max


def capacity_bound(radar: RadarWaveformConfig, alpha_d: float) -> int:
    """Diagnostic upper bound floor(1/U')*floor(B_r/((1+alpha_d)*B_max)).

    For typical parameters this exceeds the configured operating capacity
    (e.g. 90 vs 70); it is reported, not used for scheduling.
    """
    if radar.B_max == 0:
        return 0
    per_slot = int(math.floor(radar.B_r / ((1 + alpha_d) * radar.B_max) + 1e-9))
    return capacity_time_slots(radar) * per_slot


def init_unit(vehicle_index: int, radar: RadarWaveformConfig, comm: CommConfig,
              rng, timing: ProtocolTiming | None = None) -> MacState:
    """Fresh unit: own vehicle index as time reference, unassigned slot,
    uniform radar start in [0, T_f) and a BEB counter drawn from [0, W0-1]."""
    if timing is None:
        timing = protocol_timing(radar, comm)
    if isinstance(timing.frame_time, int):
        t_rs = int(rng.integers(0, timing.frame_time))
    else:
        t_rs = float(rng.uniform(0.0, timing.frame_time))
    counter = int(rng.integers(0, comm.W0))
    state = MacState(unit=vehicle_index, ref_id=vehicle_index, t_rs=t_rs,
                     counter=counter)
    state.t_cs = comm_start_time(state, timing)
    return state


def comm_start_time(state: MacState, timing: ProtocolTiming):
    """Scheduled packet start: one slot duration plus one packet time before
    the radar start, delayed by the backoff counter."""
    return state.t_rs - timing.slot_duration - timing.t_pkt \
        + timing.slot_time * state.counter


def slot_decompose(si: int, plan: SlotPlan) -> tuple[int, int]:
    """Split a slot index into (kappa, K): position within the time slot and
    the time-slot number, via si mod capacity and ceil-division."""
    if si == UNASSIGNED:
        raise ValueError("slot index 0 is unassigned")
    if si < 0:
        raise ValueError(f"slot index must be positive, got {si}")
    kappa = si % plan.per_slot_capacity
    big_k = -(-si // plan.per_slot_capacity)  # ceil
    return kappa, big_k


def compute_radar_start(receiver_si: int, packet: ControlPacket, plan: SlotPlan):
    """Radar start of the receiver's slot on the sender's grid:
    base_t_rs + slot_duration*(K_j - K_i) + v_spacing*(kappa_j - kappa_i)."""
    if receiver_si == UNASSIGNED or packet.base_si == UNASSIGNED:
        raise ValueError("both slot indices must be assigned")
    kap_j, k_j = slot_decompose(receiver_si, plan)
    kap_i, k_i = slot_decompose(packet.base_si, plan)
    return packet.base_t_rs + plan.slot_duration * (k_j - k_i) \
        + plan.v_spacing * (kap_j - kap_i)


def normalize_start(t, now, frame_time):
    """First occurrence of the periodic start time at or after ``now``."""
    if t >= now:
        # pull back if more than a frame in the future
        while t - frame_time >= now:
            t -= frame_time
        return t
    if isinstance(t, int) and isinstance(now, int) and isinstance(frame_time, int):
        k = -((t - now) // frame_time)
    else:
        k = math.ceil((now - t) / frame_time)
    return t + k * frame_time


def _slots_in_time_slot(big_k: int, plan: SlotPlan):
    lo = (big_k - 1) * plan.per_slot_capacity + 1
    return range(lo, lo + plan.per_slot_capacity)


def _current_time_slot(state: MacState, packet: ControlPacket, plan: SlotPlan,
                       frame_time) -> int:
    """Time-slot number K whose span on the packet's grid contains the
    receiver's current radar start."""
    _, k_i = slot_decompose(packet.base_si, plan)
    rel = (state.t_rs - packet.base_t_rs) % frame_time
    offset = int(rel // plan.slot_duration)
    return (k_i - 1 + offset) % plan.n_time_slots + 1


def select_slot_index(excluded, plan: SlotPlan, preferred_k: int | None,
                      rng=None, avoid=frozenset()) -> int | None:
    """Unused slot index, preferring the given time slot; None if exhausted.

    With an rng the pick is uniform over the candidates (seeded, hence
    reproducible); without one it is the lowest index. Random picks spread
    simultaneous selections by different receivers of the same broadcast,
    which would otherwise all land on the same index.

    ``avoid`` is a soft exclusion: those slots are used only when nothing
    else is free. A unit cannot hear claims for slots whose contention
    window overlaps its own radar transmission, so callers pass those
    structurally-unobservable slots here rather than trusting the database.
    """
    def choose(pool):
        return pool[0] if rng is None else int(pool[int(rng.integers(0, len(pool)))])

    if preferred_k is not None:
        pool = [s for s in _slots_in_time_slot(preferred_k, plan) if s not in excluded]
        good = [s for s in pool if s not in avoid]
        if good:
            return choose(good)
        if pool:
            return choose(pool)
    pool = [s for s in range(1, plan.m_max + 1) if s not in excluded]
    good = [s for s in pool if s not in avoid]
    if good:
        return choose(good)
    if not pool:
        return None
    return choose(pool)


def process_control_packet(state: MacState, packet: ControlPacket, plan: SlotPlan,
                           timing: ProtocolTiming, own_vehicle_si=None,
                           rng=None, now=None) -> bool:
    """Update a unit's state from an overheard control packet.

    Implements the reference-and-slot negotiation: store the record; an
    unassigned unit adopts the sender's time reference (strength + 1) and
    picks an unused slot; under the same reference the strength is bumped to
    max(own, sender) + 1 and the slot is re-picked only when it collides with
    the sender vehicle's set; a different reference is adopted only when the
    sender's strength is strictly greater. When (ref_id, si) changed, the
    radar and communication start times are recomputed on the sender's grid.

    ``own_vehicle_si`` is the occupancy view of sibling units on the same
    vehicle (defaults to none). Returns True when (ref_id, si) changed.
    """
    state.database[(packet.sender, packet.ref_id)] = (packet.si_set, packet.strength)
    before = (state.ref_id, state.si)
    own = set(own_vehicle_si) if own_vehicle_si else set()
    anchored = packet.base_si != UNASSIGNED

    def excluded_set():
        used = set(own)
        used.update(packet.si_set)
        for (_, ref), (si_set, _) in state.database.items():
            if ref == state.ref_id:
                used.update(si_set)
        used.discard(UNASSIGNED)
        return used

    def pick(preferred_k):
        # the slot after the current one is a blind zone: its units contend
        # exactly while this unit transmits radar, so their claims are unheard
        deaf = frozenset(_slots_in_time_slot(preferred_k % plan.n_time_slots + 1, plan))
        si = select_slot_index(excluded_set(), plan, preferred_k, rng, avoid=deaf)
        if si is None:
            state.saturated = True
            return UNASSIGNED
        state.saturated = False
        return si

    if state.si == UNASSIGNED:
        # an unanchored packet (unassigned sender) cannot define a grid to join
        if anchored:
            state.ref_id = packet.ref_id
            state.strength = packet.strength + 1
            state.si = pick(_current_time_slot(state, packet, plan, timing.frame_time))
    elif state.ref_id == packet.ref_id:
        state.strength = max(state.strength, packet.strength) + 1
        if state.si in packet.si_set:
            state.si = pick(_current_time_slot(state, packet, plan, timing.frame_time))
    else:
        if packet.strength > state.strength and anchored:
            state.ref_id = packet.ref_id
            state.strength = packet.strength + 1
            state.si = pick(_current_time_slot(state, packet, plan, timing.frame_time))

    changed = (state.ref_id, state.si) != before
    if changed and state.si != UNASSIGNED and anchored:
        t_rs = compute_radar_start(state.si, packet, plan)
        if now is not None:
            t_rs = normalize_start(t_rs, now, timing.frame_time)
        state.t_rs = t_rs
        state.t_cs = comm_start_time(state, timing)
    return changed




def csma_step(state: MacState, channel_busy: bool, now, rng, comm: CommConfig,
              slot_time=None) -> str:
    """One carrier-sense decision of non-persistent CSMA with BEB.

    Idle channel: transmit now. Busy: raise the backoff stage (capped),
    redraw the counter from [0, 2^b * W0 - 1] and push the sense time by
    counter SlotTimes. ``slot_time`` overrides the config's SlotTime when the
    caller works in ticks.
    """
    if not channel_busy:
        return "transmit"
    delta = comm.slot_time if slot_time is None else slot_time
    state.backoff_stage = min(state.backoff_stage + 1, comm.B_stage)
    window = (2 ** state.backoff_stage) * comm.W0
    state.counter = int(rng.integers(0, window))
    state.t_cs = now + delta * state.counter
    return "defer"


def reset_contention(state: MacState, rng, comm: CommConfig):
    """End-of-window reset: backoff stage to 0, fresh counter from [0, W0-1]."""
    state.backoff_stage = 0
    state.counter = int(rng.integers(0, comm.W0))


def build_packet(state: MacState, own_vehicle_si=None) -> ControlPacket:
    """Broadcast message advertising the unit's reference, vehicle slot set and grid anchor."""
    si_set = frozenset(s for s in ((own_vehicle_si or set()) | {state.si})
                       if s != UNASSIGNED)
    return ControlPacket(sender=state.unit, ref_id=state.ref_id, si_set=si_set,
                         strength=state.strength, base_t_rs=state.t_rs,
                         base_si=state.si)


def self_assign(state: MacState, plan: SlotPlan, rng=None, own_vehicle_si=None) -> bool:
    """Slot self-assignment when a still-unassigned unit transmits.

    The unit's own current radar start anchors the grid, so any free index is
    self-consistent; pick the lowest (or a seeded-random) index not known to
    be used under its reference. Returns False when the pool is exhausted.
    """
    used = set(own_vehicle_si) if own_vehicle_si else set()
    for (_, ref), (si_set, _) in state.database.items():
        if ref == state.ref_id:
            used.update(si_set)
    used.discard(UNASSIGNED)
    si = select_slot_index(used, plan, None, rng)
    if si is None:
        state.saturated = True
        return False
    state.si = si
    return True


def simulate_lossless_rounds(states: list[MacState], plan: SlotPlan,
                             timing: ProtocolTiming, order: list[int],
                             n_rounds: int, rng=None):
    """Model-level convergence driver: per round, every unit broadcasts once in
    the given order and all others process the packet immediately (no channel,
    no losses). Mutates the states; returns the number of rounds executed
    until a fixed point (no state change in a full round) or n_rounds."""
    for rounds_done in range(n_rounds):
        any_change = False
        for idx in order:
            sender = states[idx]
            if sender.si == UNASSIGNED:
                if self_assign(sender, plan, rng):
                    any_change = True
            packet = build_packet(sender)
            if packet.base_si == UNASSIGNED:
                continue
            for other in states:
                if other.unit == sender.unit:
                    continue
                if process_control_packet(other, packet, plan, timing, rng=rng):
                    any_change = True
        if not any_change:
            return rounds_done
    return n_rounds
