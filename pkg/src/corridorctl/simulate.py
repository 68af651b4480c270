"""Two-lane stochastic cellular-automaton traffic simulation.

State is one vehicle per (lane, cell); speeds are integer cells/step. Each
step runs two phases:

1. lane changes on a frozen snapshot: a vehicle moves sideways (probability
   ``p_lane_change``) when the deterministic achievable speed in the adjacent
   lane strictly beats its own lane, the target cell is empty, and the gap to
   the rear vehicle there covers that vehicle's current speed;
2. longitudinal update per lane, front to back:
   (1) accelerate:            v <- min(limit(lane, cell), v + 1)
   (2) look ahead:            with prob q_anticipate use the s-th leader
                              (s = perspective_depth, else s = 1):
                              v <- min(v, x[i+s] - x[i] - s)  [frozen positions]
   (3) slow-to-start:         with prob r_slow clamp to the previous step's
                              gap behind the current leader
   (4) random braking:        with prob 1 - p_keep, v <- max(0, v - 1)
   (5) collision guard:       v <- min(v, room up to the leader's already
                              updated position), then move.

Because the guard in (5) sees the leader's new position, rule (2) with s > 1
lets a follower claim space the leader is about to vacate without ever
overlapping it. With q_anticipate = r_slow = 0 rule (2) clamps to the frozen
gap, which dominates the guard, and the scheme reduces to the classic
accelerate / gap-limit / random-brake / move automaton.

Open boundaries: per-minute demand is Bernoulli-thinned per step, split evenly
across lanes into a virtual origin queue; the queue head enters cell 0 when
free at min(lane limit, gap). Vehicles passing the last cell leave. A ring
variant (no boundaries, wrapped gaps) backs the invariant tests.

Randomness is addressed per (seed, purpose, step, vehicle id); see _rng. Draws
are keyed, not sequential, so the batched draws in the run loops produce the
same values as the one-call-per-purpose public phase functions.

Trajectory logs record, per vehicle and step, the lane and cell after the
lateral phase (where the longitudinal move starts) and the executed speed.

The run loops keep per-lane arrays sorted by cell across steps instead of
rebuilding states: the no-passing guarantee of rule (5) preserves within-lane
order, a ring seam crossing is a rotation, exits truncate the sorted tail and
entries prepend at cell 0. A property test pins these loops to the one-phase-
at-a-time public operations.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from . import _rng
from .corridor import CorridorConfig
from .errors import ConfigError
from .speed_field import MeanSpeedField, aggregate_sim_to_field

BIG = 10 ** 9

DEFAULT_P_LANE_CHANGE = 0.10

_PURPOSE_COLS = np.array([_rng.PERSPECTIVE, _rng.SLOW_TO_START, _rng.BRAKE],
                         dtype=np.int64)

# one fused draw per step: three longitudinal purposes plus the lateral one
_PURPOSE4 = np.array([_rng.PERSPECTIVE, _rng.SLOW_TO_START, _rng.BRAKE,
                      _rng.LANE_CHANGE], dtype=np.int64)

_BIG_PAD = np.full(64, BIG, dtype=np.int64)    # open-boundary leader sentinel


@dataclass(frozen=True)
class BehaviorParams:
    """Driver behaviour knobs of the stochastic automaton."""

    p_keep: float = 0.9          # 1 - random braking probability
    q_anticipate: float = 0.5    # probability of deep perspective in rule 2
    r_slow: float = 0.2          # slow-to-start probability
    perspective_depth: int = 2   # leader index used when anticipating

    def __post_init__(self):
        for name in ("p_keep", "q_anticipate", "r_slow"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.perspective_depth < 1:
            raise ConfigError(f"perspective_depth must be >= 1, got {self.perspective_depth}")

    def replace(self, **kw) -> "BehaviorParams":
        from dataclasses import replace
        return replace(self, **kw)

    def to_json(self) -> dict:
        return {"p_keep": self.p_keep, "q_anticipate": self.q_anticipate,
                "r_slow": self.r_slow, "perspective_depth": self.perspective_depth}

    @classmethod
    def from_json(cls, doc: dict) -> "BehaviorParams":
        return cls(**doc)


class MicroState:
    """Vehicles on the grid at one instant, sorted by (lane, cell)."""

    def __init__(self, time: int, ids, lanes, cells, speeds):
        self.time = int(time)
        ids = np.asarray(ids, dtype=np.int64)
        lanes = np.asarray(lanes, dtype=np.int64)
        cells = np.asarray(cells, dtype=np.int64)
        speeds = np.asarray(speeds, dtype=np.int64)
        order = np.lexsort((cells, lanes))
        self.ids, self.lanes, self.cells, self.speeds = (
            ids[order], lanes[order], cells[order], speeds[order])

    @classmethod
    def empty(cls, time: int = 0) -> "MicroState":
        return cls(time, [], [], [], [])

    @classmethod
    def from_vehicles(cls, vehicles, time: int = 0) -> "MicroState":
        """vehicles: iterable of (id, lane, cell, speed)."""
        cols = list(zip(*vehicles)) if vehicles else ([], [], [], [])
        return cls(time, *cols)

    @property
    def n_vehicles(self) -> int:
        return len(self.ids)

    def lane_arrays(self, n_lanes: int):
        """Per-lane (ids, cells, speeds) views, each sorted by cell."""
        out = []
        for lane in range(n_lanes):
            m = self.lanes == lane
            out.append((self.ids[m], self.cells[m], self.speeds[m]))
        return out

    def validate(self, n_lanes: int, n_cells: int, limits: np.ndarray | None = None):
        if self.n_vehicles == 0:
            return
        if self.lanes.min() < 0 or self.lanes.max() >= n_lanes:
            raise ConfigError("lane index outside corridor")
        if self.cells.min() < 0 or self.cells.max() >= n_cells:
            raise ConfigError("cell index outside corridor")
        if self.speeds.min() < 0:
            raise ConfigError("negative speed")
        key = self.lanes * np.int64(n_cells) + self.cells
        if np.unique(key).size != self.n_vehicles:
            raise ConfigError("two vehicles share a (lane, cell)")
        if np.unique(self.ids).size != self.n_vehicles:
            raise ConfigError("duplicate vehicle id")
        if limits is not None and (self.speeds > limits[self.lanes, self.cells]).any():
            raise ConfigError("speed above the local limit")

    def copy(self) -> "MicroState":
        return MicroState(self.time, self.ids.copy(), self.lanes.copy(),
                          self.cells.copy(), self.speeds.copy())


@dataclass
class TrajectoryLog:
    """Per-step vehicle rows: lane/cell at move start and executed speed."""

    steps: np.ndarray
    ids: np.ndarray
    lanes: np.ndarray
    cells: np.ndarray
    speeds: np.ndarray

    @classmethod
    def concatenate(cls, chunks: list[tuple]) -> "TrajectoryLog":
        if not chunks:
            z = np.zeros(0, dtype=np.int64)
            return cls(z, z.copy(), z.copy(), z.copy(), z.copy())
        cols = [np.concatenate([c[i] for c in chunks]) for i in range(5)]
        return cls(*cols)

    def __len__(self) -> int:
        return len(self.steps)


def _log_from_lane_chunks(chunks: list[tuple]) -> TrajectoryLog:
    """Assemble from (step, lane, ids, cells, speeds) per-lane pieces where
    step and lane are scalars; columns are expanded once at the end."""
    if not chunks:
        return TrajectoryLog.concatenate([])
    counts = np.array([c[2].size for c in chunks], dtype=np.int64)
    steps = np.repeat(np.array([c[0] for c in chunks], dtype=np.int64), counts)
    lanes = np.repeat(np.array([c[1] for c in chunks], dtype=np.int64), counts)
    ids = np.concatenate([c[2] for c in chunks])
    cells = np.concatenate([c[3] for c in chunks])
    speeds = np.concatenate([c[4] for c in chunks])
    return TrajectoryLog(steps, ids, lanes, cells, speeds)


# ---------------------------------------------------------------------------
# kernels (shared by the public per-phase operations and the run loops)
# ---------------------------------------------------------------------------

def _suffix_min(a: np.ndarray) -> np.ndarray:
    return np.minimum.accumulate(a[::-1])[::-1]


def _step_uniforms(seed: int, t: int, ids: np.ndarray) -> np.ndarray:
    """(n, 3) block of the three longitudinal draws for every vehicle."""
    keys = (ids[:, None] << 3) | _PURPOSE_COLS
    return _rng.substream_uniform(seed, t, keys)


def _advance_lane(cells, speeds, ids, limits_lane, params: BehaviorParams,
                  uniforms, prev_pos, ring: bool, length: int):
    """Longitudinal rules for one lane. Returns (new_cells, new_speeds).

    ``uniforms`` is an (n, 3) block: perspective, slow-to-start, braking.
    ``prev_pos`` maps vehicle id -> position one step ago (-1 unknown).
    New cells are unwrapped: on a ring they may reach length + v.
    """
    n = len(cells)
    if n == 0:
        return cells, speeds
    idx = np.arange(n)
    v = speeds + 1
    np.minimum(limits_lane[cells], v, out=v)                            # rule 1

    if params.q_anticipate > 0.0:
        s = (uniforms[:, 0] < params.q_anticipate) \
            * (params.perspective_depth - 1)
        s += 1
    else:
        s = 1    # the perspective draw stays addressed but unused
    lead = idx + s
    if ring:
        laps, pos = np.divmod(lead, n)
        room = cells[pos]
        room += laps * length
    else:
        depth = params.perspective_depth
        pad = _BIG_PAD[:depth] if depth <= 64 else np.full(depth, BIG,
                                                           dtype=np.int64)
        room = np.concatenate([cells, pad])[lead]
    room -= cells
    room -= s
    np.maximum(room, 0, out=room)
    np.minimum(v, room, out=v)                                          # rule 2

    if params.r_slow > 0.0:
        prev_self = prev_pos[ids]
        gap_prev = prev_pos[np.concatenate([ids[1:], ids[:1]])]
        known = np.minimum(prev_self, gap_prev) >= 0
        if not ring:
            known[-1] = False    # last vehicle has no leader
        gap_prev -= prev_self
        if ring:
            gap_prev %= length
        gap_prev -= 1
        np.maximum(gap_prev, 0, out=gap_prev)
        clamp = uniforms[:, 1] < params.r_slow
        clamp &= known
        excess = v - gap_prev
        np.maximum(excess, 0, out=excess)
        excess *= clamp
        v -= excess                                                     # rule 3

    if params.p_keep < 1.0:
        brake = uniforms[:, 2] < (1.0 - params.p_keep)
        brake &= v > 0
        v -= brake                                                      # rule 4

    bound = cells + v
    bound -= idx
    if ring:
        bound[-1] = min(bound[-1], cells[0] + length - 1 - (n - 1))
    np.minimum.accumulate(bound[::-1], out=bound[::-1])                 # rule 5
    bound += idx
    return bound, bound - cells


def _lane_change_moves(lane_data, limits, params: BehaviorParams, p_lc: float,
                       uniforms_by_lane, ring: bool, length: int,
                       limit_lists=None):
    """Decide lateral moves on a frozen snapshot.

    Returns per-lane (positions, target_lanes) of accepted movers, positions
    ascending within the lane's sorted arrays. The acceptance draw is per
    vehicle, so evaluating gains only for vehicles whose draw passes leaves
    the outcome unchanged. Candidates are a p_lc-fraction of the population,
    so a scalar walk over list copies of the sorted arrays beats whole-array
    vector ops. ``limit_lists`` lets run loops amortise the list conversion
    of the constant limit grid.
    """
    n_lanes = len(lane_data)
    empty = np.zeros(0, dtype=np.int64)
    moves = [(empty, empty) for _ in range(n_lanes)]
    cands = []
    total = 0
    for lane in range(n_lanes):
        u = uniforms_by_lane[lane]
        ca = np.nonzero(u < p_lc)[0] if u.size else empty
        cands.append(ca)
        total += ca.size
    if total == 0:
        return moves
    if limit_lists is None:
        limit_lists = [row.tolist() for row in limits]
    cell_lists = [d[1].tolist() for d in lane_data]
    speed_lists = [d[2].tolist() for d in lane_data]
    for lane in range(n_lanes):
        ca = cands[lane]
        if ca.size == 0:
            continue
        cl = cell_lists[lane]
        sl = speed_lists[lane]
        n = len(cl)
        lim_own = limit_lists[lane]
        adj_info = [(adj, cell_lists[adj], speed_lists[adj],
                     len(cell_lists[adj]), limit_lists[adj])
                    for adj in (lane - 1, lane + 1) if 0 <= adj < n_lanes]
        mv: list[int] = []
        tg: list[int] = []
        for k in ca.tolist():
            c = cl[k]
            sp1 = sl[k] + 1
            if k + 1 < n:
                own_gap = cl[k + 1] - c - 1
            elif ring:
                own_gap = cl[0] + length - c - 1
            else:
                own_gap = BIG
            own_best = min(lim_own[c], sp1, own_gap)
            best_gain = 0
            best_target = -1
            for adj, acl, asl, na, lim_adj in adj_info:
                if na == 0:
                    adj_gap = BIG
                    blocked = False
                    rear_ok = True
                else:
                    pos = bisect_right(acl, c)
                    blocked = pos > 0 and acl[pos - 1] == c
                    if pos < na:
                        adj_gap = acl[pos] - c - 1
                    elif ring:
                        adj_gap = acl[0] + length - c - 1
                    else:
                        adj_gap = BIG
                    if pos > 0:
                        rear_cell = acl[pos - 1]
                        rear_speed = asl[pos - 1]
                    elif ring:
                        rear_cell = acl[-1] - length
                        rear_speed = asl[-1]
                    else:
                        rear_cell = -BIG
                        rear_speed = 0
                    rear_ok = (c - rear_cell - 1) >= rear_speed
                gain = min(lim_adj[c], sp1, adj_gap) - own_best
                if gain > best_gain and not blocked and rear_ok:
                    best_gain = gain
                    best_target = adj
            if best_target >= 0:
                mv.append(k)
                tg.append(best_target)
        if mv:
            moves[lane] = (np.asarray(mv, dtype=np.int64),
                           np.asarray(tg, dtype=np.int64))
    return moves


def _apply_moves(lane_data, moves, n_lanes: int):
    """Execute accepted lateral moves; returns fresh per-lane arrays.

    When two movers claim the same (lane, cell) — possible only with three or
    more lanes — the first in (lane, position) order wins and the other stays.
    """
    claimed: set[tuple[int, int]] = set()
    removals = [[] for _ in range(n_lanes)]
    incoming = [[] for _ in range(n_lanes)]
    for lane in range(n_lanes):
        ids, cells, speeds = lane_data[lane]
        mv, tg = moves[lane]
        for j, target in zip(mv.tolist(), tg.tolist()):
            key = (target, int(cells[j]))
            if key in claimed:
                continue
            claimed.add(key)
            removals[lane].append(j)
            incoming[target].append((int(ids[j]), int(cells[j]), int(speeds[j])))
    out = []
    for lane in range(n_lanes):
        ids, cells, speeds = lane_data[lane]
        if removals[lane]:
            keep = np.ones(len(ids), dtype=bool)
            keep[removals[lane]] = False
            ids, cells, speeds = ids[keep], cells[keep], speeds[keep]
        inc = incoming[lane]
        if inc:
            inc.sort(key=lambda r: r[1])
            add = np.array(inc, dtype=np.int64)
            # final slot of insert i is its sorted position plus the inserts
            # landing before it
            tgt = cells.searchsorted(add[:, 1]) + np.arange(len(inc))
            total = len(ids) + len(inc)
            old = np.ones(total, dtype=bool)
            old[tgt] = False
            nids = np.empty(total, dtype=np.int64)
            ncells = np.empty(total, dtype=np.int64)
            nspeeds = np.empty(total, dtype=np.int64)
            nids[tgt], nids[old] = add[:, 0], ids
            ncells[tgt], ncells[old] = add[:, 1], cells
            nspeeds[tgt], nspeeds[old] = add[:, 2], speeds
            ids, cells, speeds = nids, ncells, nspeeds
        out.append((ids, cells, speeds))
    return out


def _lateral_pass(ids_l, cells_l, speeds_l, params, limits, p_lc, u_by_lane,
                  ring, length, limit_lists=None):
    """One lane-change phase over per-lane working arrays; the caller supplies
    the per-lane acceptance uniforms. Returns (ids, cells, speeds, moved)."""
    lane_data = list(zip(ids_l, cells_l, speeds_l))
    moves = _lane_change_moves(lane_data, limits, params, p_lc, u_by_lane,
                               ring, length, limit_lists)
    if not any(m[0].size for m in moves):
        return ids_l, cells_l, speeds_l, False
    merged = _apply_moves(lane_data, moves, len(ids_l))
    return ([m[0] for m in merged], [m[1] for m in merged],
            [m[2] for m in merged], True)


# ---------------------------------------------------------------------------
# public per-phase operations
# ---------------------------------------------------------------------------

def _prev_array(prev_positions: dict | None, max_id: int) -> np.ndarray:
    prev = np.full(max_id + 1, -1, dtype=np.int64)
    if prev_positions:
        for vid, pos in prev_positions.items():
            if vid <= max_id:
                prev[vid] = pos
    return prev


def lane_change_phase(state: MicroState, params: BehaviorParams, limits: np.ndarray,
                      seed: int, p_lane_change: float = DEFAULT_P_LANE_CHANGE,
                      ring: bool = False, ring_length: int | None = None) -> MicroState:
    n_lanes = limits.shape[0]
    length = ring_length if ring else limits.shape[1]
    lane_data = state.lane_arrays(n_lanes)
    uniforms = [
        _rng.substream_uniform(seed, state.time,
                               (lane_data[l][0] << 3) | _rng.LANE_CHANGE)
        for l in range(n_lanes)
    ]
    moves = _lane_change_moves(lane_data, limits, params, p_lane_change,
                               uniforms, ring, length)
    merged = _apply_moves(lane_data, moves, n_lanes)
    ids = np.concatenate([m[0] for m in merged])
    lanes = np.concatenate([np.full(len(m[0]), l, dtype=np.int64)
                            for l, m in enumerate(merged)])
    cells = np.concatenate([m[1] for m in merged])
    speeds = np.concatenate([m[2] for m in merged])
    return MicroState(state.time, ids, lanes, cells, speeds)


def step(state: MicroState, params: BehaviorParams, limits: np.ndarray, seed: int,
         prev_positions: dict | None = None, ring: bool = False,
         ring_length: int | None = None) -> MicroState:
    """One longitudinal update. Exits (cells beyond the grid) are left in the
    returned state for the boundary pass to finalise; on a ring, positions wrap.
    """
    n_lanes = limits.shape[0]
    length = ring_length if ring else limits.shape[1]
    prev = _prev_array(prev_positions, int(state.ids.max()) if state.n_vehicles else 0)
    out_ids, out_lanes, out_cells, out_speeds = [], [], [], []
    for lane, (ids, cells, speeds) in enumerate(state.lane_arrays(n_lanes)):
        u = _step_uniforms(seed, state.time, ids) if len(ids) else np.zeros((0, 3))
        new_cells, new_speeds = _advance_lane(cells, speeds, ids, limits[lane],
                                              params, u, prev, ring, length)
        if ring:
            new_cells = np.mod(new_cells, length)
        out_ids.append(ids)
        out_lanes.append(np.full(len(ids), lane, dtype=np.int64))
        out_cells.append(new_cells)
        out_speeds.append(new_speeds)
    return MicroState(state.time + 1, np.concatenate(out_ids), np.concatenate(out_lanes),
                      np.concatenate(out_cells), np.concatenate(out_speeds))


def apply_boundaries(state: MicroState, demand_veh_per_step: float, limits: np.ndarray,
                     seed: int, queue: list[int], next_id: int):
    """Remove exited vehicles, draw arrivals, insert queue heads at cell 0.

    ``queue`` is a per-lane pending count (mutated). Returns
    (state, next_id, exited_count, inserted_count).
    """
    n_lanes, n_cells = limits.shape
    exited = int((state.cells >= n_cells).sum())
    keep = state.cells < n_cells
    ids, lanes, cells, speeds = (state.ids[keep], state.lanes[keep],
                                 state.cells[keep], state.speeds[keep])

    per_lane = demand_veh_per_step / n_lanes
    whole = int(per_lane)
    frac = per_lane - whole
    u = _rng.substream_uniform(seed, state.time,
                               (np.arange(n_lanes, dtype=np.int64) << 3) | _rng.ARRIVAL)
    for lane in range(n_lanes):
        queue[lane] += whole + (1 if u[lane] < frac else 0)

    add = []
    for lane in range(n_lanes):
        if queue[lane] <= 0:
            continue
        in_lane = lanes == lane
        lane_cells = cells[in_lane]
        if lane_cells.size and lane_cells.min() == 0:
            continue
        gap = int(lane_cells.min()) - 1 if lane_cells.size else BIG
        v_entry = min(int(limits[lane, 0]), gap)
        add.append((next_id, lane, 0, v_entry))
        next_id += 1
        queue[lane] -= 1

    if add:
        arr = np.array(add, dtype=np.int64)
        ids = np.concatenate([ids, arr[:, 0]])
        lanes = np.concatenate([lanes, arr[:, 1]])
        cells = np.concatenate([cells, arr[:, 2]])
        speeds = np.concatenate([speeds, arr[:, 3]])
    new_state = MicroState(state.time, ids, lanes, cells, speeds)
    return new_state, next_id, exited, len(add)


# ---------------------------------------------------------------------------
# whole runs
# ---------------------------------------------------------------------------

@dataclass
class SimRun:
    """Inputs of one corridor simulation."""

    cfg: CorridorConfig
    params: BehaviorParams
    limits: np.ndarray                  # (n_lanes, n_cells) cells/step
    horizon_steps: int
    demand_veh_min: np.ndarray          # per-minute demand, vehicles/min
    initial: MicroState
    seed: int = 0
    p_lane_change: float = DEFAULT_P_LANE_CHANGE
    scenario_id: str | None = None
    record_log: bool = True


@dataclass
class SimOutput:
    final_state: MicroState
    field: MeanSpeedField
    log: TrajectoryLog | None
    exited: int
    inserted: int
    queue_left: int
    queue_series: np.ndarray


def run(sim: SimRun, t0: datetime | None = None) -> SimOutput:
    """Simulate the corridor over the horizon; see the module docstring for
    the per-step phase order (lane changes, longitudinal move, boundaries)."""
    cfg = sim.cfg
    n_lanes, n_cells = sim.limits.shape
    if n_lanes != cfg.n_lanes or n_cells != cfg.n_cells:
        raise ConfigError("limits grid does not match the corridor")
    sim.initial.validate(n_lanes, n_cells)
    if sim.horizon_steps < 1:
        raise ConfigError("horizon must cover at least one step")
    # field rows: whole minutes, a trailing sliver under half a minute is
    # dropped rather than reported as a nearly-empty row
    n_minutes = max(1, int(round(sim.horizon_steps * cfg.step_s / 60.0)))
    last_minute = int((sim.horizon_steps - 1) * cfg.step_s // 60.0)
    demand = np.asarray(sim.demand_veh_min, dtype=np.float64)
    if demand.size <= last_minute:
        raise ConfigError(
            f"demand series covers {demand.size} min, horizon reaches "
            f"minute {last_minute}")

    lane_data = sim.initial.lane_arrays(n_lanes)
    ids_l = [d[0] for d in lane_data]
    cells_l = [d[1] for d in lane_data]
    speeds_l = [d[2] for d in lane_data]
    limits_rows = [np.ascontiguousarray(sim.limits[lane]) for lane in range(n_lanes)]
    arrival_keys = [(lane << 3) | _rng.ARRIVAL for lane in range(n_lanes)]
    params, seed, p_lc = sim.params, sim.seed, sim.p_lane_change

    queue = [0] * n_lanes
    next_id = int(max(a.max() for a in ids_l if a.size) + 1) \
        if any(a.size for a in ids_l) else 0
    prev = np.full(max(next_id, 1024), -1, dtype=np.int64)
    utab = np.empty((prev.size, 3))      # draws keyed by id; filled every step
    ktab = (np.arange(prev.size, dtype=np.int64) << 3)[:, None] | _PURPOSE4
    limit_lists = [row.tolist() for row in sim.limits]
    chunks: list[tuple] = []
    exited = inserted = 0
    queue_series = np.zeros(sim.horizon_steps, dtype=np.int64)
    record_log = sim.record_log
    step_base, from_base = _rng.step_base, _rng.uniforms_from_base
    scalar_u = _rng.uniform_from_base_scalar

    # per-step arrival demand, split per lane, hoisted out of the loop
    minute_of = np.minimum((np.arange(sim.horizon_steps) * cfg.step_s
                            / 60.0).astype(np.int64), demand.size - 1)
    per_lane_step = demand[minute_of] * (cfg.step_s / 60.0) / n_lanes
    whole_list = per_lane_step.astype(np.int64).tolist()
    frac_list = (per_lane_step - per_lane_step.astype(np.int64)).tolist()

    base = step_base(seed, 0)
    for t in range(sim.horizon_steps):
        sizes = [a.size for a in ids_l]
        if any(sizes):
            ids_all = ids_l[0] if n_lanes == 1 else np.concatenate(ids_l)
            u4 = from_base(base, ktab[ids_all])
            moved = False
            if p_lc > 0.0:
                off = 0
                u_by_lane = []
                for sz in sizes:
                    u_by_lane.append(u4[off:off + sz, 3])
                    off += sz
                ids_l, cells_l, speeds_l, moved = _lateral_pass(
                    ids_l, cells_l, speeds_l, params, sim.limits, p_lc,
                    u_by_lane, False, n_cells, limit_lists)
            if moved:
                # lane membership changed; re-key the longitudinal draws by id
                utab[ids_all] = u4[:, :3]
            off = 0
            for lane in range(n_lanes):
                ids, cells = ids_l[lane], cells_l[lane]
                if ids.size:
                    u3 = utab[ids] if moved else u4[off:off + sizes[lane], :3]
                    new_cells, new_speeds = _advance_lane(
                        cells, speeds_l[lane], ids, limits_rows[lane], params,
                        u3, prev, False, n_cells)
                    if record_log:
                        chunks.append((t, lane, ids, cells, new_speeds))
                    else:
                        chunks.append((t, cells, new_speeds))
                    prev[ids] = cells
                    cells_l[lane] = new_cells
                    speeds_l[lane] = new_speeds
                off += sizes[lane]

        # boundary pass: exits leave, arrivals queue at the origin (the draw
        # shares the post-move time index with the public phase function)
        base = step_base(seed, t + 1)
        whole = whole_list[t]
        frac = frac_list[t]
        for lane in range(n_lanes):
            cells = cells_l[lane]
            if cells.size and cells[-1] >= n_cells:
                k = int(cells.searchsorted(n_cells, side="left"))
                exited += cells.size - k
                ids_l[lane] = ids_l[lane][:k]
                cells_l[lane] = cells[:k]
                speeds_l[lane] = speeds_l[lane][:k]
            queue[lane] += whole + (1 if scalar_u(base, arrival_keys[lane]) < frac else 0)
            if queue[lane] > 0:
                cells = cells_l[lane]
                if cells.size == 0 or cells[0] > 0:
                    gap = int(cells[0]) - 1 if cells.size else BIG
                    v_entry = min(int(limits_rows[lane][0]), gap)
                    ids_l[lane] = np.concatenate(
                        [np.array([next_id], dtype=np.int64), ids_l[lane]])
                    cells_l[lane] = np.concatenate(
                        [np.zeros(1, dtype=np.int64), cells_l[lane]])
                    speeds_l[lane] = np.concatenate(
                        [np.array([v_entry], dtype=np.int64), speeds_l[lane]])
                    next_id += 1
                    queue[lane] -= 1
                    inserted += 1
        queue_series[t] = sum(queue)
        if next_id >= prev.size:
            grow = prev.size
            prev = np.concatenate([prev, np.full(grow, -1, dtype=np.int64)])
            utab = np.vstack([utab, np.empty((grow, 3))])
            ktab = (np.arange(prev.size, dtype=np.int64) << 3)[:, None] | _PURPOSE4

    final = MicroState(
        sim.horizon_steps,
        np.concatenate(ids_l),
        np.concatenate([np.full(a.size, lane, dtype=np.int64)
                        for lane, a in enumerate(ids_l)]),
        np.concatenate(cells_l),
        np.concatenate(speeds_l))

    if sim.record_log:
        log = _log_from_lane_chunks(chunks)
        field_src = log
    else:
        log = None
        if chunks:
            counts = np.array([c[1].size for c in chunks], dtype=np.int64)
            steps_c = np.repeat(np.array([c[0] for c in chunks], dtype=np.int64),
                                counts)
            cells_c = np.concatenate([c[1] for c in chunks])
            speeds_c = np.concatenate([c[2] for c in chunks])
        else:
            steps_c = cells_c = speeds_c = np.zeros(0, dtype=np.int64)
        field_src = TrajectoryLog(steps_c, np.zeros_like(steps_c),
                                  np.zeros_like(steps_c), cells_c, speeds_c)
    field = aggregate_sim_to_field(field_src, cfg, n_minutes, t0=t0)
    return SimOutput(
        final_state=final,
        field=field,
        log=log,
        exited=exited,
        inserted=inserted,
        queue_left=sum(queue),
        queue_series=queue_series,
    )


def simulate_ring(initial: MicroState, params: BehaviorParams, limits: np.ndarray,
                  horizon_steps: int, seed: int,
                  p_lane_change: float = DEFAULT_P_LANE_CHANGE,
                  check_invariants: bool = False) -> tuple[MicroState, TrajectoryLog]:
    """Closed-loop variant used as a test harness: same rules, wrapped gaps,
    no boundary flow. ``limits`` is (n_lanes, ring_length)."""
    n_lanes, length = limits.shape
    initial.validate(n_lanes, length)
    lane_data = initial.lane_arrays(n_lanes)
    ids_l = [d[0] for d in lane_data]
    cells_l = [d[1] for d in lane_data]
    speeds_l = [d[2] for d in lane_data]
    limits_rows = [np.ascontiguousarray(limits[lane]) for lane in range(n_lanes)]
    n_start = initial.n_vehicles
    max_id = int(initial.ids.max()) if n_start else 0
    prev = np.full(max_id + 1, -1, dtype=np.int64)
    utab = np.empty((max_id + 1, 3))
    ktab = (np.arange(max_id + 1, dtype=np.int64) << 3)[:, None] | _PURPOSE4
    limit_lists = [row.tolist() for row in limits]
    step_base, from_base = _rng.step_base, _rng.uniforms_from_base

    chunks: list[tuple] = []

    for t in range(horizon_steps):
        sizes = [a.size for a in ids_l]
        if not any(sizes):
            continue
        ids_all = ids_l[0] if n_lanes == 1 else np.concatenate(ids_l)
        u4 = from_base(step_base(seed, t), ktab[ids_all])
        moved = False
        if p_lane_change > 0.0:
            off = 0
            u_by_lane = []
            for sz in sizes:
                u_by_lane.append(u4[off:off + sz, 3])
                off += sz
            ids_l, cells_l, speeds_l, moved = _lateral_pass(
                ids_l, cells_l, speeds_l, params, limits, p_lane_change,
                u_by_lane, True, length, limit_lists)
        if moved:
            utab[ids_all] = u4[:, :3]
        if check_invariants:
            _ring_snapshot(t, ids_l, cells_l, speeds_l).validate(n_lanes, length)

        off = 0
        for lane in range(n_lanes):
            ids, cells = ids_l[lane], cells_l[lane]
            if ids.size == 0:
                off += sizes[lane]
                continue
            u3 = utab[ids] if moved else u4[off:off + sizes[lane], :3]
            off += sizes[lane]
            new_cells, new_speeds = _advance_lane(
                cells, speeds_l[lane], ids, limits_rows[lane], params, u3,
                prev, True, length)
            chunks.append((t, lane, ids, cells, new_speeds))
            if check_invariants and (new_speeds > limits_rows[lane][cells]).any():
                raise ConfigError("speed above the limit at the departure cell")
            prev[ids] = cells
            if new_cells[-1] >= length:            # seam crossers rotate front
                k = int(new_cells.searchsorted(length, side="left"))
                ids_l[lane] = np.concatenate([ids[k:], ids[:k]])
                cells_l[lane] = np.concatenate([new_cells[k:] - length,
                                                new_cells[:k]])
                speeds_l[lane] = np.concatenate([new_speeds[k:], new_speeds[:k]])
            else:
                cells_l[lane] = new_cells
                speeds_l[lane] = new_speeds

        if check_invariants:
            snap = _ring_snapshot(t + 1, ids_l, cells_l, speeds_l)
            snap.validate(n_lanes, length)
            if snap.n_vehicles != n_start:
                raise ConfigError("vehicle count changed on ring")

    return (_ring_snapshot(horizon_steps, ids_l, cells_l, speeds_l),
            _log_from_lane_chunks(chunks))


def _ring_snapshot(time, ids_l, cells_l, speeds_l) -> MicroState:
    lanes = [np.full(a.size, lane, dtype=np.int64)
             for lane, a in enumerate(ids_l)]
    return MicroState(time, np.concatenate(ids_l), np.concatenate(lanes),
                      np.concatenate(cells_l), np.concatenate(speeds_l))
