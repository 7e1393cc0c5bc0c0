"""Narrowband ray-based channel: LOS plus first-order wall reflections.

Every public entry point runs through the same batched core
(:func:`_trace`), evaluated over an arbitrary set of scene states (user
position + clock). Standalone calls are a batch of one, which keeps
per-slot values bit-identical between the window simulator and a direct
evaluation at the same scene state.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .geometry import low_part_bounds, segment_hits_aabb, segment_hits_oriented
from .scene import Scene, wrap_xy

SPEED_OF_LIGHT = 299_792_458.0
# consecutive states sharing one culling bounding box
CULL_CHUNK = 32


@dataclass(frozen=True)
class RadioParams:
    frequency_hz: float = 28e9
    tx_power_dbm: float = 24.0
    noise_dbm: float = -80.0
    reflection_loss_db: float = 10.0
    snr_floor_db: float = -40.0
    lb_frequency_hz: float = 2e9
    lb_tx_power_dbm: float = 43.0
    lb_path_loss_exponent: float = 3.5
    lb_reference_distance_m: float = 1.0

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz


@dataclass(frozen=True)
class Ray:
    link: int
    vertices: tuple[tuple[float, float, float], ...]
    gain: float  # linear power gain, |alpha|^2
    departure_az: float
    departure_el: float
    arrival_az: float
    arrival_el: float
    alpha: complex

    @property
    def length(self) -> float:
        v = np.asarray(self.vertices)
        return float(np.linalg.norm(np.diff(v, axis=0), axis=1).sum())

    @property
    def n_reflections(self) -> int:
        return len(self.vertices) - 2


@dataclass
class MeasurementVector:
    snr_db: np.ndarray  # (N, M) per mmAP, per beam
    lb_snr_db: float
    position: np.ndarray  # (2,)
    slot: int
    best_beam: np.ndarray = field(default=None)  # (N,)

    def __post_init__(self):
        if self.best_beam is None:
            self.best_beam = best_beams(self.snr_db)

    @property
    def mmwave(self) -> np.ndarray:
        """Flattened per-beam SNRs, mmAP-major."""
        return self.snr_db.reshape(-1)

    def features(self, D: int, K: int) -> np.ndarray:
        """Classifier input: N*M beam SNRs, LB SNR, D, K, user x, user y."""
        return np.concatenate([self.mmwave, [self.lb_snr_db, D, K], self.position]).astype(float)


@dataclass
class ChannelRealization:
    g: np.ndarray  # (N+1, K) in {0, 1}; row 0 is the LB-BS
    best_beam: np.ndarray  # (N,)

    @property
    def n_links(self) -> int:
        return self.g.shape[0]

    @property
    def K(self) -> int:
        return self.g.shape[1]


def best_beams(snr_db: np.ndarray) -> np.ndarray:
    """Argmax beam per mmAP; np.argmax resolves ties to the lowest index."""
    return np.argmax(snr_db, axis=-1)


# --------------------------------------------------------------------------
# batched ray construction
# --------------------------------------------------------------------------

_FACES = ((0, 0, -1.0), (0, 1, 1.0), (1, 0, -1.0), (1, 1, 1.0))  # (axis, lo/hi corner, normal sign)


def _candidate_paths(tx: np.ndarray, users: np.ndarray, scene: Scene):
    """Geometry of LOS and every wall reflection, valid or not.

    Returns reflection points (S, C, 3), validity (S, C), path length (S, C),
    owner building per candidate (C,) with -1 for LOS.
    """
    S = len(users)
    lo, hi = scene.building_bounds
    C = 1 + 4 * len(lo)
    points = np.empty((S, C, 3))
    valid = np.zeros((S, C), dtype=bool)
    length = np.empty((S, C))
    owner = np.full(C, -1)

    points[:, 0] = users
    valid[:, 0] = True
    length[:, 0] = np.linalg.norm(users - tx, axis=-1)

    c = 1
    for b in range(len(lo)):
        for axis, corner, sign in _FACES:
            plane = (lo[b], hi[b])[corner][axis]
            other = 1 - axis
            mirror = tx.copy()
            mirror[axis] = 2.0 * plane - tx[axis]
            d = users - mirror
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (plane - mirror[axis]) / d[:, axis]
            p = mirror + t[:, None] * d
            ok = (sign * (tx[axis] - plane) > 0) & (sign * (users[:, axis] - plane) > 0)
            ok &= (p[:, other] >= lo[b][other]) & (p[:, other] <= hi[b][other])
            ok &= (p[:, 2] >= 0.0) & (p[:, 2] <= hi[b][2])
            points[:, c] = p
            valid[:, c] = ok
            length[:, c] = np.linalg.norm(d, axis=-1)
            owner[c] = b
            c += 1
    return points, valid, length, owner


def _expand_groups(group_of_pair: np.ndarray, starts: np.ndarray, sizes: np.ndarray):
    """For each (group, x) pair, enumerate the members of its group.

    Returns (pair index, member position) arrays.
    """
    counts = sizes[group_of_pair]
    pair = np.repeat(np.arange(len(group_of_pair)), counts)
    offset = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    return pair, starts[group_of_pair][pair] + offset


def _building_hits(a, b, own, scene: Scene) -> np.ndarray:
    """Per leg: does it cross a building other than ``own``?"""
    lo, hi = scene.building_bounds
    hit = np.zeros(len(a), dtype=bool)
    if len(lo) == 0 or len(a) == 0:
        return hit
    seg_lo = np.minimum(a[:, :2], b[:, :2])
    seg_hi = np.maximum(a[:, :2], b[:, :2])
    near = (
        (seg_lo[:, None, 0] <= hi[None, :, 0]) & (seg_hi[:, None, 0] >= lo[None, :, 0])
        & (seg_lo[:, None, 1] <= hi[None, :, 1]) & (seg_hi[:, None, 1] >= lo[None, :, 1])
    )
    near &= own[:, None] != np.arange(len(lo))[None, :]
    li, bi = np.nonzero(near)
    exact = segment_hits_aabb(a[li], b[li], lo[bi], hi[bi])
    hit[li[exact]] = True
    return hit


def _fleet_bounds(scene: Scene, t_min: np.ndarray, t_max: np.ndarray) -> np.ndarray:
    """Per time span, per obstacle 2-D box containing the footprint over [t_min, t_max]."""
    f = scene.fleet
    p0 = scene.obstacle_positions(t_min)  # (n_spans, n, 2)
    p1 = scene.obstacle_positions(t_max)
    step = f.heading * (f.speed[:, None] * (t_max - t_min)[:, None, None])
    wrapped = np.any(np.abs((p1 - p0) - step) > 1e-6, axis=-1)
    r = f.radius[None, :, None] + 1e-6
    lo = np.minimum(p0, p1) - r
    hi = np.maximum(p0, p1) + r
    lo[wrapped] = -np.inf
    hi[wrapped] = np.inf
    return np.concatenate([lo, hi], axis=-1)


def _obstacle_centers(scene: Scene, times: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # same arithmetic as Scene.obstacle_positions, gathered per (time, obstacle) pair
    f = scene.fleet
    return wrap_xy(f.start[idx] + f.heading[idx] * (f.speed[idx] * times)[:, None], scene.area)


def _fleet_hits(a, b, t, chunk, leg_id, n_leg_ids, scene: Scene) -> np.ndarray:
    """Per leg: does a moving obstacle cross it at time ``t``?

    Legs sharing (chunk, leg_id) are culled together: only obstacles whose
    swept footprint over the chunk's time span meets the union of the legs'
    low parts (below the tallest obstacle) get the exact test.
    """
    f = scene.fleet
    hit = np.zeros(len(a), dtype=bool)
    if len(f) == 0 or len(a) == 0:
        return hit
    low = low_part_bounds(a, b, float(f.height.max()))
    rel = np.nonzero(np.isfinite(low[:, 0]))[0]
    if len(rel) == 0:
        return hit
    key = chunk[rel] * n_leg_ids + leg_id[rel]
    order = np.argsort(key, kind="stable")
    rel, key = rel[order], key[order]
    groups, starts, sizes = np.unique(key, return_index=True, return_counts=True)
    inv = np.repeat(np.arange(len(groups)), sizes)
    g_lo = np.full((len(groups), 2), np.inf)
    g_hi = np.full((len(groups), 2), -np.inf)
    np.minimum.at(g_lo, inv, low[rel, :2])
    np.maximum.at(g_hi, inv, low[rel, 2:])

    g_chunk = groups // n_leg_ids
    chunks, chunk_inv = np.unique(g_chunk, return_inverse=True)
    t_min = np.full(len(chunks), np.inf)
    t_max = np.full(len(chunks), -np.inf)
    rel_chunk = np.searchsorted(chunks, chunk[rel])
    np.minimum.at(t_min, rel_chunk, t[rel])
    np.maximum.at(t_max, rel_chunk, t[rel])
    obs = _fleet_bounds(scene, t_min, t_max)[chunk_inv]  # (n_groups, n, 4)
    overlap = (
        (g_lo[:, None, 0] <= obs[:, :, 2]) & (g_hi[:, None, 0] >= obs[:, :, 0])
        & (g_lo[:, None, 1] <= obs[:, :, 3]) & (g_hi[:, None, 1] >= obs[:, :, 1])
    )
    gi, oi = np.nonzero(overlap)
    if len(gi) == 0:
        return hit
    pair, pos = _expand_groups(gi, starts, sizes)
    legs = rel[pos]
    o = oi[pair]
    centers = _obstacle_centers(scene, t[legs], o)
    exact = segment_hits_oriented(a[legs], b[legs], centers, f.heading[o], f.length[o], f.width[o], f.height[o])
    hit[legs[exact]] = True
    return hit


@dataclass
class _RayBatch:
    state: np.ndarray
    candidate: np.ndarray
    gain: np.ndarray
    departure_az: np.ndarray
    departure_el: np.ndarray
    arrival_az: np.ndarray
    arrival_el: np.ndarray
    length: np.ndarray
    point: np.ndarray  # reflection point, or user position for LOS
    n_refl: np.ndarray


def _trace(scene: Scene, ap: int, users: np.ndarray, times: np.ndarray, radio: RadioParams) -> _RayBatch:
    """Unblocked rays from mmAP ``ap`` (0-based) for each state, state-major order."""
    tx = scene.aps[ap].position
    users = np.asarray(users, dtype=float).reshape(-1, 3)
    times = np.asarray(times, dtype=float).reshape(-1)
    points, valid, length, owner = _candidate_paths(tx, users, scene)
    C = valid.shape[1]

    s, c = np.nonzero(valid)
    p = points[s, c]
    refl = owner[c] >= 0
    # leg 0: tx -> p (p is the user for LOS); leg 1: reflection point -> user
    r_idx = np.nonzero(refl)[0]
    entry = np.concatenate([np.arange(len(s)), r_idx])
    a = np.concatenate([np.broadcast_to(tx, p.shape), p[r_idx]])
    b = np.concatenate([p, users[s[r_idx]]])
    side = np.concatenate([np.zeros(len(s), dtype=int), np.ones(len(r_idx), dtype=int)])
    leg_state = s[entry]
    leg_cand = c[entry]

    blocked_leg = _building_hits(a, b, owner[leg_cand], scene)
    todo = np.nonzero(~blocked_leg)[0]
    blocked_leg[todo] |= _fleet_hits(
        a[todo], b[todo], times[leg_state[todo]], leg_state[todo] // CULL_CHUNK,
        leg_cand[todo] * 2 + side[todo], 2 * C, scene,
    )
    blocked = np.zeros(len(s), dtype=bool)
    blocked[entry[blocked_leg]] = True

    keep = ~blocked
    s, c, p = s[keep], c[keep], p[keep]
    n_refl = (owner[c] >= 0).astype(int)
    d_len = length[s, c]
    lam = radio.wavelength
    gain = (lam / (4.0 * np.pi * d_len)) ** 2 * 10.0 ** (-radio.reflection_loss_db * n_refl / 10.0)
    dep = p - tx
    arr = np.where(n_refl[:, None] > 0, p, tx) - users[s]
    return _RayBatch(
        state=s,
        candidate=c,
        gain=gain,
        departure_az=np.arctan2(dep[:, 1], dep[:, 0]),
        departure_el=np.arctan2(dep[:, 2], np.hypot(dep[:, 0], dep[:, 1])),
        arrival_az=np.arctan2(arr[:, 1], arr[:, 0]),
        arrival_el=np.arctan2(arr[:, 2], np.hypot(arr[:, 0], arr[:, 1])),
        length=d_len,
        point=p,
        n_refl=n_refl,
    )


def _ap_snr(scene: Scene, ap: int, users: np.ndarray, times: np.ndarray, radio: RadioParams) -> np.ndarray:
    """Per-beam SNR in dB of one mmAP, shape (S, M)."""
    site = scene.aps[ap]
    cb = site.codebook
    rays = _trace(scene, ap, users, times, radio)
    rel = np.rad2deg(rays.departure_az) - site.boresight_deg
    g_beam = 10.0 ** (cb.gain_db(rel, np.rad2deg(rays.departure_el)) / 10.0)
    power = np.zeros((len(users), cb.n_beams))
    np.add.at(power, rays.state, rays.gain[:, None] * g_beam)
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(10.0 ** (radio.tx_power_dbm / 10.0) * power) - radio.noise_dbm
    return np.maximum(snr, radio.snr_floor_db)


def _beam_snr_batch(scene: Scene, users, times, radio: RadioParams) -> np.ndarray:
    """Per-beam SNR in dB for every state and mmAP, shape (S, N, M)."""
    users = np.asarray(users, dtype=float).reshape(-1, 3)
    times = np.asarray(times, dtype=float).reshape(-1)
    return np.stack([_ap_snr(scene, ap, users, times, radio) for ap in range(scene.n_aps)], axis=1)


def _lb_snr_batch(scene: Scene, users, radio: RadioParams) -> np.ndarray:
    users = np.asarray(users, dtype=float).reshape(-1, 3)
    d = np.maximum(np.linalg.norm(users - scene.lb.position, axis=-1), radio.lb_reference_distance_m)
    lam = SPEED_OF_LIGHT / radio.lb_frequency_hz
    pl_ref = 20.0 * np.log10(4.0 * np.pi * radio.lb_reference_distance_m / lam)
    pl = pl_ref + 10.0 * radio.lb_path_loss_exponent * np.log10(d / radio.lb_reference_distance_m)
    return radio.lb_tx_power_dbm - pl - radio.noise_dbm


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------


def _check_ap(scene: Scene, ap_index: int) -> int:
    if not 1 <= ap_index <= scene.n_aps:
        raise ValueError(f"ap_index must be in 1..{scene.n_aps}, got {ap_index}")
    return ap_index - 1


def trace_rays(ap_index: int, user_pos, scene: Scene, radio: RadioParams = RadioParams()) -> list[Ray]:
    """Unblocked LOS and single-bounce rays between mmAP ``ap_index`` and the user."""
    ap = _check_ap(scene, ap_index)
    user = np.asarray(user_pos, dtype=float)
    rays = _trace(scene, ap, user[None], np.array([scene.time]), radio)
    tx = tuple(scene.aps[ap].position.tolist())
    out = []
    for i in range(len(rays.gain)):
        if rays.n_refl[i]:
            verts = (tx, tuple(rays.point[i].tolist()), tuple(user.tolist()))
            sign = -1.0
        else:
            verts = (tx, tuple(user.tolist()))
            sign = 1.0
        phase = -2.0 * np.pi * rays.length[i] / radio.wavelength
        alpha = sign * np.sqrt(rays.gain[i]) * np.exp(1j * phase)
        out.append(Ray(ap_index, verts, float(rays.gain[i]), float(rays.departure_az[i]), float(rays.departure_el[i]),
                       float(rays.arrival_az[i]), float(rays.arrival_el[i]), complex(alpha)))
    return out


def snr_per_beam(ap_index: int, user_pos, scene: Scene, radio: RadioParams = RadioParams()) -> np.ndarray:
    """SNR in dB on each of the M beams of one mmAP; fully blocked links sit at the floor."""
    ap = _check_ap(scene, ap_index)
    users = np.asarray(user_pos, dtype=float).reshape(1, 3)
    return _ap_snr(scene, ap, users, np.array([scene.time]), radio)[0]


def lb_snr(user_pos, scene: Scene, radio: RadioParams = RadioParams()) -> float:
    """Log-distance path loss at the low band; the low band is never blocked."""
    return float(_lb_snr_batch(scene, user_pos, radio)[0])


def _slot_of(time: float, slot_duration: float) -> int:
    return int(round(time / slot_duration))


def align_and_measure(scene: Scene, radio: RadioParams = RadioParams(), slot_duration: float = 1e-3) -> MeasurementVector:
    user = scene.user_position
    snr = _beam_snr_batch(scene, user[None], np.array([scene.time]), radio)[0]
    return MeasurementVector(snr, lb_snr(user, scene, radio), user[:2].copy(), _slot_of(scene.time, slot_duration))


def _slot_times(t0: float, n: int, dt: float) -> np.ndarray:
    # repeated addition, matching n successive calls to advance()
    out = np.empty(n + 1)
    t = t0
    out[0] = t
    for k in range(1, n + 1):
        t = t + dt
        out[k] = t
    return out


def realize_channel(scene: Scene, K: int, slot_duration: float = 1e-3, radio: RadioParams = RadioParams(),
                    gamma: float = 10.0) -> tuple[ChannelRealization, Scene]:
    """Genie channel for slots 1..K after an alignment at the current state.

    Returns the realization and the scene advanced by K slots.
    """
    batch = simulate_windows(scene, 1, K, slot_duration, radio, gamma)
    return ChannelRealization(batch.g[0], batch.best_beam[0]), batch.scene


@dataclass
class WindowBatch:
    snr_db: np.ndarray  # (W, N, M) at alignment
    lb_snr_db: np.ndarray  # (W,)
    position: np.ndarray  # (W, 2)
    slot: np.ndarray  # (W,)
    best_beam: np.ndarray  # (W, N)
    g: np.ndarray  # (W, N+1, K)
    scene: Scene  # state after the last slot

    def __len__(self) -> int:
        return len(self.g)

    def measurement(self, w: int) -> MeasurementVector:
        return MeasurementVector(self.snr_db[w], float(self.lb_snr_db[w]), self.position[w], int(self.slot[w]),
                                 self.best_beam[w])

    def realization(self, w: int) -> ChannelRealization:
        return ChannelRealization(self.g[w], self.best_beam[w])


def simulate_windows(scene: Scene, n_windows: int, K: int, slot_duration: float = 1e-3,
                     radio: RadioParams = RadioParams(), gamma: float = 10.0) -> WindowBatch:
    """Back-to-back scheduling windows: align at k=0, then K slots of genie channel.

    Alignment of window w+1 happens at the state of slot K of window w.
    Equivalent to alternating :func:`align_and_measure` and
    :func:`realize_channel`, but evaluated in one batch.
    """
    if K < 1 or n_windows < 1:
        raise ValueError("need K >= 1 and at least one window")
    n_steps = n_windows * K
    times = _slot_times(scene.time, n_steps, slot_duration)
    users = scene.user_positions(times)
    snr = _beam_snr_batch(scene, users, times, radio)  # (S, N, M)
    lb = _lb_snr_batch(scene, users, radio)

    align = np.arange(n_windows) * K
    best = best_beams(snr[align])  # (W, N)
    slots = align[:, None] + np.arange(1, K + 1)[None, :]  # (W, K)
    N = scene.n_aps
    on_beam = snr[slots[:, :, None], np.arange(N)[None, None, :], best[:, None, :]]  # (W, K, N)
    g = np.empty((n_windows, N + 1, K), dtype=np.uint8)
    g[:, 0, :] = lb[slots] >= gamma
    g[:, 1:, :] = np.transpose(on_beam >= gamma, (0, 2, 1))

    # times[-1] is the clock after n_steps calls to advance()
    end = dataclasses.replace(scene, time=float(times[-1]))
    return WindowBatch(
        snr_db=snr[align],
        lb_snr_db=lb[align],
        position=users[align, :2],
        slot=np.array([_slot_of(t, slot_duration) for t in times[align]]),
        best_beam=best,
        g=g,
        scene=end,
    )


# --------------------------------------------------------------------------
# CSV fixtures
# --------------------------------------------------------------------------


def write_g_csv(path, g: np.ndarray) -> None:
    """One row per link (LB-BS first), one column per slot."""
    g = np.asarray(g)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["link"] + [f"k{k}" for k in range(1, g.shape[1] + 1)])
        for i, row in enumerate(g):
            w.writerow([i] + [int(v) for v in row])


def read_g_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[int(v) for v in r[1:]] for r in rows], dtype=np.uint8)


def write_measurements_csv(path, measurements: list[MeasurementVector]) -> None:
    if not measurements:
        raise ValueError("no measurements to write")
    N, M = measurements[0].snr_db.shape
    header = ["slot", "x", "y", "lb_snr_db"] + [f"snr_ap{i + 1}_b{m:02d}" for i in range(N) for m in range(M)]
    header += [f"best_ap{i + 1}" for i in range(N)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for mv in measurements:
            w.writerow([mv.slot, repr(float(mv.position[0])), repr(float(mv.position[1])), repr(float(mv.lb_snr_db))]
                       + [repr(float(v)) for v in mv.mmwave] + [int(b) for b in mv.best_beam])
