"""2D driving simulator in track coordinates.

The ego vehicle is a point mass holding (arc length, lateral offset, world
heading, local velocity). Commanded local accelerations, capped to a
friction circle, integrate at a fine physics step; the body yaws to align
with the velocity vector at a fixed time constant, which reproduces the
centripetal relation (turn rate ~ a_y / v) while keeping a small lateral
slip velocity. Other vehicles cruise at constant speed along lane centers.
Observations follow the range-sensor + nearby-vehicle layout used by the
driving tasks; all quantities are normalized onto roughly [-1, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rewards import TerminalKind
from .track import Track, wrap_angle

DEFAULT_BEAMS_DEG = (-90.0, -80.0, -60.0, -40.0, -20.0, 0.0,
                     20.0, 40.0, 60.0, 80.0, 90.0)


@dataclass(frozen=True)
class EnvConfig:
    physics_dt: float = 0.02
    substeps: int = 5            # agent period = physics_dt * substeps
    accel_cap: float = 40.0      # friction-circle limit on applied accel, m/s^2
    ax_max: float = 40.0         # actor command scaling, m/s^2 per unit action
    ay_max: float = 50.0
    max_episode_steps: int = 4000
    lap_target: int = 1
    sensing_range: float = 200.0
    max_sensed: int = 10
    beam_angles_deg: tuple = DEFAULT_BEAMS_DEG
    traffic_in_obs: bool = True
    align_tau: float = 0.2       # s, yaw-to-velocity alignment time constant
    car_length: float = 4.5
    car_width: float = 1.8
    speed_norm_kmh: float = 300.0
    start_s: float = 0.0
    start_s_jitter: float = 0.0  # uniform [0, jitter) added when randomizing
    start_lane: int = -1         # -1: track center, else lane index
    start_speed_kmh: tuple = (100.0, 100.0)

    def __post_init__(self):
        if self.physics_dt <= 0.0 or self.substeps < 1:
            raise ValueError("need physics_dt > 0 and substeps >= 1")
        if self.accel_cap <= 0.0:
            raise ValueError("accel_cap must be > 0")
        if self.ax_max < 0.0 or self.ay_max < 0.0:
            raise ValueError("action scaling must be >= 0")
        if self.max_episode_steps < 1 or self.lap_target < 1:
            raise ValueError("need max_episode_steps >= 1 and lap_target >= 1")
        if self.sensing_range <= 0.0 or self.max_sensed < 0:
            raise ValueError("bad sensing configuration")
        if self.start_speed_kmh[0] > self.start_speed_kmh[1]:
            raise ValueError("start_speed_kmh range reversed")

    @property
    def agent_period(self) -> float:
        return self.physics_dt * self.substeps

    @property
    def obs_dim(self) -> int:
        n = 4 + len(self.beam_angles_deg)
        if self.traffic_in_obs:
            n += 3 * self.max_sensed
        return n


@dataclass(frozen=True)
class TrafficVehicleSpec:
    lane: int
    offset: float        # meters ahead of ego start (may be negative)
    speed_kmh: float


@dataclass(frozen=True)
class TrafficConfig:
    enabled: bool = True
    travel_speed_kmh: float = 90.0
    passing_speed_kmh: float = 130.0
    travel_gap: float = 300.0    # nominal spacing between spawned vehicles
    passing_gap: float = 500.0
    spacing_jitter: float = 0.15  # fraction of spacing, drawn per vehicle
    vehicles: tuple = ()          # explicit TrafficVehicleSpec placements


@dataclass(frozen=True)
class VehicleState:
    s: float
    p: float             # lateral fraction: -1 left edge, +1 right edge
    heading_err: float   # rad, relative to the track tangent
    v_x: float           # m/s, vehicle-local forward
    v_y: float           # m/s, vehicle-local lateral (positive left)


@dataclass
class TrafficVehicle:
    s: float
    lane: int
    lat: float           # meters left of centerline
    speed: float         # m/s, constant


@dataclass(frozen=True)
class AccelCommand:
    ax: float
    ay: float


@dataclass(frozen=True)
class Observation:
    angle: float
    v_x: float
    v_y: float
    track_position: float
    beams: np.ndarray
    others_xy: np.ndarray        # (K, 2), normalized local offsets
    others_rel_speed: np.ndarray  # (K,)
    vector: np.ndarray           # flat normalized input vector


@dataclass(frozen=True)
class Transition:
    state: VehicleState
    action: AccelCommand
    next_state: VehicleState
    terminal: TerminalKind
    features: dict


def clamp_accel(ax: float, ay: float, cap: float) -> tuple[float, float]:
    """Scale the acceleration vector onto the friction circle if needed."""
    norm = math.hypot(ax, ay)
    if norm > cap:
        k = cap / norm
        return ax * k, ay * k
    return ax, ay


def risk_feature(others_local) -> float:
    """Collision risk: sum of exp(-(x^2/400 + y^2/3)) over nearby vehicles."""
    total = 0.0
    for x, y in others_local:
        total += math.exp(-(x * x / 400.0 + y * y / 3.0))
    return total


class DrivingEnv:
    """Single-ego driving episode generator. Not thread-safe; one per worker."""

    def __init__(self, track: Track, cfg: EnvConfig,
                 traffic: TrafficConfig | None = None, seed: int = 0):
        self.track = track
        self.cfg = cfg
        self.traffic_cfg = traffic if traffic is not None else TrafficConfig(enabled=False)
        self.rng = np.random.default_rng(seed)
        self._beam_rad = np.asarray(cfg.beam_angles_deg, dtype=float) * (math.pi / 180.0)
        self._v_norm = cfg.speed_norm_kmh / 3.6
        self.traffic: list[TrafficVehicle] = []
        self._episode = -1
        self.reset()

    # ------------------------------------------------------------ lifecycle

    def reset(self, randomize_start: bool = True) -> Observation:
        cfg = self.cfg
        self._episode += 1
        s = cfg.start_s
        if randomize_start and cfg.start_s_jitter > 0.0:
            s += float(self.rng.uniform(0.0, cfg.start_s_jitter))
        s = self.track._wrap_s(s)
        lat = (self.track.lane_center_lat(cfg.start_lane)
               if cfg.start_lane >= 0 else 0.0)
        lo, hi = cfg.start_speed_kmh
        speed = lo if lo == hi else float(self.rng.uniform(lo, hi))

        self._s = s
        self._lat = lat
        self._heading = self.track.tangent_at(s)
        self._vx = speed / 3.6
        self._vy = 0.0
        self._seg_hint = self.track.segment_index(s)
        self._progress = 0.0
        self._steps = 0
        self._time = 0.0
        self._terminal = TerminalKind.NON_TERMINAL
        self._truncated = False
        self._collided = False
        self._sense_stamp = -1
        self._sense_cache = ()
        self._spawn_traffic()
        return self.observe()

    def _spawn_traffic(self) -> None:
        self.traffic = []
        tc = self.traffic_cfg
        if not tc.enabled:
            return
        track = self.track
        if tc.vehicles:
            for v in tc.vehicles:
                self.traffic.append(TrafficVehicle(
                    s=track._wrap_s(self._s + v.offset),
                    lane=v.lane,
                    lat=track.lane_center_lat(v.lane),
                    speed=v.speed_kmh / 3.6))
            return
        for lane, speed_kmh, gap in ((0, tc.travel_speed_kmh, tc.travel_gap),
                                     (1, tc.passing_speed_kmh, tc.passing_gap)):
            if lane >= track.lanes:
                continue
            n = int(track.length // gap)
            if n < 1:
                continue
            spacing = track.length / n
            for k in range(n):
                jitter = 0.0
                if tc.spacing_jitter > 0.0:
                    jitter = float(self.rng.uniform(-tc.spacing_jitter,
                                                    tc.spacing_jitter)) * spacing
                self.traffic.append(TrafficVehicle(
                    s=track._wrap_s(self._s + (k + 0.5) * spacing + jitter),
                    lane=lane,
                    lat=track.lane_center_lat(lane),
                    speed=speed_kmh / 3.6))

    # ------------------------------------------------------------ state

    @property
    def p(self) -> float:
        return -self._lat / self.track.half_width

    @property
    def heading_err(self) -> float:
        return wrap_angle(self._heading - self.track.tangent_at(self._s, self._seg_hint))

    def snapshot(self) -> VehicleState:
        return VehicleState(self._s, self.p, self.heading_err, self._vx, self._vy)

    def world_pose(self) -> tuple[float, float, float]:
        x, y = self.track.position(self._s, self._lat)
        return x, y, self._heading

    @property
    def terminal(self) -> TerminalKind:
        return self._terminal

    @property
    def truncated(self) -> bool:
        return self._truncated

    @property
    def steps(self) -> int:
        return self._steps

    @property
    def time(self) -> float:
        return self._time

    @property
    def episode(self) -> int:
        return self._episode

    @property
    def collided(self) -> bool:
        return self._collided

    def set_state(self, s: float, p: float, heading_err: float,
                  v_x: float, v_y: float) -> None:
        """Force the ego state (used by replay); keeps traffic untouched."""
        self._s = self.track._wrap_s(s)
        self._lat = -p * self.track.half_width
        self._seg_hint = self.track.segment_index(self._s)
        self._heading = wrap_angle(
            self.track.tangent_at(self._s, self._seg_hint) + heading_err)
        self._vx = v_x
        self._vy = v_y
        self._sense_stamp = -1

    # ------------------------------------------------------------ stepping

    def step(self, cmd: AccelCommand) -> Transition:
        """Advance one agent period; returns the transition with features.

        Raises:
            RuntimeError: called on an already-terminal episode.
        """
        if self._terminal is not TerminalKind.NON_TERMINAL:
            raise RuntimeError("step() called after a terminal transition")
        if self._truncated:
            raise RuntimeError("step() called after episode truncation")
        if not (math.isfinite(cmd.ax) and math.isfinite(cmd.ay)):
            raise ValueError(f"non-finite acceleration command {cmd!r}")

        cfg = self.cfg
        track = self.track
        state0 = self.snapshot()
        ax, ay = clamp_accel(cmd.ax, cmd.ay, cfg.accel_cap)
        dt = cfg.physics_dt
        align = dt / cfg.align_tau
        if align > 1.0:
            align = 1.0

        s = self._s
        lat = self._lat
        heading = self._heading
        vx = self._vx
        vy = self._vy
        hint = self._seg_hint
        terminal = TerminalKind.NON_TERMINAL
        segs = track._segs

        for _ in range(cfg.substeps):
            vx += ax * dt
            vy += ay * dt
            if vx < 0.0:
                vx = 0.0
            if vx > 1.0:
                # yaw toward the velocity vector; the local velocity rotates
                # back by the same angle since it is fixed in the world frame
                slip = math.atan2(vy, vx)
                dpsi = slip * align
                heading += dpsi
                c, sn = math.cos(dpsi), math.sin(dpsi)
                vx, vy = vx * c + vy * sn, vy * c - vx * sn
            else:
                vy *= (1.0 - align) if align < 1.0 else 0.0

            hint = track.segment_index(s, hint)
            seg = segs[hint]
            kappa = seg.kappa
            theta_t = seg.h0 + kappa * (s - seg.s0)
            theta_e = wrap_angle(heading - theta_t)
            cos_e = math.cos(theta_e)
            sin_e = math.sin(theta_e)
            v_tan = vx * cos_e - vy * sin_e
            v_nrm = vx * sin_e + vy * cos_e
            denom = 1.0 - lat * kappa
            if denom < 0.1:
                denom = 0.1
            ds = (v_tan / denom) * dt
            s = track._wrap_s(s + ds)
            self._progress += ds
            lat += v_nrm * dt
            self._time += dt

            for veh in self.traffic:
                veh.s = track._wrap_s(veh.s + veh.speed * dt)

            p = -lat / track.half_width
            if p < -1.0 or p > 1.0:
                terminal = TerminalKind.FAILURE
                break
            if self.traffic and self._check_collision(s, lat):
                terminal = TerminalKind.FAILURE
                self._collided = True
                break
            if track.closed:
                if self._progress >= cfg.lap_target * track.length:
                    terminal = TerminalKind.GOAL
                    break
            elif s >= track.length:
                terminal = TerminalKind.GOAL
                break

        self._s = s
        self._lat = lat
        self._heading = wrap_angle(heading)
        self._vx = vx
        self._vy = vy
        self._seg_hint = track.segment_index(s, hint)
        self._steps += 1
        self._terminal = terminal
        self._sense_stamp = -1
        if terminal is TerminalKind.NON_TERMINAL and self._steps >= cfg.max_episode_steps:
            self._truncated = True

        next_state = self.snapshot()
        features = {
            "velocity": vx * 3.6,
            "track_position": next_state.p,
            "accel_x": cmd.ax,
            "accel_y": cmd.ay,
            "risk": risk_feature(self.sensed_offsets()),
        }
        return Transition(state0, cmd, next_state, terminal, features)

    def _check_collision(self, s: float, lat: float) -> bool:
        # Rectangles are axis-aligned in the lane frame, so overlap reduces
        # to center deltas under the sums of the half-extents.
        track = self.track
        len_sum = self.cfg.car_length
        wid_sum = self.cfg.car_width
        for veh in self.traffic:
            if abs(lat - veh.lat) < wid_sum:
                ds = track.delta_s(veh.s, s)
                if -len_sum < ds < len_sum:
                    return True
        return False

    # ------------------------------------------------------------ sensing

    def _sense(self):
        """(x_local, y_local, vehicle) triples of sensed vehicles, nearest first."""
        if self._sense_stamp == self._steps:
            return self._sense_cache
        out = []
        if self.traffic:
            track = self.track
            ex, ey = track.position(self._s, self._lat)
            heading = self._heading
            ch, sh = math.cos(heading), math.sin(heading)
            rng2 = self.cfg.sensing_range ** 2
            for veh in self.traffic:
                px, py = track.position(veh.s, veh.lat)
                dx = px - ex
                dy = py - ey
                d2 = dx * dx + dy * dy
                if d2 <= rng2:
                    xl = ch * dx + sh * dy
                    yl = -sh * dx + ch * dy
                    out.append((d2, xl, yl, veh))
            out.sort(key=lambda t: t[0])
            out = out[: self.cfg.max_sensed]
        self._sense_cache = tuple((xl, yl, veh) for _, xl, yl, veh in out)
        self._sense_stamp = self._steps
        return self._sense_cache

    def sensed_offsets(self) -> list[tuple[float, float]]:
        """Raw local (x, y) offsets in meters of currently sensed vehicles."""
        return [(xl, yl) for xl, yl, _ in self._sense()]

    def observe(self) -> Observation:
        cfg = self.cfg
        track = self.track
        theta_e = self.heading_err
        p = self.p

        if -1.0 <= p <= 1.0:
            origin = track.position(self._s, self._lat)
            beams = track.raycast(origin, self._heading + self._beam_rad,
                                  cfg.sensing_range)
        else:
            beams = np.zeros(len(self._beam_rad))  # off the track: sensors dark

        k = cfg.max_sensed
        others_xy = np.empty((k, 2))
        others_xy[:, 0] = cfg.sensing_range
        others_xy[:, 1] = 0.0
        others_rel = np.zeros(k)
        if self.traffic and k > 0:
            ch, sh = math.cos(self._heading), math.sin(self._heading)
            vex = self._vx * ch - self._vy * sh
            vey = self._vx * sh + self._vy * ch
            for i, (xl, yl, veh) in enumerate(self._sense()[:k]):
                others_xy[i, 0] = xl
                others_xy[i, 1] = yl
                ht = track.tangent_at(veh.s)
                rvx = veh.speed * math.cos(ht) - vex
                rvy = veh.speed * math.sin(ht) - vey
                others_rel[i] = rvx * ch + rvy * sh  # closing rate, ego axis

        others_xy /= cfg.sensing_range
        others_rel /= self._v_norm
        beams_n = beams / cfg.sensing_range

        parts = [np.array([theta_e / math.pi, self._vx / self._v_norm,
                           self._vy / self._v_norm, p]), beams_n]
        if cfg.traffic_in_obs:
            parts += [others_xy.ravel(), others_rel]
        vec = np.concatenate(parts)
        return Observation(theta_e, self._vx, self._vy, p,
                           beams_n, others_xy, others_rel, vec)
