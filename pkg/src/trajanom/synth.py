"""Seeded synthetic pedestrian scenes: straight-line walkers with Gaussian
heading/center jitter, plus injected kinematic anomalies.

Randomness comes from splitmix64 (the 64-bit mixer with increment
0x9E3779B97F4A7C15) with gaussians via Box-Muller, so any implementation can
reproduce fixtures bit-exactly; emitted files carry the generator identity in
a header comment.

Anomalies modify the designated pedestrian's kinematics over a half-open
frame interval:

* ``sprint``      -- step speed x4
* ``reversal``    -- heading rotated 180 degrees
* ``zigzag``      -- heading alternates +/-75 degrees every 3 frames
* ``freeze-dash`` -- speed 0 for the first half of the interval, then x5

The modifiers draw no randomness of their own, so a scene and its
anomaly-free twin (same seed, empty anomaly list) share the identical jitter
stream and differ only where kinematics differ. Labels mark a frame 1 iff
any anomaly interval covers it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

from .errors import ConfigError
from .ingest import LabelSeries, Track
from .trajgeom import Box

__all__ = [
    "RNG_IDENTITY",
    "SplitMix64",
    "Anomaly",
    "SceneSpec",
    "ANOMALY_KINDS",
    "generate",
    "build_suite",
]

RNG_IDENTITY = "splitmix64+box-muller"

ANOMALY_KINDS = ("sprint", "reversal", "zigzag", "freeze-dash")

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Portable 64-bit generator; state advances by 0x9E3779B97F4A7C15."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64
        self._spare: float | None = None

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] (inclusive)."""
        if hi < lo:
            raise ConfigError(f"empty integer range [{lo}, {hi}]")
        return lo + int(self.uniform() * (hi - lo + 1))

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Standard Box-Muller; the spare draw is cached like random.gauss."""
        if self._spare is not None:
            z = self._spare
            self._spare = None
            return mu + sigma * z
        u1 = self.uniform()
        if u1 <= 0.0:
            u1 = 2.0 ** -53
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return mu + sigma * (r * math.cos(2.0 * math.pi * u2))


@dataclass(frozen=True)
class Anomaly:
    """Kinematic anomaly over frames [start, start+duration)."""

    kind: str
    pedestrian: int
    start: int
    duration: int

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ConfigError(
                f"unknown anomaly kind {self.kind!r} (expected one of {ANOMALY_KINDS})"
            )
        if self.duration < 1:
            raise ConfigError(f"anomaly duration must be >= 1, got {self.duration}")
        if self.start < 0:
            raise ConfigError(f"anomaly start must be >= 0, got {self.start}")

    @property
    def end(self) -> int:
        return self.start + self.duration

    def covers(self, frame: int) -> bool:
        return self.start <= frame < self.end


@dataclass(frozen=True)
class SceneSpec:
    """Everything that determines one scene; generation is a pure function
    of this value."""

    seed: int
    video_id: str = "scene"
    frame_count: int = 300
    n_pedestrians: int = 6
    frame_width: float = 640.0
    frame_height: float = 480.0
    speed_min: float = 1.2
    speed_max: float = 2.6
    heading_jitter_std: float = 0.06
    center_jitter_std: float = 0.5
    box_w_min: float = 14.0
    box_w_max: float = 22.0
    box_h_min: float = 34.0
    box_h_max: float = 52.0
    spawn_inset_frac: float = 0.15
    anomalous_exit_buffer: int | None = None
    anomalies: tuple[Anomaly, ...] = ()

    def __post_init__(self):
        if self.frame_count < 1:
            raise ConfigError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.n_pedestrians < 1:
            raise ConfigError(f"n_pedestrians must be >= 1, got {self.n_pedestrians}")
        for lo, hi, what in (
            (self.speed_min, self.speed_max, "speed"),
            (self.box_w_min, self.box_w_max, "box_w"),
            (self.box_h_min, self.box_h_max, "box_h"),
        ):
            if not (0 < lo <= hi):
                raise ConfigError(f"invalid {what} range [{lo}, {hi}]")
        if self.heading_jitter_std < 0 or self.center_jitter_std < 0:
            raise ConfigError("jitter stds must be >= 0")
        if not 0 <= self.spawn_inset_frac < 0.5:
            raise ConfigError(
                f"spawn_inset_frac must be in [0, 0.5), got {self.spawn_inset_frac}"
            )
        if self.anomalous_exit_buffer is not None and self.anomalous_exit_buffer < 0:
            raise ConfigError(
                f"anomalous_exit_buffer must be >= 0, got {self.anomalous_exit_buffer}"
            )
        if self.box_w_max >= self.frame_width / 2 or self.box_h_max >= self.frame_height / 2:
            raise ConfigError("boxes must be small relative to the frame")
        for anomaly in self.anomalies:
            if not 0 <= anomaly.pedestrian < self.n_pedestrians:
                raise ConfigError(
                    f"anomaly references pedestrian {anomaly.pedestrian}, "
                    f"but the scene has {self.n_pedestrians}"
                )
            if anomaly.end > self.frame_count:
                raise ConfigError(
                    f"anomaly frames [{anomaly.start}, {anomaly.end}) exceed "
                    f"the {self.frame_count}-frame scene"
                )

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "SceneSpec":
        """Build a spec from plain key-value text config entries.

        Anomalies are given as ``kind:pedestrian:start:duration`` items
        separated by ``;`` under the ``anomalies`` key.
        """
        kwargs = {}
        known = {f.name: f.type for f in fields(cls)}
        for key, raw in mapping.items():
            if key == "anomalies":
                kwargs[key] = parse_anomaly_list(raw)
                continue
            if key not in known:
                raise ConfigError(f"unknown scene key {key!r}")
            if key == "video_id":
                kwargs[key] = raw
            elif key in ("seed", "frame_count", "n_pedestrians", "anomalous_exit_buffer"):
                try:
                    kwargs[key] = int(raw)
                except ValueError:
                    raise ConfigError(f"scene key {key}={raw!r} is not an integer") from None
            else:
                try:
                    kwargs[key] = float(raw)
                except ValueError:
                    raise ConfigError(f"scene key {key}={raw!r} is not a number") from None
        if "seed" not in kwargs:
            raise ConfigError("scene config must set a seed")
        return cls(**kwargs)


def parse_anomaly_list(raw: str) -> tuple[Anomaly, ...]:
    """Parse ``kind:ped:start:duration`` items separated by ``;`` (or ``,``)."""
    items = []
    for chunk in raw.replace(",", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 4:
            raise ConfigError(
                f"anomaly {chunk!r} is not of the form kind:pedestrian:start:duration"
            )
        kind = parts[0].strip()
        try:
            ped, start, duration = (int(p) for p in parts[1:])
        except ValueError:
            raise ConfigError(f"anomaly {chunk!r} has non-integer fields") from None
        items.append(Anomaly(kind, ped, start, duration))
    return tuple(items)


@dataclass
class _Walker:
    x: float
    y: float
    heading: float
    speed: float
    w: float
    h: float
    anomalies: tuple[Anomaly, ...] = field(default_factory=tuple)


def _zigzag_sign(frame: int, anomaly: Anomaly) -> float:
    return 1.0 if ((frame - anomaly.start) // 3) % 2 == 0 else -1.0


def _step_kinematics(walker: _Walker, frame: int, jitter: float) -> tuple[float, float]:
    """(heading, speed) for this frame's step after anomaly modifiers."""
    heading = walker.heading + jitter
    speed = walker.speed
    for anomaly in walker.anomalies:
        if not anomaly.covers(frame):
            continue
        if anomaly.kind == "sprint":
            speed = walker.speed * 4.0
        elif anomaly.kind == "reversal":
            heading += math.pi
        elif anomaly.kind == "zigzag":
            heading += _zigzag_sign(frame, anomaly) * math.radians(75.0)
        elif anomaly.kind == "freeze-dash":
            half = anomaly.duration // 2
            speed = 0.0 if frame - anomaly.start < half else walker.speed * 5.0
    return heading, speed


def _reflect(pos: float, lo: float, hi: float) -> tuple[float, bool]:
    """Reflect pos into [lo, hi]; returns (new_pos, flipped?)."""
    flipped = False
    # interval is wide relative to any step, but loop in case of extremes
    for _ in range(64):
        if pos < lo:
            pos = 2 * lo - pos
            flipped = not flipped
        elif pos > hi:
            pos = 2 * hi - pos
            flipped = not flipped
        else:
            return pos, flipped
    return min(max(pos, lo), hi), flipped


def generate(spec: SceneSpec) -> tuple[list[Track], LabelSeries]:
    """Simulate one scene; returns per-pedestrian tracks and frame labels.

    Deterministic: identical specs produce identical output, and the track
    writer's repr-based floats keep the files byte-identical.
    """
    rng = SplitMix64(spec.seed)
    walkers: list[_Walker] = []
    for ped in range(spec.n_pedestrians):
        w = rng.uniform_in(spec.box_w_min, spec.box_w_max)
        h = rng.uniform_in(spec.box_h_min, spec.box_h_max)
        # spawn away from the walls so early frames are reflection-free
        margin_x = w / 2 + 4 * spec.center_jitter_std + 1.0
        margin_y = h / 2 + 4 * spec.center_jitter_std + 1.0
        inset_x = margin_x + spec.spawn_inset_frac * spec.frame_width
        inset_y = margin_y + spec.spawn_inset_frac * spec.frame_height
        walkers.append(
            _Walker(
                x=rng.uniform_in(inset_x, spec.frame_width - inset_x),
                y=rng.uniform_in(inset_y, spec.frame_height - inset_y),
                heading=rng.uniform_in(0.0, 2.0 * math.pi),
                speed=rng.uniform_in(spec.speed_min, spec.speed_max),
                w=w,
                h=h,
                anomalies=tuple(a for a in spec.anomalies if a.pedestrian == ped),
            )
        )

    # pedestrians with anomalies may leave the scene shortly after their
    # last anomaly (set anomalous_exit_buffer); simulation and RNG draws
    # continue unchanged so paired scenes keep identical jitter streams,
    # only the emission stops.
    last_emitted: list[int] = []
    for walker in walkers:
        if spec.anomalous_exit_buffer is not None and walker.anomalies:
            leave = max(a.end for a in walker.anomalies) - 1 + spec.anomalous_exit_buffer
            last_emitted.append(min(spec.frame_count - 1, leave))
        else:
            last_emitted.append(spec.frame_count - 1)

    entries: list[list[tuple[int, Box]]] = [[] for _ in walkers]
    for frame in range(spec.frame_count):
        for ped, walker in enumerate(walkers):
            if frame > 0:
                jitter = rng.gauss(0.0, spec.heading_jitter_std) if spec.heading_jitter_std > 0 else 0.0
                heading, speed = _step_kinematics(walker, frame, jitter)
                walker.x += speed * math.cos(heading)
                walker.y += speed * math.sin(heading)
                margin_x = walker.w / 2 + 4 * spec.center_jitter_std + 1.0
                margin_y = walker.h / 2 + 4 * spec.center_jitter_std + 1.0
                walker.x, flip_x = _reflect(walker.x, margin_x, spec.frame_width - margin_x)
                walker.y, flip_y = _reflect(walker.y, margin_y, spec.frame_height - margin_y)
                if flip_x:
                    walker.heading = math.pi - walker.heading
                if flip_y:
                    walker.heading = -walker.heading
            cx = walker.x + (rng.gauss(0.0, spec.center_jitter_std) if spec.center_jitter_std > 0 else 0.0)
            cy = walker.y + (rng.gauss(0.0, spec.center_jitter_std) if spec.center_jitter_std > 0 else 0.0)
            cx = min(max(cx, walker.w / 2), spec.frame_width - walker.w / 2)
            cy = min(max(cy, walker.h / 2), spec.frame_height - walker.h / 2)
            if frame <= last_emitted[ped]:
                entries[ped].append((frame, Box(cx, cy, walker.w, walker.h)))

    tracks = [
        Track(video_id=spec.video_id, pedestrian_id=ped, entries=tuple(rows))
        for ped, rows in enumerate(entries)
    ]
    labels = tuple(
        1 if any(a.covers(frame) for a in spec.anomalies) else 0
        for frame in range(spec.frame_count)
    )
    return tracks, LabelSeries(video_id=spec.video_id, labels=labels)


def build_suite(
    master_seed: int,
    num_videos: int = 20,
    frame_count: int = 300,
    n_pedestrians: int = 6,
    anomalies_per_video: int = 2,
    kinds: tuple[str, ...] = ("sprint", "reversal", "zigzag"),
    duration_range: tuple[int, int] = (8, 10),
    **overrides,
) -> list[SceneSpec]:
    """Derive a deterministic multi-video benchmark from one master seed.

    Each video gets its own derived seed plus ``anomalies_per_video``
    anomalies on distinct pedestrians, with kinds cycling through ``kinds``
    and start frames kept away from the video edges.

    The suite defaults differ from single-scene defaults: a wide canvas with
    deep spawn insets keeps normal walkers away from the borders for the
    whole video, so border reflections (whose kinks look like short
    direction anomalies to any extrapolating predictor) stay out of the
    normal background.
    """
    if num_videos < 1:
        raise ConfigError(f"num_videos must be >= 1, got {num_videos}")
    if anomalies_per_video > n_pedestrians:
        raise ConfigError("cannot give more pedestrians anomalies than exist")
    scene_kwargs = {
        "frame_width": 1600.0,
        "frame_height": 1600.0,
        "speed_min": 0.95,
        "speed_max": 1.45,
        "heading_jitter_std": 0.05,
        "center_jitter_std": 0.45,
        "spawn_inset_frac": 0.32,
        "anomalous_exit_buffer": 0,
    }
    scene_kwargs.update(overrides)
    seeder = SplitMix64(master_seed)
    specs: list[SceneSpec] = []
    kind_cursor = 0
    for i in range(num_videos):
        video_seed = seeder.next_u64()
        rng = SplitMix64(video_seed ^ 0xA5A5A5A5A5A5A5A5)
        peds = list(range(n_pedestrians))
        anomalies = []
        for _ in range(anomalies_per_video):
            ped = peds.pop(rng.randint(0, len(peds) - 1))
            kind = kinds[kind_cursor % len(kinds)]
            kind_cursor += 1
            duration = rng.randint(duration_range[0], duration_range[1])
            lo = max(0, frame_count // 10)
            hi = frame_count - duration - max(1, frame_count // 10)
            start = rng.randint(lo, max(lo, hi))
            anomalies.append(Anomaly(kind, ped, start, duration))
        specs.append(
            SceneSpec(
                seed=video_seed,
                video_id=f"v{i:02d}",
                frame_count=frame_count,
                n_pedestrians=n_pedestrians,
                anomalies=tuple(anomalies),
                **scene_kwargs,
            )
        )
    return specs
