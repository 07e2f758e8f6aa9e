"""Deterministic rendering of synthetic surveillance clips with exact ground truth."""
from dataclasses import dataclass

import numpy as np

from corpora.domain import Split

from .domain import SHAPE_COLORS, AnomalyKind, SceneSpec


@dataclass
class Track:
    shape: str
    size: float
    channel: int
    positions: np.ndarray   # T x 2, (x, y) centers
    velocities: np.ndarray  # T x 2, displacement from the previous frame
    visible: np.ndarray     # T booleans


def clip_rng(spec: SceneSpec, split: str, clip_index: int) -> np.random.Generator:
    """Per-clip generator; results do not depend on generation order."""
    return np.random.default_rng([spec.seed, 0 if split == Split.TRAIN else 1, clip_index])


def _unit(heading_deg: float) -> np.ndarray:
    theta = np.deg2rad(heading_deg)
    return np.array([np.cos(theta), np.sin(theta)])


def build_tracks(spec: SceneSpec, split: str, clip_index: int, rng: np.random.Generator):
    """Trajectories of every actor of a clip plus the per-frame anomaly kind."""
    frames = spec.frames_per_clip
    injections = spec.anomalies_for(clip_index) if split == Split.TEST else []
    kinds = np.full(frames, AnomalyKind.NONE.value, dtype=object)
    tracks = []

    for actor_index, actor in enumerate(spec.actors):
        heading = actor.heading if actor.heading is not None else rng.uniform(0.0, 360.0)
        start = np.asarray(actor.start, float) if actor.start is not None else rng.uniform(0.0, spec.canvas, 2)
        speeds = np.full(frames, actor.speed, dtype=np.float64)
        for injection in injections:
            if injection.kind == AnomalyKind.SPEED and injection.actor == actor_index:
                speeds[injection.start:injection.end] *= injection.multiplier
        velocities = speeds[:, None] * _unit(heading)[None, :]
        velocities[0] = 0.0
        positions = start[None, :] + np.cumsum(velocities, axis=0)
        tracks.append(Track(
            shape=actor.shape,
            size=actor.size,
            channel=spec.channel(actor.shape),
            positions=positions,
            velocities=velocities,
            visible=np.ones(frames, dtype=bool),
        ))

    for injection in injections:
        kinds[injection.start:injection.end] = injection.kind
        if injection.kind != AnomalyKind.CLASS:
            continue
        heading = injection.heading if injection.heading is not None else rng.uniform(0.0, 360.0)
        position = (
            np.asarray(injection.position, float) if injection.position is not None
            else rng.uniform(0.0, spec.canvas, 2)
        )
        velocity = injection.speed * _unit(heading)
        steps = np.arange(frames) - injection.start
        visible = np.zeros(frames, dtype=bool)
        visible[injection.start:injection.end] = True
        tracks.append(Track(
            shape=injection.shape,
            size=injection.size,
            channel=spec.channel(injection.shape),
            positions=position[None, :] + steps[:, None] * velocity[None, :],
            velocities=np.repeat(velocity[None, :], frames, axis=0),
            visible=visible,
        ))

    if spec.wrap:
        for track in tracks:
            track.positions = np.mod(track.positions, spec.canvas)
    return tracks, kinds


def out_of_canvas(spec: SceneSpec, tracks) -> tuple[int, int] | None:
    """First (track index, frame) whose shape crosses the canvas border."""
    for track_index, track in enumerate(tracks):
        for t in np.flatnonzero(track.visible):
            x, y = track.positions[t]
            if min(x, y) - track.size < 0 or max(x, y) + track.size > spec.canvas - 1:
                return track_index, int(t)
    return None


def shape_mask(shape: str, dx: np.ndarray, dy: np.ndarray, size: float) -> np.ndarray:
    if shape == 'circle':
        return dx ** 2 + dy ** 2 <= size ** 2
    if shape == 'square':
        return np.maximum(np.abs(dx), np.abs(dy)) <= size
    if shape == 'triangle':
        # apex up at dy = -size, base at dy = +size
        return (dy >= -size) & (dy <= size) & (np.abs(dx) <= (dy + size) / 2.0)
    raise ValueError(f'Unknown shape {shape!r}')


def background(spec: SceneSpec) -> np.ndarray:
    """Static textured backdrop shared by every clip of the scene."""
    phases = np.random.default_rng([spec.seed, 2]).uniform(0.0, 2 * np.pi, 2)
    ys, xs = np.mgrid[0:spec.canvas, 0:spec.canvas].astype(np.float64)
    gray = 0.25 + 0.05 * np.sin(xs / 11.0 + phases[0]) * np.cos(ys / 13.0 + phases[1])
    return np.repeat(gray[:, :, None], 3, axis=2)


def render_frame(spec: SceneSpec, tracks, t: int, backdrop: np.ndarray):
    """Pixels (float, before noise), class map and exact flow of frame t.

    Later tracks are drawn on top, so they own overlapping pixels.
    """
    size = spec.canvas
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    pixels = backdrop.copy()
    class_map = np.zeros((size, size), dtype=np.uint8)
    flow = np.zeros((size, size, 2), dtype=np.float32)

    for track in tracks:
        if not track.visible[t]:
            continue
        cx, cy = track.positions[t]
        dx, dy = xs - cx, ys - cy
        if spec.wrap:
            dx = np.mod(dx + size / 2.0, size) - size / 2.0
            dy = np.mod(dy + size / 2.0, size) - size / 2.0
        mask = shape_mask(track.shape, dx, dy, track.size)
        # texture travels with the actor so dense flow has something to lock on
        shade = 0.75 + 0.25 * np.sin(dx / 2.5) * np.cos(dy / 3.0)
        pixels[mask] = np.asarray(SHAPE_COLORS[track.shape])[None, :] * shade[mask][:, None]
        class_map[mask] = track.channel
        flow[mask] = track.velocities[t]
    return pixels, class_map, flow


def quantize(pixels: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    if noise > 0:
        pixels = pixels + rng.normal(0.0, noise, size=pixels.shape)
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
