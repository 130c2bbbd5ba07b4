"""
Deterministic top-down physics micro-world.

The world is a lattice of square cells (``CELL_SIZE`` meters). A view is an orthographic
window of ``view x view`` cells centered on the agent, so one view pixel is one cell.
Objects are footprint rasters (see ``probeseg.shapes``) at integer cell positions and only
ever translate.
"""

from __future__ import annotations

import logging
import math
import shlex
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from skimage.color import hsv2rgb

from probeseg.exceptions import FileWriteError, SceneFormatError
from probeseg.imaging import BinaryMask, DepthMap, ImageRGB
from probeseg.shapes import HELD_OUT_CATEGORIES, SHAPE_CATEGORIES, footprint, texture

logger = logging.getLogger(__name__)

CELL_SIZE = 0.012  # meters per lattice cell and per view pixel
VIEW_PIXELS = 300
CAMERA_HEIGHT = 1.0
WALL_HEIGHT = 0.9
OBSTACLE_HEIGHT = 0.75
DEFAULT_REACH = 1.5
REACH_SHAPES = ("sphere", "cylinder", "both")
MIN_REACHABLE_PIXELS = 10

FORCES: tuple[float, float, float] = (5.0, 30.0, 200.0)
MASS_CLASS_NAMES = ("light", "medium", "heavy")
MASS_EDGES = (0.5, 2.0)
_MASS_RANGES = ((0.1, 0.5), (0.5, 2.0), (2.0, 12.0))
FORCE_BUCKET_NOISE = 0.05

DISPLACEMENT_GAIN = 0.05  # m*kg/N
MIN_DISPLACEMENT = 0.15
MAX_DISPLACEMENT = 0.60

# (drow, dcol) for N, NE, E, SE, S, SW, W, NW
DIRECTIONS: tuple[tuple[int, int], ...] = (
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
)

FLOOR_ID = -1
WALL_ID = -2

DEFAULT_LIGHTING_JITTER = 0.02
DEFAULT_PIXEL_NOISE = 0.01
DEFAULT_TEXTURE_AMPLITUDE = 0.03

SCENE_FILE_VERSION = 1


class Split(str, Enum):
    NOVEL_LAYOUTS = "novel_layouts"
    NOVEL_SHAPES = "novel_shapes"


class Role(str, Enum):
    TRAIN = "train"
    TEST = "test"


class Layout(str, Enum):
    FULL = "full"
    TRIVIAL = "trivial"


_SPLIT_IDS = {Split.NOVEL_LAYOUTS: 0, Split.NOVEL_SHAPES: 1}
_ROLE_IDS = {Role.TRAIN: 0, Role.TEST: 1}
_LAYOUT_IDS = {Layout.FULL: 0, Layout.TRIVIAL: 1}


def mass_class(mass: float) -> int:
    """0 light (< 0.5 kg), 1 medium (< 2 kg), 2 heavy."""
    return int(np.searchsorted(MASS_EDGES, mass, side="right"))


# --- declarative scene ----------------------------------------------------


@dataclass(frozen=True)
class ObjectSpec:
    shape: str
    row: int
    col: int
    cells: int
    height: float
    color: tuple[float, float, float]
    texture_seed: int
    mass: float
    min_force: float
    static: bool = False

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise ValueError(f"Object mass must be positive, got {self.mass}")
        if self.shape not in SHAPE_CATEGORIES:
            raise ValueError(f"Unknown shape category: {self.shape!r}")

    @property
    def size(self) -> float:
        """Footprint side length in meters."""
        return self.cells * CELL_SIZE

    @property
    def mass_class(self) -> int:
        return mass_class(self.mass)


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned block such as a counter; rows/cols give its extent in cells."""

    row: int
    col: int
    rows: int
    cols: int
    height: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    split: str
    role: str
    layout: str
    rows: int
    cols: int
    floor_color: tuple[float, float, float]
    floor_texture_seed: int
    wall_color: tuple[float, float, float]
    obstacles: tuple[Obstacle, ...]
    objects: tuple[ObjectSpec, ...]
    spawns: tuple[tuple[int, int], ...]
    lighting_jitter: float = DEFAULT_LIGHTING_JITTER
    pixel_noise: float = DEFAULT_PIXEL_NOISE
    texture_amplitude: float = DEFAULT_TEXTURE_AMPLITUDE

    @property
    def size(self) -> tuple[float, float]:
        """Room extent in meters."""
        return self.rows * CELL_SIZE, self.cols * CELL_SIZE

    @property
    def movable(self) -> list[int]:
        return [k for k, obj in enumerate(self.objects) if not obj.static]


@dataclass(frozen=True)
class AgentPose:
    """Camera above lattice cell (row, col). Reach is measured from the camera."""

    row: int
    col: int
    height: float = CAMERA_HEIGHT
    reach: float = DEFAULT_REACH
    reach_shape: str = "sphere"
    view: int = VIEW_PIXELS

    def __post_init__(self) -> None:
        if not self.reach > 0:
            raise ValueError(f"Reach radius must be positive, got {self.reach}")
        if self.reach_shape not in REACH_SHAPES:
            raise ValueError(f"Unknown reach shape: {self.reach_shape!r}")

    @property
    def position(self) -> tuple[float, float, float]:
        return self.col * CELL_SIZE, self.row * CELL_SIZE, self.height

    def to_lattice(self, point: tuple[int, int]) -> tuple[int, int]:
        half = self.view // 2
        return self.row - half + int(point[0]), self.col - half + int(point[1])


@dataclass
class WorldState:
    """Scene plus current object positions and the episode noise generator."""

    scene: SceneSpec
    positions: NDArray[np.int64]
    rng: np.random.Generator

    @classmethod
    def initial(cls, scene: SceneSpec, noise_seed: int = 0) -> WorldState:
        positions = np.array([(o.row, o.col) for o in scene.objects], dtype=np.int64)
        return cls(
            scene=scene,
            positions=positions.reshape(-1, 2),
            rng=np.random.default_rng(noise_seed),
        )

    def moved_object(self, k: int, row: int, col: int) -> WorldState:
        positions = self.positions.copy()
        positions[k] = (row, col)
        return WorldState(scene=self.scene, positions=positions, rng=self.rng)


@dataclass(frozen=True)
class InteractionRequest:
    point: tuple[int, int]  # (row, col) at input resolution
    force: float
    direction: int


@dataclass(frozen=True)
class PushOutcome:
    moved: bool
    object_id: int | None = None
    cells: int = 0
    reason: str = ""


@dataclass(frozen=True)
class GroundTruthInstance:
    object_id: int
    shape: str
    mask: BinaryMask
    bbox: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)
    mass_class: int
    reachable: bool
    reach_pixels: int = 0


@dataclass(frozen=True)
class ViewLayers:
    """Per-pixel surface height, base color and owner id of one view."""

    height: NDArray[np.float64]
    color: NDArray[np.float64]
    ids: NDArray[np.int64]


# --- rendering -------------------------------------------------------------


@lru_cache(maxsize=64)
def _texture(seed: int, rows: int, cols: int, amplitude: float) -> NDArray[np.float64]:
    tex = texture(seed, (rows, cols), amplitude)
    tex.setflags(write=False)
    return tex


def _paint(
    layers: ViewLayers,
    top: int,
    left: int,
    mask: NDArray[np.bool_],
    height: float,
    color: NDArray[np.float64],
    ident: int,
) -> None:
    n = layers.ids.shape[0]
    h, w = mask.shape
    t0, l0 = max(top, 0), max(left, 0)
    t1, l1 = min(top + h, n), min(left + w, n)
    if t0 >= t1 or l0 >= l1:
        return
    sub = mask[t0 - top : t1 - top, l0 - left : l1 - left]
    region = (slice(t0, t1), slice(l0, l1))
    layers.height[region][sub] = height
    layers.ids[region][sub] = ident
    layers.color[region][sub] = color[t0 - top : t1 - top, l0 - left : l1 - left][sub]


def render_layers(state: WorldState, pose: AgentPose) -> ViewLayers:
    scene = state.scene
    n = pose.view
    half = n // 2
    r0, c0 = pose.row - half, pose.col - half
    rows = np.arange(r0, r0 + n)[:, None]
    cols = np.arange(c0, c0 + n)[None, :]
    inside = (rows >= 0) & (rows < scene.rows) & (cols >= 0) & (cols < scene.cols)

    floor_tex = _texture(scene.floor_texture_seed, scene.rows, scene.cols, scene.texture_amplitude)
    shade = 1.0 + floor_tex[np.clip(rows, 0, scene.rows - 1), np.clip(cols, 0, scene.cols - 1)]
    floor_rgb = np.asarray(scene.floor_color)[None, None, :] * shade[..., None]
    wall_rgb = np.broadcast_to(np.asarray(scene.wall_color), (n, n, 3))

    layers = ViewLayers(
        height=np.where(inside, 0.0, WALL_HEIGHT),
        color=np.where(inside[..., None], floor_rgb, wall_rgb),
        ids=np.where(inside, FLOOR_ID, WALL_ID).astype(np.int64),
    )

    for ob in scene.obstacles:
        mask = np.ones((ob.rows, ob.cols), dtype=bool)
        rgb = np.broadcast_to(np.asarray(ob.color), (ob.rows, ob.cols, 3))
        _paint(layers, ob.row - r0, ob.col - c0, mask, ob.height, rgb, WALL_ID)

    for k, obj in enumerate(scene.objects):
        fp = footprint(obj.shape, obj.cells)
        tex = _texture(obj.texture_seed, obj.cells, obj.cells, scene.texture_amplitude)
        rgb = np.asarray(obj.color)[None, None, :] * (1.0 + tex)[..., None]
        row, col = state.positions[k]
        _paint(layers, int(row) - r0, int(col) - c0, fp, obj.height, rgb, k)

    return layers


def render(
    state: WorldState, pose: AgentPose, noise: bool = True
) -> tuple[ImageRGB, DepthMap]:
    """
    Render the agent's view.

    Depth is camera height minus surface height. With ``noise`` on, one global brightness
    factor and per-pixel Gaussian noise are drawn from the state's generator and applied to
    RGB only.
    """
    layers = render_layers(state, pose)
    rgb = np.clip(layers.color, 0.0, 1.0)
    if noise:
        scene = state.scene
        jitter = state.rng.uniform(-scene.lighting_jitter, scene.lighting_jitter)
        rgb = rgb * (1.0 + jitter) + state.rng.normal(0.0, scene.pixel_noise, size=rgb.shape)
        rgb = np.clip(rgb, 0.0, 1.0)
    depth = pose.height - layers.height
    return rgb, depth


def reach_mask(heights: NDArray[np.float64], pose: AgentPose) -> BinaryMask:
    """View pixels whose surface point lies inside the agent's reach region."""
    if math.isinf(pose.reach):
        return np.ones(heights.shape, dtype=bool)
    n = heights.shape[0]
    half = n // 2
    offsets = (np.arange(n) - half) * CELL_SIZE
    planar_sq = offsets[:, None] ** 2 + offsets[None, :] ** 2
    vertical_sq = (pose.height - heights) ** 2
    limit = pose.reach**2
    sphere = planar_sq + vertical_sq <= limit
    cylinder = planar_sq <= limit
    if pose.reach_shape == "sphere":
        return np.asarray(sphere)
    if pose.reach_shape == "cylinder":
        return np.asarray(np.broadcast_to(cylinder, heights.shape))
    return np.asarray(sphere & cylinder)


def is_reachable(mask: BinaryMask, in_reach: BinaryMask) -> bool:
    return int(np.count_nonzero(mask & in_reach)) >= MIN_REACHABLE_PIXELS


# --- physics ---------------------------------------------------------------


def displacement(force: float, obj: ObjectSpec) -> float:
    """Travel distance in meters for a force that overcomes the object's threshold."""
    raw = DISPLACEMENT_GAIN * (force - obj.min_force) / obj.mass
    return float(np.clip(raw, MIN_DISPLACEMENT, MAX_DISPLACEMENT))


def _occupancy(state: WorldState, exclude: int) -> NDArray[np.bool_]:
    scene = state.scene
    occ = np.zeros((scene.rows, scene.cols), dtype=bool)
    for ob in scene.obstacles:
        occ[ob.row : ob.row + ob.rows, ob.col : ob.col + ob.cols] = True
    for k, obj in enumerate(scene.objects):
        if k == exclude:
            continue
        row, col = (int(v) for v in state.positions[k])
        occ[row : row + obj.cells, col : col + obj.cells] |= footprint(obj.shape, obj.cells)
    return occ


def _fits(occ: NDArray[np.bool_], fp: NDArray[np.bool_], row: int, col: int) -> bool:
    size = fp.shape[0]
    if row < 0 or col < 0 or row + size > occ.shape[0] or col + size > occ.shape[1]:
        return False
    return not bool(np.any(occ[row : row + size, col : col + size] & fp))


def _slide(state: WorldState, k: int, direction: int, distance: float) -> int:
    """Number of lattice steps object ``k`` travels before the first collision."""
    dr, dc = DIRECTIONS[direction]
    max_steps = max(1, int(round(distance / (CELL_SIZE * math.hypot(dr, dc)))))
    obj = state.scene.objects[k]
    fp = footprint(obj.shape, obj.cells)
    occ = _occupancy(state, exclude=k)
    row, col = (int(v) for v in state.positions[k])
    steps = 0
    for i in range(1, max_steps + 1):
        if not _fits(occ, fp, row + i * dr, col + i * dc):
            break
        steps = i
    return steps


def apply_force(
    state: WorldState, pose: AgentPose, req: InteractionRequest
) -> tuple[WorldState, PushOutcome]:
    """
    Push the surface under ``req.point``.

    Returns the original state object whenever nothing moves.
    """
    if not 0 <= req.direction < len(DIRECTIONS):
        raise ValueError(f"Direction index must be in 0..7, got {req.direction}")
    r, c = req.point
    if not (0 <= r < pose.view and 0 <= c < pose.view):
        raise ValueError(f"Point {req.point} outside the {pose.view}x{pose.view} view")

    layers = render_layers(state, pose)
    ident = int(layers.ids[r, c])
    if ident < 0:
        return state, PushOutcome(moved=False, reason="no object")

    obj = state.scene.objects[ident]
    if not reach_mask(layers.height, pose)[r, c]:
        return state, PushOutcome(moved=False, object_id=ident, reason="out of reach")
    if obj.static:
        return state, PushOutcome(moved=False, object_id=ident, reason="static")
    if req.force < obj.min_force:
        return state, PushOutcome(moved=False, object_id=ident, reason="insufficient force")

    steps = _slide(state, ident, req.direction, displacement(req.force, obj))
    if steps == 0:
        return state, PushOutcome(moved=False, object_id=ident, reason="blocked")

    dr, dc = DIRECTIONS[req.direction]
    row, col = (int(v) for v in state.positions[ident])
    logger.debug(f"Object {ident} ({obj.shape}) moved {steps} cells in direction {req.direction}")
    new_state = state.moved_object(ident, row + steps * dr, col + steps * dc)
    return new_state, PushOutcome(moved=True, object_id=ident, cells=steps)


def ground_truth(state: WorldState, pose: AgentPose) -> list[GroundTruthInstance]:
    """Visible movable objects with their input-resolution masks."""
    layers = render_layers(state, pose)
    in_reach = reach_mask(layers.height, pose)
    instances: list[GroundTruthInstance] = []
    for k in state.scene.movable:
        mask = layers.ids == k
        if not mask.any():
            continue
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        count = int(np.count_nonzero(mask & in_reach))
        obj = state.scene.objects[k]
        instances.append(
            GroundTruthInstance(
                object_id=k,
                shape=obj.shape,
                mask=mask,
                bbox=(int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1),
                mass_class=obj.mass_class,
                reachable=count >= MIN_REACHABLE_PIXELS,
                reach_pixels=count,
            )
        )
    return instances


# --- environment wrapper ---------------------------------------------------


@dataclass
class Episode:
    """One agent location in a scene: the world state the agent interacts with."""

    scene: SceneSpec
    spawn: int = 0
    noise: bool = True
    noise_seed: int = 0
    reach: float = DEFAULT_REACH
    reach_shape: str = "sphere"
    view: int = VIEW_PIXELS
    pushes: int = field(default=0, init=False)
    pose: AgentPose = field(init=False)
    state: WorldState = field(init=False)

    def __post_init__(self) -> None:
        if not self.scene.spawns:
            raise SceneFormatError("Scene has no spawn points")
        row, col = self.scene.spawns[self.spawn % len(self.scene.spawns)]
        self.pose = AgentPose(
            row=row, col=col, reach=self.reach, reach_shape=self.reach_shape, view=self.view
        )
        self.state = WorldState.initial(self.scene, self.noise_seed)

    def observe(self) -> tuple[ImageRGB, DepthMap]:
        return render(self.state, self.pose, noise=self.noise)

    def push(self, point: tuple[int, int], force: float, direction: int) -> PushOutcome:
        self.state, outcome = apply_force(
            self.state, self.pose, InteractionRequest(point=point, force=force, direction=direction)
        )
        self.pushes += 1
        return outcome

    def ground_truth(self) -> list[GroundTruthInstance]:
        return ground_truth(self.state, self.pose)

    def object_at(self, point: tuple[int, int]) -> int | None:
        """Id of the movable object visible at an input-resolution point, if any."""
        ident = int(render_layers(self.state, self.pose).ids[point[0], point[1]])
        if ident < 0 or self.scene.objects[ident].static:
            return None
        return ident


# --- scene generation ------------------------------------------------------


def _hue_distance(a: float, b: float) -> float:
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def _pick_color(
    rng: np.random.Generator, avoid: list[float], sat: tuple[float, float], val: tuple[float, float]
) -> tuple[tuple[float, float, float], float]:
    hue = float(rng.uniform())
    for _ in range(32):
        if all(_hue_distance(hue, h) >= 0.12 for h in avoid):
            break
        hue = float(rng.uniform())
    s = float(rng.uniform(*sat))
    v = float(rng.uniform(*val))
    rgb = hsv2rgb(np.array([[[hue, s, v]]]))[0, 0]
    return (float(rgb[0]), float(rgb[1]), float(rgb[2])), hue


def _min_force(rng: np.random.Generator, bucket: int) -> float:
    """Threshold force in (F[b-1], F[b]], occasionally shifted one bucket."""
    if rng.uniform() < FORCE_BUCKET_NOISE:
        if bucket == 0:
            bucket = 1
        elif bucket == 2:
            bucket = 1
        else:
            bucket += 1 if rng.uniform() < 0.5 else -1
    lo = FORCES[bucket - 1] if bucket > 0 else 0.0
    hi = FORCES[bucket]
    return float(lo + (hi - lo) * rng.uniform(0.1, 1.0))


def _obstacles(rng: np.random.Generator, rows: int, cols: int, hues: list[float]) -> list[Obstacle]:
    out: list[Obstacle] = []
    for _ in range(int(rng.integers(0, 3))):
        depth = int(rng.integers(34, 51))
        length = int(rng.integers(67, 134))
        color, hue = _pick_color(rng, hues, (0.35, 0.6), (0.4, 0.7))
        hues.append(hue)
        side = int(rng.integers(4))
        if side in (0, 2):
            col = int(rng.integers(0, cols - length))
            row = 0 if side == 0 else rows - depth
            out.append(Obstacle(row, col, depth, length, OBSTACLE_HEIGHT, color))
        else:
            row = int(rng.integers(0, rows - length))
            col = 0 if side == 3 else cols - depth
            out.append(Obstacle(row, col, length, depth, OBSTACLE_HEIGHT, color))
    return out


def _place(
    rng: np.random.Generator, occ: NDArray[np.bool_], cells: int, margin: int = 3, tries: int = 500
) -> tuple[int, int] | None:
    rows, cols = occ.shape
    for _ in range(tries):
        row = int(rng.integers(margin, rows - cells - margin))
        col = int(rng.integers(margin, cols - cells - margin))
        if not occ[row - margin : row + cells + margin, col - margin : col + cells + margin].any():
            occ[row : row + cells, col : col + cells] = True
            return row, col
    return None


def _categories(rng: np.random.Generator, split: Split, role: Role, count: int) -> list[str]:
    """Shape categories in placement order; NovelShapes test scenes list held-out ones first."""
    if split is Split.NOVEL_LAYOUTS:
        return [str(c) for c in rng.choice(SHAPE_CATEGORIES, size=count)]
    seen = [c for c in SHAPE_CATEGORIES if c not in HELD_OUT_CATEGORIES]
    if role is Role.TRAIN:
        return [str(c) for c in rng.choice(seen, size=count)]
    held = count // 2 + 1
    picks = list(rng.choice(HELD_OUT_CATEGORIES, size=held)) + list(
        rng.choice(SHAPE_CATEGORIES, size=count - held)
    )
    return [str(c) for c in picks]


def _held_out_majority(objects: list[ObjectSpec]) -> list[ObjectSpec]:
    """Drop seen-category objects, latest first, until held-out shapes are the majority."""
    kept = list(objects)
    held = sum(o.shape in HELD_OUT_CATEGORIES for o in kept)
    for i in range(len(kept) - 1, -1, -1):
        if 2 * held > len(kept):
            break
        if kept[i].shape not in HELD_OUT_CATEGORIES:
            del kept[i]
    return kept


def _movable_object(
    rng: np.random.Generator, shape: str, cells: int, pos: tuple[int, int], hues: list[float]
) -> ObjectSpec:
    bucket = int(rng.integers(3))
    lo, hi = _MASS_RANGES[bucket]
    color, hue = _pick_color(rng, hues, (0.45, 0.9), (0.45, 0.85))
    return ObjectSpec(
        shape=shape,
        row=pos[0],
        col=pos[1],
        cells=cells,
        height=float(rng.uniform(0.05, 0.45)),
        color=color,
        texture_seed=int(rng.integers(2**31)),
        mass=float(rng.uniform(lo, hi)),
        min_force=_min_force(rng, bucket),
    )


def _spawn_near(
    rng: np.random.Generator, obj: ObjectSpec, rows: int, cols: int, radius: int = 33
) -> tuple[int, int]:
    center = (obj.row + obj.cells // 2, obj.col + obj.cells // 2)
    angle = rng.uniform(0.0, 2 * math.pi)
    dist = radius * math.sqrt(rng.uniform())
    row = int(round(center[0] + dist * math.sin(angle)))
    col = int(round(center[1] + dist * math.cos(angle)))
    return int(np.clip(row, 0, rows - 1)), int(np.clip(col, 0, cols - 1))


def generate_scene(
    seed: int,
    split: Split | str = Split.NOVEL_LAYOUTS,
    role: Role | str = Role.TRAIN,
    layout: Layout | str = Layout.FULL,
    *,
    lighting_jitter: float = DEFAULT_LIGHTING_JITTER,
    pixel_noise: float = DEFAULT_PIXEL_NOISE,
    texture_amplitude: float = DEFAULT_TEXTURE_AMPLITUDE,
) -> SceneSpec:
    """
    Build one scene, a pure function of ``(seed, split, role, layout)``.

    NovelLayouts draws train and test rooms from disjoint seed streams. NovelShapes
    additionally never places held-out categories in training scenes and makes them the
    majority of each test scene. Spawn point 0 is always next to the first movable object.
    """
    split, role, layout = Split(split), Role(role), Layout(layout)
    rng = np.random.default_rng([seed, _SPLIT_IDS[split], _ROLE_IDS[role], _LAYOUT_IDS[layout]])

    if layout is Layout.TRIVIAL:
        rows = cols = int(rng.integers(300, 367))
    else:
        rows, cols = (int(v) for v in rng.integers(334, 501, size=2))

    hues: list[float] = []
    floor_color, floor_hue = _pick_color(rng, hues, (0.35, 0.6), (0.45, 0.75))
    hues.append(floor_hue)
    wall_color, wall_hue = _pick_color(rng, hues, (0.35, 0.6), (0.35, 0.6))
    hues.append(wall_hue)

    occ = np.zeros((rows, cols), dtype=bool)
    obstacles: list[Obstacle] = []
    objects: list[ObjectSpec] = []

    if layout is Layout.TRIVIAL:
        cells = int(rng.integers(36, 43))
        pos = _place(rng, occ, cells, margin=40)
        assert pos is not None
        objects.append(_movable_object(rng, "box", cells, pos, hues[:1]))
    else:
        obstacles = _obstacles(rng, rows, cols, hues)
        for ob in obstacles:
            occ[ob.row : ob.row + ob.rows, ob.col : ob.col + ob.cols] = True

        shapes = _categories(rng, split, role, int(rng.integers(3, 8)))
        for shape in shapes:
            cells = int(rng.integers(17, 43))
            pos = _place(rng, occ, cells)
            if pos is None:
                logger.debug(f"Scene {seed}: no room left for a {shape}, skipping")
                continue
            objects.append(_movable_object(rng, shape, cells, pos, hues[:1]))
        if split is Split.NOVEL_SHAPES and role is Role.TEST:
            objects = _held_out_majority(objects)

        for _ in range(int(rng.integers(0, 2))):
            cells = int(rng.integers(42, 68))
            pos = _place(rng, occ, cells)
            if pos is None:
                continue
            color, _hue = _pick_color(rng, hues[:1], (0.35, 0.6), (0.35, 0.6))
            objects.append(
                ObjectSpec(
                    shape="box",
                    row=pos[0],
                    col=pos[1],
                    cells=cells,
                    height=float(rng.uniform(0.4, 0.7)),
                    color=color,
                    texture_seed=int(rng.integers(2**31)),
                    mass=float(rng.uniform(30.0, 80.0)),
                    min_force=math.inf,
                    static=True,
                )
            )

    if not objects or objects[0].static:
        raise RuntimeError(f"Scene generation placed no movable object (seed {seed})")

    spawns = [_spawn_near(rng, objects[0], rows, cols)]
    for _ in range(3):
        spawns.append((int(rng.integers(0, rows)), int(rng.integers(0, cols))))

    return SceneSpec(
        seed=int(seed),
        split=split.value,
        role=role.value,
        layout=layout.value,
        rows=rows,
        cols=cols,
        floor_color=floor_color,
        floor_texture_seed=int(rng.integers(2**31)),
        wall_color=wall_color,
        obstacles=tuple(obstacles),
        objects=tuple(objects),
        spawns=tuple(spawns),
        lighting_jitter=lighting_jitter,
        pixel_noise=pixel_noise,
        texture_amplitude=texture_amplitude,
    )


# --- scene files -----------------------------------------------------------


def _fmt_color(color: tuple[float, float, float]) -> str:
    return ",".join(repr(float(c)) for c in color)


def _parse_color(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected 3 color components, got {len(parts)}")
    return parts[0], parts[1], parts[2]


def scene_to_text(scene: SceneSpec) -> str:
    lines = [
        f"# probeseg scene file v{SCENE_FILE_VERSION}",
        f"scene seed={scene.seed} split={scene.split} role={scene.role} layout={scene.layout}",
        f"room rows={scene.rows} cols={scene.cols} floor_color={_fmt_color(scene.floor_color)} "
        f"floor_texture={scene.floor_texture_seed} wall_color={_fmt_color(scene.wall_color)}",
        f"render lighting_jitter={scene.lighting_jitter!r} pixel_noise={scene.pixel_noise!r} "
        f"texture_amplitude={scene.texture_amplitude!r}",
    ]
    for ob in scene.obstacles:
        lines.append(
            f"obstacle row={ob.row} col={ob.col} rows={ob.rows} cols={ob.cols} "
            f"height={ob.height!r} color={_fmt_color(ob.color)}"
        )
    for row, col in scene.spawns:
        lines.append(f"spawn row={row} col={col}")
    for obj in scene.objects:
        lines.append(
            f"object shape={obj.shape} row={obj.row} col={obj.col} cells={obj.cells} "
            f"height={obj.height!r} color={_fmt_color(obj.color)} texture={obj.texture_seed} "
            f"mass={obj.mass!r} min_force={obj.min_force!r} static={int(obj.static)}"
        )
    return "\n".join(lines) + "\n"


def scene_from_text(text: str, source: str = "<string>") -> SceneSpec:
    header: dict[str, str] = {}
    obstacles: list[Obstacle] = []
    objects: list[ObjectSpec] = []
    spawns: list[tuple[int, int]] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            kind, *pairs = shlex.split(line)
            rec = dict(p.split("=", 1) for p in pairs)
            if kind in ("scene", "room", "render"):
                header.update(rec)
            elif kind == "obstacle":
                obstacles.append(
                    Obstacle(
                        row=int(rec["row"]),
                        col=int(rec["col"]),
                        rows=int(rec["rows"]),
                        cols=int(rec["cols"]),
                        height=float(rec["height"]),
                        color=_parse_color(rec["color"]),
                    )
                )
            elif kind == "spawn":
                spawns.append((int(rec["row"]), int(rec["col"])))
            elif kind == "object":
                objects.append(
                    ObjectSpec(
                        shape=rec["shape"],
                        row=int(rec["row"]),
                        col=int(rec["col"]),
                        cells=int(rec["cells"]),
                        height=float(rec["height"]),
                        color=_parse_color(rec["color"]),
                        texture_seed=int(rec["texture"]),
                        mass=float(rec["mass"]),
                        min_force=float(rec["min_force"]),
                        static=rec.get("static", "0") == "1",
                    )
                )
            else:
                raise ValueError(f"unknown record type {kind!r}")
        except (KeyError, ValueError) as e:
            raise SceneFormatError(
                f"Malformed scene record in {source} line {lineno}", details=str(e)
            )

    try:
        return SceneSpec(
            seed=int(header["seed"]),
            split=header["split"],
            role=header["role"],
            layout=header.get("layout", Layout.FULL.value),
            rows=int(header["rows"]),
            cols=int(header["cols"]),
            floor_color=_parse_color(header["floor_color"]),
            floor_texture_seed=int(header["floor_texture"]),
            wall_color=_parse_color(header["wall_color"]),
            obstacles=tuple(obstacles),
            objects=tuple(objects),
            spawns=tuple(spawns),
            lighting_jitter=float(header.get("lighting_jitter", DEFAULT_LIGHTING_JITTER)),
            pixel_noise=float(header.get("pixel_noise", DEFAULT_PIXEL_NOISE)),
            texture_amplitude=float(header.get("texture_amplitude", DEFAULT_TEXTURE_AMPLITUDE)),
        )
    except (KeyError, ValueError) as e:
        raise SceneFormatError(f"Incomplete scene header in {source}", details=str(e))


def save_scene(scene: SceneSpec, path: Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(scene_to_text(scene), encoding="utf-8")
    except OSError as e:
        raise FileWriteError(f"Cannot write scene file {path}", details=str(e))


def load_scene(path: Path) -> SceneSpec:
    path = Path(path)
    if not path.exists():
        raise SceneFormatError(f"Scene file '{path}' does not exist")
    return scene_from_text(path.read_text(encoding="utf-8"), source=str(path))


def load_scene_set(directory: Path) -> list[SceneSpec]:
    """All ``*.scene`` files in a directory, in name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise SceneFormatError(f"Scene directory '{directory}' does not exist")
    paths = sorted(directory.glob("*.scene"))
    if not paths:
        raise SceneFormatError(f"No scene files found in '{directory}'")
    return [load_scene(p) for p in paths]
