from probeseg.microworld import Obstacle, ObjectSpec, SceneSpec

FLOOR = (0.45, 0.55, 0.35)
BOX = (0.8, 0.2, 0.2)

# Box spans input rows 132..167 and cols 120..155; output cell (50, 46) is inside it
BOX_ROW, BOX_COL, BOX_CELLS = 132, 120, 36
BOX_POINT = (50, 46)
EAST = 2


def box_scene(
    min_force: float = 3.0,
    mass: float = 1.0,
    obstructed: bool = False,
    static: bool = False,
    pixel_noise: float = 0.0,
    lighting_jitter: float = 0.0,
) -> SceneSpec:
    """300x300 room, one flat-colored box left of center, agent at the center."""
    obstacles: tuple[Obstacle, ...] = ()
    if obstructed:
        # flush against the box's east face
        obstacles = (
            Obstacle(BOX_ROW - 20, BOX_COL + BOX_CELLS, BOX_CELLS + 40, 10, 0.75, (0.2, 0.3, 0.8)),
        )
    box = ObjectSpec(
        shape="box",
        row=BOX_ROW,
        col=BOX_COL,
        cells=BOX_CELLS,
        height=0.3,
        color=BOX,
        texture_seed=1,
        mass=mass,
        min_force=min_force,
        static=static,
    )
    return SceneSpec(
        seed=0,
        split="novel_layouts",
        role="train",
        layout="trivial",
        rows=300,
        cols=300,
        floor_color=FLOOR,
        floor_texture_seed=2,
        wall_color=(0.4, 0.4, 0.6),
        obstacles=obstacles,
        objects=(box,),
        spawns=((150, 150),),
        lighting_jitter=lighting_jitter,
        pixel_noise=pixel_noise,
        texture_amplitude=0.0,
    )
