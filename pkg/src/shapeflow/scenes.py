"""Synthetic scene world: colored glyphs on a gray canvas.

Scenes are symbolic (shape, color, grid cell, size per object) and render
deterministically to small float canvases with hard edges and exact
palette colors. Because rasterization is exact, a classical parser can
recover the symbolic scene from a canvas, which is what makes every
reward in this package verifiable.

Geometry conventions:
  * resolution is (height, width); the placement grid is 4x4;
  * each glyph is a fixed pixel stencil (4x4 small, 6x6 large) centered
    on its cell's nominal center with banker's rounding;
  * object bounding boxes must stay on canvas and keep >= 1 px of
    separation, so rendered components never touch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .autodiff import ContractError, SeededRng

# -- palette and canvas constants ---------------------------------------------

COLOR_TABLE: Dict[str, Tuple[float, float, float]] = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "magenta": (1.0, 0.0, 1.0),
    "cyan": (0.0, 1.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
}
COLOR_NAMES = tuple(COLOR_TABLE)
BACKGROUND = (0.5, 0.5, 0.5)

GRID = 4
TAU_COLOR = 0.15  # max-channel deviation allowed when naming a component's color

# (height, width); aspect ratios 1:1, 4:3, 3:2, 16:9 as width:height
RESOLUTIONS: Tuple[Tuple[int, int], ...] = ((16, 16), (12, 16), (16, 24), (18, 32))

SHAPES = ("square", "disk", "triangle")
SIZES = ("small", "large")
SIZE_PX = {"small": 4, "large": 6}

# Fill-ratio targets used to classify a component's shape from its
# bounding box: square ~ 1.0, disk ~ pi/4, triangle ~ 0.5.
FILL_TARGETS = {"square": 1.0, "disk": np.pi / 4.0, "triangle": 0.5}


def _stencil(rows: Sequence[str]) -> np.ndarray:
    return np.array([[ch == "X" for ch in row] for row in rows], dtype=bool)


STENCILS: Dict[Tuple[str, str], np.ndarray] = {
    ("square", "small"): _stencil(["XXXX", "XXXX", "XXXX", "XXXX"]),
    ("square", "large"): _stencil(["XXXXXX"] * 6),
    ("disk", "small"): _stencil([".XX.", "XXXX", "XXXX", ".XX."]),
    ("disk", "large"): _stencil([".XXXX.", ".XXXX.", "XXXXXX", "XXXXXX", ".XXXX.", ".XXXX."]),
    ("triangle", "small"): _stencil(["..X.", ".XX.", ".XX.", "XXXX"]),
    ("triangle", "large"): _stencil(["..X...", "..XX..", ".XXX..", ".XXXX.", "XXXXX.", "XXXXXX"]),
}


def classify_fill(fill: float) -> str:
    return min(FILL_TARGETS, key=lambda s: abs(FILL_TARGETS[s] - fill))


def classify_size(bbox_area: float) -> str:
    return "small" if abs(bbox_area - 16.0) <= abs(bbox_area - 36.0) else "large"


def nearest_color(rgb: np.ndarray) -> Tuple[str, float]:
    """Nearest canonical color by max-channel deviation, plus that deviation."""
    best, best_d = None, np.inf
    for name, c in COLOR_TABLE.items():
        d = float(np.max(np.abs(rgb - np.asarray(c))))
        if d < best_d:
            best, best_d = name, d
    return best, best_d


# -- symbolic types ------------------------------------------------------------


@dataclass(frozen=True, order=True)
class ObjectSpec:
    shape: str
    color: str
    cell: Tuple[int, int]
    size: str

    def to_dict(self) -> dict:
        return {"shape": self.shape, "color": self.color, "cell": list(self.cell), "size": self.size}

    @staticmethod
    def from_dict(d: dict) -> "ObjectSpec":
        return ObjectSpec(d["shape"], d["color"], (int(d["cell"][0]), int(d["cell"][1])), d["size"])


def _canon_objects(objects: Iterable[ObjectSpec]) -> Tuple[ObjectSpec, ...]:
    return tuple(sorted(objects, key=lambda o: (o.cell, o.shape, o.color, o.size)))


@dataclass(frozen=True)
class SceneSpec:
    objects: Tuple[ObjectSpec, ...]
    resolution: Tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "objects", _canon_objects(self.objects))
        object.__setattr__(self, "resolution", tuple(self.resolution))

    def to_dict(self) -> dict:
        return {"resolution": list(self.resolution), "objects": [o.to_dict() for o in self.objects]}

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        return SceneSpec(
            tuple(ObjectSpec.from_dict(o) for o in d["objects"]),
            (int(d["resolution"][0]), int(d["resolution"][1])),
        )


# -- placement geometry ---------------------------------------------------------


def cell_center(cell: Tuple[int, int], resolution: Tuple[int, int]) -> Tuple[float, float]:
    h, w = resolution
    return ((cell[0] + 0.5) * h / GRID, (cell[1] + 0.5) * w / GRID)


def object_box(obj: ObjectSpec, resolution: Tuple[int, int]) -> Tuple[int, int, int, int]:
    """Pixel bounding box (top, left, height, width) of the glyph."""
    g = SIZE_PX[obj.size]
    cy, cx = cell_center(obj.cell, resolution)
    top = round(cy - g / 2.0)
    left = round(cx - g / 2.0)
    return top, left, g, g


def placement_valid(obj: ObjectSpec, resolution: Tuple[int, int]) -> bool:
    h, w = resolution
    top, left, gh, gw = object_box(obj, resolution)
    return top >= 0 and left >= 0 and top + gh <= h and left + gw <= w


def boxes_separated(a: Tuple[int, int, int, int], b: Tuple[int, int, int, int]) -> bool:
    """True when the boxes keep at least one blank pixel between them."""
    at, al, ah, aw = a
    bt, bl, bh, bw = b
    rows_touch = at - 1 < bt + bh and bt < at + ah + 1
    cols_touch = al - 1 < bl + bw and bl < al + aw + 1
    return not (rows_touch and cols_touch)


def scene_valid(scene: SceneSpec, reason: bool = False):
    """Check every SceneSpec invariant; optionally return the failure reason."""

    def fail(msg):
        return (False, msg) if reason else False

    if scene.resolution not in RESOLUTIONS:
        return fail(f"unsupported resolution {scene.resolution}")
    if len(scene.objects) > 4:
        return fail("more than 4 objects")
    boxes = []
    for obj in scene.objects:
        if obj.shape not in SHAPES or obj.color not in COLOR_NAMES or obj.size not in SIZES:
            return fail(f"bad object fields {obj}")
        if not (0 <= obj.cell[0] < GRID and 0 <= obj.cell[1] < GRID):
            return fail(f"cell outside grid {obj.cell}")
        if not placement_valid(obj, scene.resolution):
            return fail(f"glyph off canvas for {obj}")
        boxes.append(object_box(obj, scene.resolution))
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if not boxes_separated(boxes[i], boxes[j]):
                return fail(f"objects {i},{j} overlap or touch")
    return (True, "") if reason else True


# -- renderer -------------------------------------------------------------------


def render(scene: SceneSpec) -> np.ndarray:
    """Rasterize a scene to a (H, W, 3) float64 canvas. Pure and exact."""
    ok, msg = scene_valid(scene, reason=True)
    if not ok:
        raise ContractError(f"invalid scene: {msg}")
    h, w = scene.resolution
    canvas = np.empty((h, w, 3), dtype=np.float64)
    canvas[:, :] = BACKGROUND
    for obj in scene.objects:
        top, left, gh, gw = object_box(obj, scene.resolution)
        mask = STENCILS[(obj.shape, obj.size)]
        block = canvas[top : top + gh, left : left + gw]
        block[mask] = COLOR_TABLE[obj.color]
    return canvas


# -- parser ---------------------------------------------------------------------


@dataclass(frozen=True)
class ParsedObject:
    shape: str
    color: str  # canonical name or "unknown"
    cell: Tuple[int, int]
    size: str
    bbox: Tuple[int, int, int, int] = field(compare=False, default=(0, 0, 0, 0))
    fill: float = field(compare=False, default=0.0)

    @property
    def known(self) -> bool:
        return self.color != "unknown"


@dataclass(frozen=True)
class ParsedScene:
    objects: Tuple[ParsedObject, ...]
    resolution: Tuple[int, int]

    @property
    def known_objects(self) -> Tuple[ParsedObject, ...]:
        return tuple(o for o in self.objects if o.known)

    def to_scene(self) -> SceneSpec:
        return SceneSpec(
            tuple(ObjectSpec(o.shape, o.color, o.cell, o.size) for o in self.known_objects),
            self.resolution,
        )


_PALETTE = np.array(list(COLOR_TABLE.values()) + [BACKGROUND])  # background last
_BG_INDEX = len(COLOR_TABLE)
_EIGHT_CONN = np.ones((3, 3), dtype=int)
_MIN_COMPONENT_PX = 3


def parse(canvas: np.ndarray) -> ParsedScene:
    """Recover symbolic objects from a canvas by exact-palette component analysis.

    Components whose mean color is farther than TAU_COLOR (max-channel)
    from every canonical color are reported with color "unknown" rather
    than being forced onto the palette.
    """
    h, w, _ = canvas.shape
    dist = np.abs(canvas[:, :, None, :] - _PALETTE[None, None, :, :]).max(axis=-1)
    nearest = dist.argmin(axis=-1)
    fg = nearest != _BG_INDEX
    labels, n = ndimage.label(fg, structure=_EIGHT_CONN)
    objects: List[ParsedObject] = []
    for sl_idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        comp = labels[sl] == sl_idx
        count = int(comp.sum())
        if count < _MIN_COMPONENT_PX:
            continue
        top, left = sl[0].start, sl[1].start
        bh, bw = comp.shape
        fill = count / float(bh * bw)
        mean_rgb = canvas[sl][comp].mean(axis=0)
        color, dev = nearest_color(mean_rgb)
        if dev > TAU_COLOR:
            color = "unknown"
        shape = classify_fill(fill)
        size = classify_size(bh * bw)
        cy, cx = top + bh / 2.0, left + bw / 2.0
        row = min(range(GRID), key=lambda r: abs(cy - (r + 0.5) * h / GRID))
        col = min(range(GRID), key=lambda c: abs(cx - (c + 0.5) * w / GRID))
        objects.append(ParsedObject(shape, color, (row, col), size, (top, left, bh, bw), fill))
    objects.sort(key=lambda o: (o.cell, o.shape, o.color, o.size))
    return ParsedScene(tuple(objects), (h, w))


# -- vocabulary and tokenizer ----------------------------------------------------

PAD_TOKEN = "<pad>"
PAD_ID = 0
MAX_TOKENS = 16

_WORDS = (
    [PAD_TOKEN]
    + ["a", "and", "the", "at", "to", "of"]
    + ["left", "right", "above", "below"]
    + ["zero", "one", "two", "three", "four"]
    + ["small", "large"]
    + list(SHAPES)
    + [s + "s" for s in SHAPES]
    + list(COLOR_NAMES)
    + ["add", "remove", "make", "move"]
)
VOCAB: Dict[str, int] = {word: i for i, word in enumerate(_WORDS)}
VOCAB_SIZE = len(VOCAB)
assert VOCAB_SIZE <= 64

_NUM_WORDS = {2: "two", 3: "three", 4: "four"}
_CELL_WORDS = ["zero", "one", "two", "three"]


def tokenize(text: str) -> List[int]:
    words = text.split()
    if len(words) > MAX_TOKENS:
        raise ContractError(f"text longer than {MAX_TOKENS} tokens: {text!r}")
    ids = []
    for word in words:
        if word not in VOCAB or word == PAD_TOKEN:
            raise ContractError(f"out-of-vocabulary word {word!r}")
        ids.append(VOCAB[word])
    return ids + [PAD_ID] * (MAX_TOKENS - len(ids))


_ID_TO_WORD = {i: w for w, i in VOCAB.items()}


def detokenize(token_ids: Sequence[int]) -> str:
    words = []
    for tid in token_ids:
        if tid == PAD_ID:
            continue
        words.append(_ID_TO_WORD[int(tid)])
    return " ".join(words)


# -- prompt templates --------------------------------------------------------------

CATEGORIES = ("single_object", "two_object", "counting", "colors", "position", "color_binding")
RELATIONS = ("left", "right", "above", "below")


@dataclass(frozen=True)
class Prompt:
    template_id: str
    slots: dict
    text: str
    token_ids: Tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "slots": self.slots,
            "text": self.text,
            "token_ids": list(self.token_ids),
        }

    @staticmethod
    def from_dict(d: dict) -> "Prompt":
        return Prompt(d["template_id"], d["slots"], d["text"], tuple(d["token_ids"]))


def _mk_prompt(category: str, slots: dict, text: str) -> Prompt:
    return Prompt(category, slots, text, tuple(tokenize(text)))


def prompt_text(category: str, slots: dict) -> str:
    if category == "single_object":
        return f"a {slots['shape']}"
    if category == "two_object":
        return f"a {slots['shape1']} and a {slots['shape2']}"
    if category == "counting":
        return f"{_NUM_WORDS[slots['count']]} {slots['color']} {slots['shape']}s"
    if category == "colors":
        return f"a {slots['color']} {slots['shape']}"
    if category == "position":
        rel = slots["relation"]
        rel_text = f"{rel} of" if rel in ("left", "right") else rel
        return (
            f"a {slots['color1']} {slots['shape1']} {rel_text} a {slots['color2']} {slots['shape2']}"
        )
    if category == "color_binding":
        return f"a {slots['color1']} {slots['shape1']} and a {slots['color2']} {slots['shape2']}"
    raise ContractError(f"unknown category {category!r}")


# -- scene sampling -----------------------------------------------------------------

_MAX_TRIES = 2000


def _place_objects(rng: SeededRng, resolution, specs: List[Tuple[str, str, Optional[str]]]) -> List[ObjectSpec]:
    """Place (shape, color, size-or-None) specs at random non-touching cells."""
    for _ in range(_MAX_TRIES):
        placed: List[ObjectSpec] = []
        boxes = []
        ok = True
        for shape, color, size in specs:
            obj = None
            for _ in range(40):
                s = size if size is not None else rng.choice(SIZES)
                cand = ObjectSpec(shape, color, (int(rng.integers(0, GRID)), int(rng.integers(0, GRID))), s)
                if not placement_valid(cand, resolution):
                    continue
                box = object_box(cand, resolution)
                if any(not boxes_separated(box, b) for b in boxes):
                    continue
                obj = cand
                boxes.append(box)
                break
            if obj is None:
                ok = False
                break
            placed.append(obj)
        if ok:
            return placed
    raise ContractError(f"could not place {len(specs)} objects at {resolution}")


def sample_scene(rng: SeededRng, category: str, resolution: Optional[Tuple[int, int]] = None):
    """Draw a (scene, prompt) pair that satisfies the prompt by construction."""
    if category not in CATEGORIES:
        raise ContractError(f"unknown category {category!r}")
    res = resolution if resolution is not None else rng.choice(RESOLUTIONS)
    if res not in RESOLUTIONS:
        raise ContractError(f"unsupported resolution {res}")

    if category == "single_object":
        shape = rng.choice(SHAPES)
        objs = _place_objects(rng, res, [(shape, rng.choice(COLOR_NAMES), None)])
        return SceneSpec(tuple(objs), res), _mk_prompt(category, {"shape": shape}, prompt_text(category, {"shape": shape}))

    if category == "two_object":
        s1 = rng.choice(SHAPES)
        s2 = rng.choice([s for s in SHAPES if s != s1])
        objs = _place_objects(rng, res, [(s1, rng.choice(COLOR_NAMES), None), (s2, rng.choice(COLOR_NAMES), None)])
        slots = {"shape1": s1, "shape2": s2}
        return SceneSpec(tuple(objs), res), _mk_prompt(category, slots, prompt_text(category, slots))

    if category == "counting":
        n = int(rng.integers(2, 5))
        shape = rng.choice(SHAPES)
        color = rng.choice(COLOR_NAMES)
        objs = _place_objects(rng, res, [(shape, color, None)] * n)
        slots = {"count": n, "color": color, "shape": shape}
        return SceneSpec(tuple(objs), res), _mk_prompt(category, slots, prompt_text(category, slots))

    if category == "colors":
        shape = rng.choice(SHAPES)
        color = rng.choice(COLOR_NAMES)
        objs = _place_objects(rng, res, [(shape, color, None)])
        slots = {"color": color, "shape": shape}
        return SceneSpec(tuple(objs), res), _mk_prompt(category, slots, prompt_text(category, slots))

    if category == "position":
        for _ in range(_MAX_TRIES):
            s1, s2 = rng.choice(SHAPES), rng.choice(SHAPES)
            c1, c2 = rng.choice(COLOR_NAMES), rng.choice(COLOR_NAMES)
            if (s1, c1) == (s2, c2):
                continue
            rel = rng.choice(RELATIONS)
            objs = _place_objects(rng, res, [(s1, c1, None), (s2, c2, None)])
            o1, o2 = objs
            holds = {
                "left": o1.cell[1] < o2.cell[1],
                "right": o1.cell[1] > o2.cell[1],
                "above": o1.cell[0] < o2.cell[0],
                "below": o1.cell[0] > o2.cell[0],
            }[rel]
            if not holds:
                continue
            slots = {"color1": c1, "shape1": s1, "relation": rel, "color2": c2, "shape2": s2}
            return SceneSpec(tuple(objs), res), _mk_prompt(category, slots, prompt_text(category, slots))
        raise ContractError("position sampling exhausted retries")

    # color_binding
    for _ in range(_MAX_TRIES):
        s1 = rng.choice(SHAPES)
        s2 = rng.choice([s for s in SHAPES if s != s1])
        c1 = rng.choice(COLOR_NAMES)
        c2 = rng.choice([c for c in COLOR_NAMES if c != c1])
        objs = _place_objects(rng, res, [(s1, c1, None), (s2, c2, None)])
        slots = {"color1": c1, "shape1": s1, "color2": c2, "shape2": s2}
        return SceneSpec(tuple(objs), res), _mk_prompt(category, slots, prompt_text(category, slots))
    raise ContractError("color_binding sampling exhausted retries")


# -- edit instructions ----------------------------------------------------------------

EDIT_OPS = ("add", "remove", "recolor", "move")


@dataclass(frozen=True)
class EditInstruction:
    op: str
    selector: Tuple[str, str]  # (shape, color), matches exactly one source object
    args: dict
    text: str
    token_ids: Tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "op": self.op,
            "selector": list(self.selector),
            "args": self.args,
            "text": self.text,
            "token_ids": list(self.token_ids),
        }

    @staticmethod
    def from_dict(d: dict) -> "EditInstruction":
        args = dict(d["args"])
        if "cell" in args:
            args["cell"] = tuple(args["cell"])
        return EditInstruction(
            d["op"], (d["selector"][0], d["selector"][1]), args, d["text"], tuple(d["token_ids"])
        )


def _selector_matches(scene: SceneSpec, selector: Tuple[str, str]) -> List[ObjectSpec]:
    return [o for o in scene.objects if (o.shape, o.color) == selector]


def edit_text(op: str, selector: Tuple[str, str], args: dict) -> str:
    shape, color = selector
    if op == "remove":
        return f"remove the {color} {shape}"
    if op == "recolor":
        return f"make the {color} {shape} {args['new_color']}"
    if op == "move":
        r, c = args["cell"]
        return f"move the {color} {shape} to {_CELL_WORDS[r]} {_CELL_WORDS[c]}"
    if op == "add":
        spec = args["object"]
        r, c = spec["cell"]
        return f"add a {spec['size']} {spec['color']} {spec['shape']} at {_CELL_WORDS[r]} {_CELL_WORDS[c]}"
    raise ContractError(f"unknown edit op {op!r}")


def apply_edit(source: SceneSpec, instr: EditInstruction) -> SceneSpec:
    """Apply an instruction symbolically. Raises if it is not satisfiable."""
    if instr.op == "add":
        spec = ObjectSpec.from_dict(instr.args["object"])
        if len(source.objects) >= 4:
            raise ContractError("add would exceed 4 objects")
        target = SceneSpec(source.objects + (spec,), source.resolution)
        if not scene_valid(target):
            raise ContractError("added object collides or falls off canvas")
        return target

    matches = _selector_matches(source, instr.selector)
    if len(matches) != 1:
        raise ContractError(f"selector {instr.selector} matches {len(matches)} objects, need exactly 1")
    obj = matches[0]
    rest = tuple(o for o in source.objects if o is not obj)
    if instr.op == "remove":
        return SceneSpec(rest, source.resolution)
    if instr.op == "recolor":
        new = ObjectSpec(obj.shape, instr.args["new_color"], obj.cell, obj.size)
        return SceneSpec(rest + (new,), source.resolution)
    if instr.op == "move":
        new = ObjectSpec(obj.shape, obj.color, tuple(instr.args["cell"]), obj.size)
        target = SceneSpec(rest + (new,), source.resolution)
        if not scene_valid(target):
            raise ContractError("move destination collides or falls off canvas")
        return target
    raise ContractError(f"unknown edit op {instr.op!r}")


def affected_boxes(source: SceneSpec, instr: EditInstruction) -> List[Tuple[int, int, int, int]]:
    """Pixel regions an edit is allowed to change (everything else must be preserved)."""
    res = source.resolution
    if instr.op == "add":
        return [object_box(ObjectSpec.from_dict(instr.args["object"]), res)]
    obj = _selector_matches(source, instr.selector)[0]
    boxes = [object_box(obj, res)]
    if instr.op == "move":
        moved = ObjectSpec(obj.shape, obj.color, tuple(instr.args["cell"]), obj.size)
        boxes.append(object_box(moved, res))
    return boxes


def _random_scene(rng: SeededRng, resolution, n_objects: int) -> SceneSpec:
    specs = []
    for _ in range(n_objects):
        specs.append((rng.choice(SHAPES), rng.choice(COLOR_NAMES), None))
    return SceneSpec(tuple(_place_objects(rng, resolution, specs)), resolution)


def make_edit_pair(rng: SeededRng, resolution: Optional[Tuple[int, int]] = None):
    """Draw (source scene, instruction, target scene) with target = instr(source)."""
    res = resolution if resolution is not None else rng.choice(RESOLUTIONS)
    for _ in range(_MAX_TRIES):
        source = _random_scene(rng, res, int(rng.integers(1, 4)))
        op = rng.choice(EDIT_OPS)
        try:
            if op == "add":
                shape, color = rng.choice(SHAPES), rng.choice(COLOR_NAMES)
                size = rng.choice(SIZES)
                cell = (int(rng.integers(0, GRID)), int(rng.integers(0, GRID)))
                spec = ObjectSpec(shape, color, cell, size)
                args = {"object": spec.to_dict()}
                text = edit_text(op, (shape, color), args)
                instr = EditInstruction(op, (shape, color), args, text, tuple(tokenize(text)))
                target = apply_edit(source, instr)
                return source, instr, target

            candidates = [
                o for o in source.objects if len(_selector_matches(source, (o.shape, o.color))) == 1
            ]
            if not candidates:
                continue
            obj = rng.choice(candidates)
            selector = (obj.shape, obj.color)
            if op == "remove":
                args: dict = {}
            elif op == "recolor":
                args = {"new_color": rng.choice([c for c in COLOR_NAMES if c != obj.color])}
            else:  # move
                cell = (int(rng.integers(0, GRID)), int(rng.integers(0, GRID)))
                if cell == obj.cell:
                    continue
                args = {"cell": cell}
            text = edit_text(op, selector, args)
            instr = EditInstruction(op, selector, args, text, tuple(tokenize(text)))
            target = apply_edit(source, instr)
            return source, instr, target
        except ContractError:
            continue
    raise ContractError("edit-pair sampling exhausted retries")


# -- dataset records -----------------------------------------------------------------


def record_to_json(scene: SceneSpec, prompt: Prompt, edit: Optional[Tuple[EditInstruction, SceneSpec]] = None) -> str:
    rec = {
        "scene": scene.to_dict(),
        "prompt_text": prompt.text,
        "token_ids": list(prompt.token_ids),
        "category": prompt.template_id,
        "slots": prompt.slots,
    }
    if edit is not None:
        instr, target = edit
        rec["edit"] = {"instr": instr.to_dict(), "target_scene": target.to_dict()}
    return json.dumps(rec, sort_keys=True)


def record_from_json(line: str):
    rec = json.loads(line)
    scene = SceneSpec.from_dict(rec["scene"])
    prompt = Prompt(rec["category"], rec.get("slots", {}), rec["prompt_text"], tuple(rec["token_ids"]))
    edit = None
    if "edit" in rec:
        instr = EditInstruction.from_dict(rec["edit"]["instr"])
        edit = (instr, SceneSpec.from_dict(rec["edit"]["target_scene"]))
    return scene, prompt, edit
