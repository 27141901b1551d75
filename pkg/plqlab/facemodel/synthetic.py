"""Synthetic identities: parametric cartoon faces rendered from seeds.

Identity parameters (head shape, skin tone, eye and mouth geometry) come
from the identity seed; each sample adds a small pose/brightness jitter
and pixel noise from its own stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..constants import TOY_INPUT_SHAPE
from ..regions import Region
from ..seeding import derive_rng, derive_seed


class PrimitiveShape(str, Enum):
    ELLIPSE = "ellipse"
    RECTANGLE = "rectangle"


@dataclass(frozen=True)
class Primitive:
    """A filled shape in normalized canvas coordinates (0..1)."""

    name: str
    shape: PrimitiveShape
    cy: float
    cx: float
    ry: float
    rx: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class SyntheticFaceSpec:
    identity_seed: int
    canvas: tuple[int, int, int] = TOY_INPUT_SHAPE
    jitter: float = 0.03
    noise: float = 0.02
    components: tuple[Primitive, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", _identity_components(self.identity_seed))

    def head_box(self) -> Region:
        """Pixel box around the head ellipse, clipped to the canvas."""
        head = self.components[0]
        h, w, _ = self.canvas
        top = max(0, int(np.floor((head.cy - head.ry) * h)))
        left = max(0, int(np.floor((head.cx - head.rx) * w)))
        bottom = min(h, int(np.ceil((head.cy + head.ry) * h)))
        right = min(w, int(np.ceil((head.cx + head.rx) * w)))
        return Region(top, left, bottom - top, right - left)

    def render(self, sample_index: int) -> np.ndarray:
        return render_face(self, sample_index)


@dataclass(frozen=True, eq=False)
class FaceSample:
    image_id: str
    label: int
    image: np.ndarray
    spec: SyntheticFaceSpec


def _identity_components(identity_seed: int) -> tuple[Primitive, ...]:
    rng = derive_rng(identity_seed, "identity")
    u = rng.uniform

    skin = tuple(np.clip(np.array([u(0.45, 0.95), u(0.3, 0.75), u(0.2, 0.6)]), 0, 1))
    head = Primitive("head", PrimitiveShape.ELLIPSE, u(0.48, 0.54), 0.5, u(0.34, 0.44), u(0.28, 0.38), skin)

    eye_y = u(0.36, 0.46)
    eye_dx = u(0.11, 0.17)
    eye_r = (u(0.035, 0.07), u(0.05, 0.09))
    eye_color = tuple(u(0.0, 0.35, size=3))
    left_eye = Primitive("left_eye", PrimitiveShape.ELLIPSE, eye_y, 0.5 - eye_dx, *eye_r, eye_color)
    right_eye = Primitive("right_eye", PrimitiveShape.ELLIPSE, eye_y, 0.5 + eye_dx, *eye_r, eye_color)

    brow_color = tuple(u(0.0, 0.3, size=3))
    brow_y = eye_y - u(0.07, 0.11)
    brow_r = (u(0.012, 0.025), u(0.05, 0.09))
    left_brow = Primitive("left_brow", PrimitiveShape.RECTANGLE, brow_y, 0.5 - eye_dx, *brow_r, brow_color)
    right_brow = Primitive("right_brow", PrimitiveShape.RECTANGLE, brow_y, 0.5 + eye_dx, *brow_r, brow_color)

    nose = Primitive(
        "nose",
        PrimitiveShape.RECTANGLE,
        u(0.52, 0.58),
        0.5,
        u(0.04, 0.08),
        u(0.015, 0.035),
        tuple(np.clip(np.array(skin) * u(0.6, 0.85), 0, 1)),
    )
    mouth = Primitive(
        "mouth",
        PrimitiveShape.RECTANGLE,
        u(0.68, 0.76),
        0.5,
        u(0.02, 0.045),
        u(0.08, 0.16),
        (u(0.45, 0.85), u(0.05, 0.3), u(0.05, 0.3)),
    )
    return (head, left_brow, right_brow, left_eye, right_eye, nose, mouth)


def render_face(spec: SyntheticFaceSpec, sample_index: int) -> np.ndarray:
    """H×W×3 image in [0, 1] for one sample of an identity."""
    h, w, c = spec.canvas
    rng = derive_rng(spec.identity_seed, "sample", sample_index)
    shift_y, shift_x = rng.uniform(-spec.jitter, spec.jitter, size=2)
    brightness = rng.uniform(0.9, 1.1)
    background = np.full(3, rng.uniform(0.1, 0.3))

    yy, xx = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
    image = np.broadcast_to(background, (h, w, 3)).copy()
    for prim in spec.components:
        wobble = rng.uniform(-spec.jitter / 3, spec.jitter / 3, size=2)
        cy = prim.cy + shift_y + wobble[0]
        cx = prim.cx + shift_x + wobble[1]
        if prim.shape is PrimitiveShape.ELLIPSE:
            inside = ((yy - cy) / prim.ry) ** 2 + ((xx - cx) / prim.rx) ** 2 <= 1.0
        else:
            inside = (np.abs(yy - cy) <= prim.ry) & (np.abs(xx - cx) <= prim.rx)
        image[inside] = prim.color

    image = image * brightness + rng.normal(0.0, spec.noise, size=image.shape)
    image = np.clip(image, 0.0, 1.0)
    if c != 3:
        image = np.repeat(image.mean(axis=2, keepdims=True), c, axis=2)
    return image


def make_dataset(
    identities: int,
    samples_per_identity: int,
    seed: int = 0,
    canvas: tuple[int, int, int] = TOY_INPUT_SHAPE,
) -> list[FaceSample]:
    """Render ``identities`` × ``samples_per_identity`` labelled faces."""
    samples = []
    for label in range(identities):
        spec = SyntheticFaceSpec(identity_seed=derive_seed(seed, "identity", label), canvas=canvas)
        for k in range(samples_per_identity):
            samples.append(
                FaceSample(
                    image_id=f"id{label:03d}_s{k:02d}",
                    label=label,
                    image=spec.render(k),
                    spec=spec,
                )
            )
    return samples
