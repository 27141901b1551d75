"""Shared constants, defaults and presets."""

from __future__ import annotations

import math
from dataclasses import dataclass

# ── Stochastic quality ─────────────────────────────────
DEFAULT_PASSES = 100
DEFAULT_DROPOUT = 0.5
DEFAULT_SEED = 0
DEFAULT_REPEATS = 10

# ── Pixel-level quality ────────────────────────────────
DEFAULT_GAMMA = 7.5
DEFAULT_CLIP_NORM = 1.0
GAMMA_TARGET_QUANTILE = 95.0
GAMMA_TARGET_VALUE = 0.9

# ── Calibration ────────────────────────────────────────
# mean ± 2 std maps to 0.05 / 0.95 after scaling
SCALE_LOGIT_SPAN = math.log(19.0)
SCALE_STD_MULTIPLIER = 2.0


@dataclass(frozen=True)
class ScalingPreset:
    """Published (alpha, r, gamma) for a recognition backbone."""

    name: str
    alpha: float
    r: float
    gamma: float


ARCFACE = ScalingPreset(name="arcface", alpha=130.0, r=0.88, gamma=7.5)
FACENET = ScalingPreset(name="facenet", alpha=450.0, r=0.93, gamma=5.5)
PRESETS: dict[str, ScalingPreset] = {p.name: p for p in (ARCFACE, FACENET)}
DEFAULT_PRESET = ARCFACE

# ── Reference architecture ("toy-16") ──────────────────
TOY_INPUT_SHAPE = (32, 32, 3)
TOY_EMBEDDING_DIM = 16
TOY_PENULTIMATE_DIM = 64
TOY_ARCHITECTURE = "toy-16"

# ── Toy trainer (Adam, cosine-decayed step) ────────────
TOY_IDENTITIES = 50
TOY_SAMPLES_PER_IDENTITY = 8
TOY_EPOCHS = 40
TOY_LEARNING_RATE = 0.005
TOY_BATCH_SIZE = 8
TOY_LR_FLOOR = 0.1  # final step as a fraction of the peak
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
TOY_ACCURACY_GATE = 0.9

# ── Weight file ────────────────────────────────────────
WEIGHT_MAGIC = b"PLQM"
WEIGHT_VERSION = 1
WEIGHT_SUFFIX = ".plqm"

# ── Experiments ────────────────────────────────────────
INNER_MARGIN_FRACTION = 0.05
ABSOLUTE_MASK_SIZES = (10, 20, 30, 40, 50)
MASK_SIZE_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5)
ABSOLUTE_SIZE_MIN_SIDE = 112
MASK_FILL_VALUE = 0.0
FILL_RING_WIDTH = 2
BLUR_PASSES = 25

# ── Files & rendering ──────────────────────────────────
FLOAT_FORMAT = "%.9g"
PLQ_CSV_MAX = 0.999999999  # largest value below 1 at nine significant digits
COLORMAP_ID = "ryg-v1"
IMAGE_SUFFIXES = (".ppm", ".png")

RECORD_COLUMNS = ("image_id", "size", "top", "left", "q_org", "q_mod", "delta_q", "delta_p")
SUMMARY_COLUMNS = (
    "size",
    "n",
    "frac_positive_dq",
    "median_dq",
    "q1_dq",
    "q3_dq",
    "frac_positive_dp",
    "median_dp",
)

# ── Exit codes ─────────────────────────────────────────
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def fmt_float(value: float) -> str:
    """Nine significant digits, the format used wherever numbers leave the process."""
    return FLOAT_FORMAT % value
