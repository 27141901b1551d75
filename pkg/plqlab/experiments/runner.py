"""Mask-degradation and fill-restoration experiments.

Every (image, size) pair draws its mask from its own seed stream and the
stochastic quality estimate uses the same seed for the original and the
modified image, so records depend only on the declared seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import structlog

from ..constants import DEFAULT_REPEATS, DEFAULT_SEED, MASK_FILL_VALUE
from ..facemodel import EmbeddingModel
from ..fiq import FiqConfig, QualityResult, QualityStats, quality, quality_stats
from ..parallel import ordered_map
from ..plq import PlqMap, PlqOptions, find_low_quality_region, plq_map_with
from ..regions import Region
from ..seeding import derive_seed
from .fill import FillMode, fill_region
from .masks import FillValue, apply_mask, feasible_sizes, inner_region, place_random_mask, resolve_mask_sizes
from .metrics import delta_p, delta_q

logger = structlog.get_logger()

LabelledImage = tuple[str, np.ndarray]


@dataclass(frozen=True)
class DeltaRecord:
    image_id: str
    region: Region
    q_org: float
    q_mod: float
    delta_q: float
    delta_p: float

    @property
    def size(self) -> int:
        return self.region.height

    @property
    def sort_key(self) -> tuple[str, int]:
        return self.image_id, self.size


@dataclass(frozen=True)
class SkippedRecord:
    image_id: str
    size: int
    reason: str


@dataclass(frozen=True)
class MaskExperimentResult:
    records: tuple[DeltaRecord, ...]
    skipped: tuple[SkippedRecord, ...] = ()


def mask_seed(seed: int, image_id: str, size: int, k: int = 0) -> int:
    """Per-(image, size) stream; extra variants get their own key."""
    return derive_seed(seed, image_id, size) if k == 0 else derive_seed(seed, image_id, size, k)


def _compare(
    model: EmbeddingModel,
    image_id: str,
    original: np.ndarray,
    modified: np.ndarray,
    region: Region,
    fiq_config: FiqConfig,
    options: PlqOptions,
    baseline: tuple[QualityResult, PlqMap] | None = None,
) -> DeltaRecord:
    q_org, p_org = baseline or plq_map_with(model, original, fiq_config, options)
    q_mod, p_mod = plq_map_with(model, modified, fiq_config, options)
    return DeltaRecord(
        image_id=image_id,
        region=region,
        q_org=q_org.q_scaled,
        q_mod=q_mod.q_scaled,
        delta_q=delta_q(q_org.q_scaled, q_mod.q_scaled),
        delta_p=delta_p(p_org, p_mod, region),
    )


# ── Random-mask degradation ────────────────────────────
def run_mask_experiment(
    model: EmbeddingModel,
    images: Sequence[LabelledImage],
    sizes: Sequence[int] | None = None,
    fiq_config: FiqConfig | None = None,
    options: PlqOptions | None = None,
    seed: int = DEFAULT_SEED,
    per_size_count: int = 1,
    fill_value: FillValue = MASK_FILL_VALUE,
    workers: int | None = 1,
) -> MaskExperimentResult:
    """One record per image, size and variant, ordered by (image_id, size).

    ``sizes=None`` resolves sizes per image (absolute or fraction mode).
    """
    fiq_config = fiq_config or FiqConfig(seed=seed)
    options = options or PlqOptions()

    def one_image(item: LabelledImage) -> tuple[list[DeltaRecord], list[SkippedRecord]]:
        image_id, image = item
        h, w = image.shape[:2]
        wanted = list(sizes) if sizes is not None else resolve_mask_sizes(h, w)
        ok, bad = feasible_sizes(wanted, h, w)
        skipped = [SkippedRecord(image_id, s, f"mask size {s} infeasible for {h}×{w}") for s in bad]
        for s in bad:
            logger.warning("Skipping infeasible mask size", image_id=image_id, size=s, height=h, width=w)
        baseline = plq_map_with(model, image, fiq_config, options)
        records = []
        for s in ok:
            for k in range(per_size_count):
                masked, spec = place_random_mask(image, s, mask_seed(seed, image_id, s, k), fill_value)
                records.append(
                    _compare(model, image_id, image, masked, spec.region, fiq_config, options, baseline)
                )
        return records, skipped

    results = ordered_map(one_image, list(images), workers)
    records = sorted((r for rs, _ in results for r in rs), key=lambda r: r.sort_key)
    skipped = [s for _, ss in results for s in ss]
    logger.info("Mask experiment finished", images=len(results), records=len(records), skipped=len(skipped))
    return MaskExperimentResult(records=tuple(records), skipped=tuple(skipped))


# ── Fill restoration ───────────────────────────────────
class RegionSource(str, Enum):
    RANDOM = "random"
    LOWEST_PLQ = "lowest-plq"


@dataclass(frozen=True, eq=False)
class RestorationPair:
    image_id: str
    degraded: np.ndarray
    restored: np.ndarray
    region: Region
    clean: np.ndarray | None = None


@dataclass(frozen=True)
class RestorationOutcome:
    """q_org is the restored image, q_mod the degraded one: positive Δ means the fill helped."""

    record: DeltaRecord
    degraded_stats: QualityStats | None = None
    restored_stats: QualityStats | None = None
    q_clean: float | None = None


@dataclass(frozen=True)
class RestorationReport:
    outcomes: tuple[RestorationOutcome, ...]
    fraction_improved: float
    median_gain: float
    median_std: float | None = None
    skipped: tuple[SkippedRecord, ...] = field(default_factory=tuple)

    @property
    def records(self) -> tuple[DeltaRecord, ...]:
        return tuple(o.record for o in self.outcomes)

    @property
    def gain_exceeds_noise(self) -> bool | None:
        if self.median_std is None:
            return None
        return self.median_gain > self.median_std


def make_restoration_pairs(
    model: EmbeddingModel,
    images: Sequence[LabelledImage],
    size: int,
    mode: FillMode | str = FillMode.MEAN_FILL,
    region_source: RegionSource | str = RegionSource.RANDOM,
    fiq_config: FiqConfig | None = None,
    options: PlqOptions | None = None,
    seed: int = DEFAULT_SEED,
    fill_value: FillValue = MASK_FILL_VALUE,
) -> tuple[list[RestorationPair], list[SkippedRecord]]:
    """Mask each clean image, then fill the mask back in."""
    region_source = RegionSource(region_source)
    fiq_config = fiq_config or FiqConfig(seed=seed)
    options = options or PlqOptions()
    pairs, skipped = [], []
    for image_id, image in images:
        h, w = image.shape[:2]
        if not feasible_sizes([size], h, w)[0]:
            logger.warning("Skipping infeasible restoration size", image_id=image_id, size=size)
            skipped.append(SkippedRecord(image_id, size, f"size {size} infeasible for {h}×{w}"))
            continue
        if region_source is RegionSource.RANDOM:
            degraded, spec = place_random_mask(image, size, mask_seed(seed, image_id, size), fill_value)
            region = spec.region
        else:
            _, clean_map = plq_map_with(model, image, fiq_config, options)
            region = find_low_quality_region(clean_map, size, within=inner_region(h, w))
            degraded = apply_mask(image, region, fill_value)
        restored = fill_region(degraded, region, mode)
        pairs.append(RestorationPair(image_id, degraded, restored, region, clean=np.asarray(image, dtype=np.float64)))
    return pairs, skipped


def run_restoration_experiment(
    model: EmbeddingModel,
    pairs: Sequence[RestorationPair],
    fiq_config: FiqConfig | None = None,
    options: PlqOptions | None = None,
    repeats: int | None = DEFAULT_REPEATS,
    workers: int | None = 1,
) -> RestorationReport:
    """Compare restored against degraded images, with repeat statistics."""
    fiq_config = fiq_config or FiqConfig()
    options = options or PlqOptions()

    def one_pair(pair: RestorationPair) -> RestorationOutcome:
        record = _compare(model, pair.image_id, pair.restored, pair.degraded, pair.region, fiq_config, options)
        q_clean = None
        if pair.clean is not None:
            q_clean = quality(model, pair.clean, fiq_config).q_scaled
        if not repeats:
            return RestorationOutcome(record=record, q_clean=q_clean)
        return RestorationOutcome(
            record=record,
            degraded_stats=quality_stats(model, pair.degraded, fiq_config, repeats),
            restored_stats=quality_stats(model, pair.restored, fiq_config, repeats),
            q_clean=q_clean,
        )

    outcomes = sorted(ordered_map(one_pair, list(pairs), workers), key=lambda o: o.record.sort_key)
    gains = np.array([o.record.delta_q for o in outcomes])
    stds = [s.std for o in outcomes for s in (o.degraded_stats, o.restored_stats) if s is not None]
    report = RestorationReport(
        outcomes=tuple(outcomes),
        fraction_improved=float((gains > 0).mean()) if gains.size else 0.0,
        median_gain=float(np.median(gains)) if gains.size else 0.0,
        median_std=float(np.median(stds)) if stds else None,
    )
    logger.info(
        "Restoration experiment finished",
        pairs=len(outcomes),
        fraction_improved=round(report.fraction_improved, 4),
        median_gain=report.median_gain,
    )
    return report
