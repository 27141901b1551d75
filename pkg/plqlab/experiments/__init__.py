"""Random-mask degradation and fill-restoration experiments."""

from .fill import FillMode, border_ring, fill_region
from .masks import (
    MaskSpec,
    apply_mask,
    inner_margins,
    inner_region,
    max_mask_size,
    place_random_mask,
    resolve_mask_sizes,
)
from .metrics import delta_p, delta_q
from .reports import records_frame, restoration_frame, summary_frame, write_csv
from .runner import (
    DeltaRecord,
    MaskExperimentResult,
    RegionSource,
    RestorationOutcome,
    RestorationPair,
    RestorationReport,
    SkippedRecord,
    make_restoration_pairs,
    run_mask_experiment,
    run_restoration_experiment,
)

__all__ = [
    "DeltaRecord",
    "FillMode",
    "MaskExperimentResult",
    "MaskSpec",
    "RegionSource",
    "RestorationOutcome",
    "RestorationPair",
    "RestorationReport",
    "SkippedRecord",
    "apply_mask",
    "border_ring",
    "delta_p",
    "delta_q",
    "fill_region",
    "inner_margins",
    "inner_region",
    "make_restoration_pairs",
    "max_mask_size",
    "place_random_mask",
    "records_frame",
    "resolve_mask_sizes",
    "restoration_frame",
    "run_mask_experiment",
    "run_restoration_experiment",
    "summary_frame",
    "write_csv",
]
