"""tagsync: clock-offset recovery between single-photon time-tag streams.

Pipeline: simulate (or load) a pair of tag streams, locate the coincidence
peak with a coarse wide-window scan, histogram pair differences around it at
fine resolution, and fit a Gaussian to read off the offset. A binned
FFT-correlation identifier with a significance threshold is included for
comparison.
"""

from .correlate import (
    CoarseParams,
    CoarseResult,
    CoincidenceHistogram,
    brute_force_count,
    coarse_scan,
    count_coincidences,
    fine_scan,
    load_histogram,
    save_histogram,
)
from .errors import (
    CapacityError,
    DegenerateStatisticsError,
    FormatError,
    HarnessError,
    InsufficientDataError,
    NoPeakError,
    PeakNotFoundError,
    RangeError,
    ResolutionError,
    TagSyncError,
    ValidationError,
)
from .fftcorr import (
    BaselineParams,
    BaselineResult,
    bin_stream,
    cross_correlate,
    ho_identify,
    ho_identify_iterative,
    save_significance_csv,
    significance,
    threshold_sp,
)
from .gaussfit import (
    FWHM_SIGMA_RATIO,
    GaussianFitResult,
    PrecisionPrediction,
    fit_gaussian,
    fit_quadratic_offset,
    predict_precision,
)
from .spdc import (
    ClockModel,
    SimTruth,
    SourceConfig,
    config_from_dict,
    config_to_dict,
    detect_arm,
    drifting_clock_replica,
    dump_config,
    emit_pairs,
    load_config,
    per_detector_jitter_replica,
    remote_fiber_replica,
    simulate,
    table1_replica,
)
from .streams import TagStream, load_stream, quantize_to_lsb, save_stream, shift_stream

__version__ = "0.1.0"
