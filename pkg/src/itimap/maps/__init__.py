from .interp import GridSpec, InterpolationError, NaturalNeighbor, SpatialMap, interpolate_at, natural_neighbor
from .render import NoDataError, node_power, power_map, spectrogram, spectrogram_to_csv
from .report import (
    CAPACITY,
    MAX_REPORT_BYTES,
    BadLengthError,
    BadMagicError,
    BadVersionError,
    FieldRangeError,
    InterferenceReport,
    ReportEntry,
    ReportError,
    build_report,
    decode_report,
    encode_report,
    read_reports,
    reports_from_classified,
    write_reports,
)
from .tensor import InterferenceTensor, NodeRegistry, UnknownNodeError, build_tensor

__all__ = [
    "CAPACITY",
    "MAX_REPORT_BYTES",
    "BadLengthError",
    "BadMagicError",
    "BadVersionError",
    "FieldRangeError",
    "GridSpec",
    "InterferenceReport",
    "InterferenceTensor",
    "InterpolationError",
    "NaturalNeighbor",
    "NoDataError",
    "NodeRegistry",
    "ReportEntry",
    "ReportError",
    "SpatialMap",
    "UnknownNodeError",
    "build_report",
    "build_tensor",
    "decode_report",
    "encode_report",
    "interpolate_at",
    "natural_neighbor",
    "node_power",
    "power_map",
    "read_reports",
    "reports_from_classified",
    "spectrogram",
    "spectrogram_to_csv",
    "write_reports",
]
