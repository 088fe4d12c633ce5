from .io import (
    MotionFileError,
    MotionFormatError,
    MotionTruncatedError,
    NonFiniteMotionError,
    read_dataset,
    read_motion_file,
    write_dataset,
    write_motion_file,
)
from .layout import ConditionVocab, MotionSequence, PoseLayout
from .normalize import (
    MotionNormalizer,
    NormStats,
    denormalize,
    fit_normalization,
    normalize,
)
from .synthetic import (
    SKELETON,
    DatasetSpec,
    FamilySpec,
    MotionProgram,
    derive_foot_contacts,
    generate_synthetic_dataset,
)

__all__ = [
    "SKELETON", "ConditionVocab", "DatasetSpec", "FamilySpec", "MotionFileError", "MotionFormatError",
    "MotionNormalizer", "MotionProgram", "MotionSequence", "MotionTruncatedError", "NonFiniteMotionError",
    "NormStats", "PoseLayout", "denormalize", "derive_foot_contacts", "fit_normalization",
    "generate_synthetic_dataset", "normalize", "read_dataset", "read_motion_file", "write_dataset",
    "write_motion_file",
]
