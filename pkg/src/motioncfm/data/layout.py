"""Per-frame motion feature layout and the motion container types."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SLICE_NAMES = (
    "root_angular_velocity",
    "root_velocity_x",
    "root_velocity_z",
    "root_height",
    "joint_positions",
    "joint_velocities",
    "joint_rotations",
    "foot_contacts",
)


@dataclass(frozen=True)
class PoseLayout:
    """Index map of the per-frame feature vector.

    The frame is ``(root angular velocity, root x/z velocity, root height,
    local joint positions, joint velocities, 6D joint rotations, foot
    contacts)``. Positions and rotations cover the ``joint_count - 1``
    non-root joints while velocities cover every joint including the root,
    so 22 joints give 263 features and 21 give 251.

    Parameters
    ----------
    joint_count : int
        Number of skeleton joints including the root.
    """

    joint_count: int

    def __post_init__(self):
        if int(self.joint_count) != self.joint_count or self.joint_count < 2:
            raise ValueError(f"joint_count must be an integer >= 2, got {self.joint_count!r}")
        object.__setattr__(self, "joint_count", int(self.joint_count))

    @property
    def n_local_joints(self) -> int:
        return self.joint_count - 1

    @property
    def sizes(self) -> tuple[int, ...]:
        j = self.n_local_joints
        return (1, 1, 1, 1, 3 * j, 3 * self.joint_count, 6 * j, 4)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.sizes)[:-1]]))

    @property
    def feature_dim(self) -> int:
        return int(sum(self.sizes))

    @property
    def slices(self) -> dict[str, slice]:
        return {
            name: slice(start, start + size)
            for name, start, size in zip(SLICE_NAMES, self.offsets, self.sizes)
        }

    def __getitem__(self, name: str) -> slice:
        if name == "root_velocity":
            return slice(1, 3)
        return self.slices[name]


@dataclass
class MotionSequence:
    """An ``N x D`` feature matrix sampled at ``fps``."""

    frames: np.ndarray
    fps: float = 20.0
    layout: PoseLayout = field(default_factory=lambda: PoseLayout(8))

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError(f"frames must be 2-D (N, D), got shape {frames.shape}")
        if frames.shape[0] < 2:
            raise ValueError(f"a motion needs at least 2 frames, got {frames.shape[0]}")
        if frames.shape[1] != self.layout.feature_dim:
            raise ValueError(
                f"frame width {frames.shape[1]} does not match layout "
                f"feature_dim {self.layout.feature_dim}"
            )
        if not np.all(np.isfinite(frames)):
            raise ValueError("motion frames contain non-finite values")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        self.frames = frames
        self.fps = float(self.fps)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def joint_positions(self) -> np.ndarray:
        """Local (root-space) joint positions, shape ``(N, J-1, 3)``."""
        return self.frames[:, self.layout["joint_positions"]].reshape(self.n_frames, -1, 3)

    def check_contacts(self) -> None:
        """Raise if the foot-contact slice leaves ``[0, 1]``.

        Only ground-truth data is held to this; sampled motions keep their
        contact channels continuous and unclipped.
        """
        contacts = self.frames[:, self.layout["foot_contacts"]]
        if contacts.min() < 0 or contacts.max() > 1:
            raise ValueError("foot-contact entries must lie in [0, 1]")


@dataclass
class ConditionVocab:
    """Closed prompt vocabulary; prompt ``i`` has id ``i`` and the empty
    condition takes the id right after the last prompt."""

    prompts: list[str]

    def __post_init__(self):
        self.prompts = [str(p) for p in self.prompts]
        if len(set(self.prompts)) != len(self.prompts):
            raise ValueError("prompts must be unique")

    def __len__(self):
        return len(self.prompts)

    @property
    def null_id(self) -> int:
        return len(self.prompts)

    @property
    def n_conditions(self) -> int:
        """Rows of the condition embedding table (prompts plus the empty one)."""
        return len(self.prompts) + 1

    def id_of(self, prompt: str) -> int:
        try:
            return self.prompts.index(prompt)
        except ValueError:
            raise KeyError(f"unknown prompt {prompt!r}") from None

    def prompt_of(self, condition_id: int) -> str:
        if condition_id == self.null_id:
            return ""
        return self.prompts[condition_id]

    def check_id(self, condition_id: int, allow_null: bool = True) -> int:
        upper = self.null_id if allow_null else self.null_id - 1
        if int(condition_id) != condition_id or not 0 <= condition_id <= upper:
            raise ValueError(f"condition id {condition_id!r} outside [0, {upper}]")
        return int(condition_id)
