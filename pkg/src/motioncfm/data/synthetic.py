"""Procedural text-labelled motion families.

Every family is an analytic program: local joint coordinates are finite
sums of sinusoids riding on a root that moves with constant speed and
constant turn rate. Derivatives of any order are therefore available in
closed form, which gives each generated sequence an exact smoothness
reference (see :meth:`MotionProgram.closed_form_jitter`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layout import ConditionVocab, MotionSequence, PoseLayout

JOINT_NAMES = (
    "pelvis",
    "head",
    "left_hand",
    "right_hand",
    "left_heel",
    "right_heel",
    "left_toe",
    "right_toe",
)
# contact channel order: left heel, left toe, right heel, right toe
CONTACT_JOINTS = (3, 5, 4, 6)
SKELETON = PoseLayout(len(JOINT_NAMES))

FAMILY_KINDS = ("stand", "walk", "circle", "wave")

_DEFAULT_RANGES = {
    "stand": {"scale": (0.9, 1.1)},
    "walk": {"scale": (0.9, 1.1), "speed": (0.8, 1.4)},
    "circle": {"scale": (0.9, 1.1), "speed": (0.7, 1.2), "turn_rate": (0.4, 0.9)},
    "wave": {"scale": (0.9, 1.1), "wave_freq": (5.0, 9.0), "wave_amp": (0.08, 0.16)},
}

_DEFAULT_PROMPTS = {
    "stand": "a person stands still",
    "walk": "a person walks forward",
    "circle": "a person walks in a circle",
    "wave": "a person waves with the right hand",
}


@dataclass
class FamilySpec:
    kind: str
    prompt: str | None = None
    count: int = 200
    ranges: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown motion family {self.kind!r}; expected one of {FAMILY_KINDS}")
        if self.prompt is None:
            self.prompt = _DEFAULT_PROMPTS[self.kind]
        if self.count < 1:
            raise ValueError(f"family {self.kind!r} needs count >= 1")
        merged = dict(_DEFAULT_RANGES[self.kind])
        for key, bounds in self.ranges.items():
            if key not in merged:
                raise ValueError(f"family {self.kind!r} has no parameter {key!r}")
            lo, hi = bounds
            if not lo <= hi:
                raise ValueError(f"range for {key!r} is empty: {bounds}")
            merged[key] = (float(lo), float(hi))
        self.ranges = merged


@dataclass
class DatasetSpec:
    families: list = field(default_factory=lambda: [FamilySpec(k) for k in FAMILY_KINDS])
    fps: float = 20.0
    min_frames: int = 40
    max_frames: int = 196
    contact_threshold: float = 0.02  # length units per frame interval

    def __post_init__(self):
        self.families = [f if isinstance(f, FamilySpec) else FamilySpec(**f) for f in self.families]
        if len(self.families) < 2:
            raise ValueError("a dataset spec needs at least 2 motion families")
        if len({f.prompt for f in self.families}) != len(self.families):
            raise ValueError("family prompts must be distinct")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not 4 <= self.min_frames <= self.max_frames:
            raise ValueError("need 4 <= min_frames <= max_frames")
        if not self.contact_threshold > 0:
            raise ValueError("contact_threshold must be positive")

    def to_dict(self):
        return {
            "families": [
                {"kind": f.kind, "prompt": f.prompt, "count": f.count,
                 "ranges": {k: list(v) for k, v in f.ranges.items()}}
                for f in self.families
            ],
            "fps": self.fps,
            "min_frames": self.min_frames,
            "max_frames": self.max_frames,
            "contact_threshold": self.contact_threshold,
        }


def _sum_of_sines(tau, offset, amp, freq, phase, order):
    # amp/phase: (H, ...), freq: (H,); returns (len(tau), ...)
    out = np.zeros((tau.shape[0],) + offset.shape)
    for h in range(freq.shape[0]):
        arg = freq[h] * tau + order * np.pi / 2
        arg = arg.reshape((-1,) + (1,) * offset.ndim) + phase[h]
        out += amp[h] * freq[h] ** order * np.sin(arg)
    if order == 0:
        out += offset
    return out


@dataclass
class MotionProgram:
    """Closed-form trajectory of one synthetic sequence.

    Local joint coordinates (root frame, absolute height on y) are
    ``offset + sum_h amp[h] * sin(freq[h] * tau + phase[h])``.
    """

    offset: np.ndarray  # (J', 3)
    amp: np.ndarray  # (H, J', 3)
    phase: np.ndarray  # (H, J', 3)
    freq: np.ndarray  # (H,) rad/s
    rot_amp: np.ndarray  # (H, J') swing angle about the local x axis
    rot_phase: np.ndarray  # (H, J')
    height: float
    height_amp: np.ndarray  # (H,)
    height_phase: np.ndarray  # (H,)
    speed: float = 0.0
    turn_rate: float = 0.0
    heading: float = 0.0

    def local_positions(self, tau, order=0):
        return _sum_of_sines(np.asarray(tau, float), self.offset, self.amp, self.freq, self.phase, order)

    def swing_angles(self, tau, order=0):
        zero = np.zeros(self.rot_amp.shape[1])
        return _sum_of_sines(np.asarray(tau, float), zero, self.rot_amp, self.freq, self.rot_phase, order)

    def root_height(self, tau, order=0):
        tau = np.asarray(tau, float)
        wave = _sum_of_sines(tau, np.zeros(()), self.height_amp, self.freq, self.height_phase, order)
        return wave + self.height if order == 0 else wave

    def root_heading(self, tau):
        return self.heading + self.turn_rate * np.asarray(tau, float)

    def root_xz(self, tau):
        theta = self.root_heading(tau)
        tau = np.asarray(tau, float)
        if self.turn_rate == 0.0:
            return self.speed * tau[:, None] * np.array([np.sin(self.heading), np.cos(self.heading)])
        radius = self.speed / self.turn_rate
        x = radius * (np.cos(self.heading) - np.cos(theta))
        z = radius * (np.sin(theta) - np.sin(self.heading))
        return np.stack([x, z], axis=1)

    def global_positions(self, tau):
        """World-space joint positions, shape ``(len(tau), J', 3)``."""
        local = self.local_positions(tau)
        theta = self.root_heading(tau)[:, None]
        root = self.root_xz(tau)
        c, s = np.cos(theta), np.sin(theta)
        gx = root[:, :1] + local[..., 0] * c + local[..., 2] * s
        gz = root[:, 1:] - local[..., 0] * s + local[..., 2] * c
        return np.stack([gx, local[..., 1], gz], axis=-1)

    def closed_form_jitter(self, n_frames, fps, order=3):
        """Mean joint-derivative magnitude at the centres of the finite-difference stencils.

        This is the continuous-time value that :func:`motioncfm.metrics.jitter`
        approximates on the sampled sequence; the discrepancy is O(1/fps^2).
        """
        tau = (np.arange(n_frames - order) + order / 2.0) / fps
        deriv = self.local_positions(tau, order)
        return float(np.linalg.norm(deriv, axis=-1).mean())

    def render(self, n_frames, fps, contact_threshold=0.02, layout=SKELETON):
        tau = np.arange(n_frames) / fps
        n = n_frames
        pos = self.local_positions(tau)
        # root velocity in the heading frame, then the local joints; per frame interval
        root_vel = np.stack([np.zeros(n), self.root_height(tau, 1), np.full(n, self.speed)], axis=1)
        vel = np.concatenate([root_vel[:, None], self.local_positions(tau, 1)], axis=1) / fps
        ang = self.swing_angles(tau)
        rot6 = np.zeros((n, ang.shape[1], 6))
        rot6[..., 0] = 1.0
        rot6[..., 4] = np.cos(ang)
        rot6[..., 5] = np.sin(ang)
        feet = self.global_positions(tau)[:, list(CONTACT_JOINTS)]
        contacts = derive_foot_contacts(feet, fps, contact_threshold * fps)
        frames = np.zeros((n, layout.feature_dim))
        frames[:, layout["root_angular_velocity"]] = self.turn_rate / fps
        frames[:, layout["root_velocity_z"]] = self.speed / fps
        frames[:, layout["root_height"]] = self.root_height(tau)[:, None]
        frames[:, layout["joint_positions"]] = pos.reshape(n, -1)
        frames[:, layout["joint_velocities"]] = vel.reshape(n, -1)
        frames[:, layout["joint_rotations"]] = rot6.reshape(n, -1)
        frames[:, layout["foot_contacts"]] = contacts
        # float32-representable so motion files round-trip bit-exactly
        frames = frames.astype(np.float32).astype(np.float64)
        return MotionSequence(frames, fps=fps, layout=layout)


def derive_foot_contacts(heel_toe_positions, fps, threshold):
    """Binary contact labels from heel/toe speeds.

    Parameters
    ----------
    heel_toe_positions : array, shape (N, 4, 3)
    fps : float
    threshold : float
        Speed threshold in length units per second.

    Returns
    -------
    array, shape (N, 4)
        1 where the forward-difference speed is below ``threshold``; the
        final frame repeats the previous frame's label.
    """
    p = np.asarray(heel_toe_positions, dtype=np.float64)
    if p.ndim != 3 or p.shape[1:] != (4, 3):
        raise ValueError(f"expected (N, 4, 3) heel/toe positions, got {p.shape}")
    if p.shape[0] < 2:
        raise ValueError("foot contacts need at least 2 frames")
    speed = np.linalg.norm(np.diff(p, axis=0), axis=-1) * fps
    contact = (speed < threshold).astype(np.float64)
    return np.concatenate([contact, contact[-1:]], axis=0)


def _rest_pose(scale):
    s = scale
    return np.array([
        [0.0, 1.65 * s, 0.0],  # head
        [0.25 * s, 0.85 * s, 0.0],  # left hand
        [-0.25 * s, 0.85 * s, 0.0],  # right hand
        [0.1 * s, 0.05, -0.05 * s],  # left heel
        [-0.1 * s, 0.05, -0.05 * s],  # right heel
        [0.1 * s, 0.03, 0.12 * s],  # left toe
        [-0.1 * s, 0.03, 0.12 * s],  # right toe
    ])


def _draw(rng, bounds):
    lo, hi = bounds
    return float(rng.uniform(lo, hi))


def make_program(kind, ranges, rng) -> MotionProgram:
    """Draw one analytic program of family ``kind``."""
    j = SKELETON.n_local_joints
    scale = _draw(rng, ranges["scale"])
    offset = _rest_pose(scale)
    heading = float(rng.uniform(-np.pi, np.pi))
    phase0 = float(rng.uniform(0, 2 * np.pi))
    height = 0.95 * scale

    if kind in ("stand", "wave"):
        freq = np.array([1.0])
        amp = np.zeros((1, j, 3))
        phase = np.zeros((1, j, 3))
        rot_amp = np.zeros((1, j))
        rot_phase = np.zeros((1, j))
        offset[1:3, 2] += rng.uniform(-0.05, 0.05, size=2)
        if kind == "wave":
            freq = np.array([_draw(rng, ranges["wave_freq"])])
            offset[2] = [-0.3 * scale, 1.55 * scale, 0.15 * scale]
            amp[0, 2, 0] = _draw(rng, ranges["wave_amp"])
            phase[0, 2, 0] = phase0
            rot_amp[0, 2] = 0.6
            rot_phase[0, 2] = phase0
        return MotionProgram(
            offset, amp, phase, freq, rot_amp, rot_phase, height,
            height_amp=np.zeros(1), height_phase=np.zeros(1), heading=heading,
        )

    speed = _draw(rng, ranges["speed"])
    stride = 0.3 * scale
    omega = speed / stride  # stance foot comes to rest once per cycle
    turn_rate = 0.0
    if kind == "circle":
        turn_rate = _draw(rng, ranges["turn_rate"]) * (1 if rng.random() < 0.5 else -1)
    freq = np.array([omega, 2 * omega])
    amp = np.zeros((2, j, 3))
    phase = np.zeros((2, j, 3))
    rot_amp = np.zeros((2, j))
    rot_phase = np.zeros((2, j))
    lift = 0.12 * scale
    for side, (heel, toe, hand) in enumerate(((3, 5, 1), (4, 6, 2))):
        ph = phase0 + side * np.pi
        for joint in (heel, toe):
            amp[0, joint, 2] = stride
            phase[0, joint, 2] = ph
            amp[0, joint, 1] = lift / 2
            phase[0, joint, 1] = ph + np.pi / 2
            offset[joint, 1] += lift / 2
            rot_amp[0, joint] = 0.4
            rot_phase[0, joint] = ph
        amp[0, hand, 2] = 0.2 * scale
        phase[0, hand, 2] = ph + np.pi
        rot_amp[0, hand] = 0.5
        rot_phase[0, hand] = ph + np.pi
    bob = 0.03 * scale
    for joint in (0, 1, 2):
        amp[1, joint, 1] = bob
        phase[1, joint, 1] = 2 * phase0 + np.pi / 2
    return MotionProgram(
        offset, amp, phase, freq, rot_amp, rot_phase, height,
        height_amp=np.array([0.0, bob]), height_phase=np.array([0.0, 2 * phase0 + np.pi / 2]),
        speed=speed, turn_rate=turn_rate, heading=heading,
    )


def _sequence_seed(seed, index, split):
    if split == 0:
        return np.random.SeedSequence([int(seed), index])
    return np.random.SeedSequence([int(seed), index], spawn_key=(int(split),))


def sample_programs(spec: DatasetSpec, seed: int, split: int = 0):
    """Yield ``(program, n_frames, condition_id)`` in dataset order.

    Each sequence draws from its own ``SeedSequence([seed, index])`` so the
    result does not depend on generation order or parallelism. A non-zero
    ``split`` spawns disjoint streams, for held-out sets.
    """
    index = 0
    for cid, family in enumerate(spec.families):
        for _ in range(family.count):
            rng = np.random.default_rng(_sequence_seed(seed, index, split))
            n_frames = int(rng.integers(spec.min_frames, spec.max_frames + 1))
            yield make_program(family.kind, family.ranges, rng), n_frames, cid
            index += 1


def generate_synthetic_dataset(spec: DatasetSpec | None = None, seed: int = 0, return_programs=False,
                               split: int = 0):
    """Render a labelled synthetic dataset.

    ``split`` selects an independent family of random streams; split 0 is
    the training set and any other value gives held-out data for the
    same ``(spec, seed)``.

    Returns
    -------
    motions : list of MotionSequence
    condition_ids : list of int
    vocab : ConditionVocab
        One prompt per family, in family order.
    programs : list of MotionProgram
        Only when ``return_programs`` is true.
    """
    spec = DatasetSpec() if spec is None else spec
    vocab = ConditionVocab([f.prompt for f in spec.families])
    motions, ids, programs = [], [], []
    for program, n_frames, cid in sample_programs(spec, seed, split):
        motion = program.render(n_frames, spec.fps, spec.contact_threshold)
        motion.check_contacts()
        motions.append(motion)
        ids.append(cid)
        programs.append(program)
    if return_programs:
        return motions, ids, vocab, programs
    return motions, ids, vocab
