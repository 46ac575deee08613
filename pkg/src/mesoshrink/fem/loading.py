"""Shrinkage eigenstrain programs for the two drying scenarios.

The solver imposes a negative isotropic eigenstrain in the shrinking
phases, growing by 10 microstrain per pseudo-time step up to 1000
microstrain after 100 steps.  The uniform scenario applies it everywhere;
the non-uniform scenario follows a depth profile from the drying surface,
either the built-in drying-front family or a tabulated import.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import NONUNIFORM, UNIFORM

EPS_INCREMENT = -10e-6     # eigenstrain increment per step
EPS_MAX = -1000e-6         # ultimate surface eigenstrain
N_STEPS = 100
SNAPSHOT_STRIDE = 10


class ProfileTableMismatch(Exception):
    """Supplied profile table does not cover the mesh/core depth range."""


@dataclass
class FrontProfile:
    """Parametric drying-front family for the non-uniform scenario.

    eps(y, t) = eps_surf(t) * max(0, 1 - y / d(t))^m with the front depth
    d(t) growing as sqrt(t).  Surface value evolves linearly, matching the
    uniform program at y = 0.
    """

    front_depth_max: float = 50.0  # mm, beam half-depth
    exponent: float = 2.0

    def __call__(self, t_step, depth_mm):
        depth_mm = np.asarray(depth_mm, dtype=float)
        surf = EPS_INCREMENT * t_step
        if t_step == 0:
            return np.zeros_like(depth_mm)
        d = self.front_depth_max * np.sqrt(t_step / N_STEPS)
        shape = np.maximum(0.0, 1.0 - depth_mm / d) ** self.exponent
        return surf * shape


@dataclass
class TabulatedProfile:
    """Depth profile interpolated from (depth_mm, snapshot, eigenstrain) rows.

    Snapshots index the usual 0..10 grid (steps 0, 10, ..., 100); steps in
    between interpolate linearly in pseudo-time, matching how the reference
    profiles evolve between exports.
    """

    depths: np.ndarray      # (D,) strictly increasing, mm
    snapshots: np.ndarray   # (S,) strictly increasing, snapshot indices
    values: np.ndarray      # (S, D) eigenstrain (negative)

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=float)
        self.snapshots = np.asarray(self.snapshots, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.snapshots), len(self.depths)):
            raise ProfileTableMismatch("table shape does not match its axes")

    def validate_range(self, max_depth_mm):
        if self.depths[0] > 1e-9 or self.depths[-1] < max_depth_mm - 1e-9:
            raise ProfileTableMismatch(
                f"table depths [{self.depths[0]}, {self.depths[-1]}] mm do not "
                f"cover [0, {max_depth_mm}] mm")
        if self.snapshots[0] > 0 or self.snapshots[-1] < N_STEPS / SNAPSHOT_STRIDE:
            raise ProfileTableMismatch("table snapshots do not cover 0..10")

    def __call__(self, t_step, depth_mm):
        depth_mm = np.asarray(depth_mm, dtype=float)
        s = t_step / SNAPSHOT_STRIDE
        i = np.searchsorted(self.snapshots, s, side="right") - 1
        i = min(max(i, 0), len(self.snapshots) - 2)
        w = (s - self.snapshots[i]) / (self.snapshots[i + 1] - self.snapshots[i])
        lo = np.interp(depth_mm, self.depths, self.values[i])
        hi = np.interp(depth_mm, self.depths, self.values[i + 1])
        return (1.0 - w) * lo + w * hi

    @classmethod
    def from_csv(cls, path):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        depths = np.unique(rows[:, 0])
        snaps = np.unique(rows[:, 1])
        values = np.full((len(snaps), len(depths)), np.nan)
        di = {d: i for i, d in enumerate(depths)}
        si = {s: i for i, s in enumerate(snaps)}
        for d, s, v in rows:
            values[si[s], di[d]] = v
        if np.any(np.isnan(values)):
            raise ProfileTableMismatch("profile table has holes")
        return cls(depths, snaps, values)


@dataclass
class LoadProgram:
    scenario: str
    n_steps: int = N_STEPS
    snapshot_stride: int = SNAPSHOT_STRIDE
    profile: object = None  # callable (t_step, depth_mm) -> eigenstrain

    def __post_init__(self):
        if self.scenario == NONUNIFORM and self.profile is None:
            self.profile = FrontProfile()

    def eigenstrain(self, t_step, depth_mm):
        """Imposed eigenstrain at solver step t for depths from the surface."""
        depth_mm = np.asarray(depth_mm, dtype=float)
        if self.scenario == UNIFORM:
            return np.full_like(depth_mm, EPS_INCREMENT * t_step)
        return self.profile(t_step, depth_mm)

    def surface_value(self, t_step):
        return EPS_INCREMENT * t_step


def shrinkage_profile(scenario, t_step, depth_mm, program=None):
    """Eigenstrain at depth(s) from the drying surface at solver step t."""
    if program is None:
        program = LoadProgram(scenario)
    return program.eigenstrain(t_step, depth_mm)
