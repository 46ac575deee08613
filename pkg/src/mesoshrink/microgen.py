"""Synthetic concrete mesostructure generation via level-set particle placement.

Particles are random star-shaped polygons inserted largest-first into a
signed-distance field; candidate centers are sampled only where the field
exceeds the circumscribed radius, so placements never overlap.  The phase
raster codes aggregate / interface / mortar and is the geometry input to
both the reference FEM and the surrogate networks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import NONUNIFORM, UNIFORM, wrap_axes

AGG = 0
ITZ = 1
MORTAR = 2

#: channel encoding of the phase raster: rho(x) in {0, 0.5, 1}
RHO_VALUES = {AGG: 0.0, ITZ: 0.5, MORTAR: 1.0}

# minimum central angle between consecutive polygon vertices (rad)
MIN_SECTOR = np.deg2rad(15.0)


class NoAdmissibleRegion(Exception):
    """No pixel admits a particle of the requested radius."""


class OverlapViolation(Exception):
    """Inserted particle interior intersects an existing interior."""


class TargetUnreachable(Exception):
    """Placement could not reach the target area fraction.

    Carries the achieved per-class fractions for reporting.
    """

    def __init__(self, msg, achieved):
        super().__init__(msg)
        self.achieved = achieved


class IllegalAugmentation(Exception):
    """Augmentation op not admitted by the scenario."""


@dataclass(frozen=True)
class SizeClass:
    nominal_diameter: float  # mm
    target_area_fraction: float

    def __post_init__(self):
        if self.nominal_diameter <= 0:
            raise ValueError("nominal_diameter must be positive")
        if not 0.0 <= self.target_area_fraction <= 0.5:
            raise ValueError("target_area_fraction outside [0, 0.5]")

    @property
    def radius(self):
        return 0.5 * self.nominal_diameter


@dataclass
class PolygonParticle:
    center: np.ndarray          # (2,) mm, (x, y)
    vertices: np.ndarray        # (k, 2) mm, counter-clockwise
    radius: float               # circumscribed radius, mm
    diameter: float             # size-class nominal diameter, mm
    smooth_offset: float = 0.0  # contour level s of the particle distance field, mm
    scale: float = 1.0          # central scaling applied after smoothing

    def signed_distance(self, px, py):
        """Signed distance (mm) of points to the particle contour, < 0 inside.

        The effective contour is the level set ``d(c + (x - c)/scale) = s``
        of the polygon distance field, which is the plain polygon boundary
        for ``s = 0, scale = 1``.
        """
        if self.scale != 1.0:
            px = self.center[0] + (px - self.center[0]) / self.scale
            py = self.center[1] + (py - self.center[1]) / self.scale
        d = polygon_signed_distance(self.vertices, px, py)
        return d - self.smooth_offset

    @property
    def reach(self):
        """Radius of a disk certainly containing the particle, mm."""
        return self.radius * self.scale + self.smooth_offset * self.scale


@dataclass
class DistanceGrid:
    values: np.ndarray        # (H, W) signed distance to nearest boundary, mm
    pitch: float              # mm per pixel
    wrap: tuple               # (wrap_y, wrap_x)

    @classmethod
    def empty(cls, height, width, pitch, wrap):
        big = 1e9
        return cls(np.full((height, width), big), pitch, wrap)

    def pixel_centers(self):
        h, w = self.values.shape
        x = (np.arange(w) + 0.5) * self.pitch
        y = (np.arange(h) + 0.5) * self.pitch
        return np.meshgrid(x, y)


@dataclass
class PhaseGrid:
    codes: np.ndarray  # (H, W) uint8 in {AGG, ITZ, MORTAR}
    pitch: float       # mm per pixel

    def rho(self):
        """Geometry channel: 0 aggregate, 0.5 interface, 1 mortar."""
        out = np.empty(self.codes.shape, dtype=np.float32)
        for code, value in RHO_VALUES.items():
            out[self.codes == code] = value
        return out

    def copy(self):
        return PhaseGrid(self.codes.copy(), self.pitch)


@dataclass
class Microstructure:
    phase: PhaseGrid
    particles: list
    scenario: str
    seed: int

    @property
    def pitch(self):
        return self.phase.pitch


@dataclass
class GenConfig:
    size_classes: tuple            # largest diameter first
    height: int = 100
    width: int = 100
    pitch: float = 0.32            # mm per pixel (32 mm / 100 px)
    clearance: float = 0.32        # min distance to nearest neighbour, mm
    max_attempts: int = 10000      # placement attempts per particle
    fraction_tol: float = 0.02     # absolute tolerance on area fractions
    scenario: str = UNIFORM
    seed: int = 0

    def __post_init__(self):
        self.size_classes = tuple(self.size_classes)
        diams = [sc.nominal_diameter for sc in self.size_classes]
        if any(d1 <= d2 for d2, d1 in zip(diams[1:], diams)) and diams != sorted(diams, reverse=True):
            raise ValueError("size classes must be ordered largest first")
        if len(diams) != len(set(diams)):
            raise ValueError("duplicate size-class diameters")
        if sum(sc.target_area_fraction for sc in self.size_classes) > 0.5 + 1e-12:
            raise ValueError("total target fraction exceeds 0.5")
        if self.scenario not in (UNIFORM, NONUNIFORM):
            raise ValueError(f"unknown scenario {self.scenario!r}")

    def to_json_dict(self):
        return {
            "size_classes": [
                {"nominal_diameter": sc.nominal_diameter,
                 "target_area_fraction": sc.target_area_fraction}
                for sc in self.size_classes
            ],
            "height": self.height,
            "width": self.width,
            "pitch": self.pitch,
            "clearance": self.clearance,
            "max_attempts": self.max_attempts,
            "fraction_tol": self.fraction_tol,
            "scenario": self.scenario,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d):
        d = dict(d)
        d["size_classes"] = tuple(
            SizeClass(sc["nominal_diameter"], sc["target_area_fraction"])
            for sc in d["size_classes"]
        )
        return cls(**d)

    def config_hash(self):
        payload = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


# ---------------------------------------------------------------------------
# geometry primitives


def polygon_area(vertices):
    """Shoelace area, positive for counter-clockwise order."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def polygon_signed_distance(vertices, px, py):
    """Exact signed distance from points to a simple polygon, < 0 inside.

    ``px``/``py`` are broadcastable arrays (mm).  Inside/outside is decided
    by crossing number; points exactly on an edge get distance 0.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    ax, ay = vertices[:, 0], vertices[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)

    pxf = px[..., None]
    pyf = py[..., None]
    ex, ey = bx - ax, by - ay
    rx, ry = pxf - ax, pyf - ay
    ee = ex * ex + ey * ey
    t = np.clip((rx * ex + ry * ey) / ee, 0.0, 1.0)
    dx = rx - t * ex
    dy = ry - t * ey
    dist = np.sqrt(np.min(dx * dx + dy * dy, axis=-1))

    # crossing number (edges half-open in y to count each crossing once)
    cond = (ay <= pyf) != (by <= pyf)
    xcross = ax + (pyf - ay) * ex / np.where(ey == 0.0, 1.0, ey)
    crossings = np.sum(cond & (xcross > pxf), axis=-1)
    inside = crossings % 2 == 1
    return np.where(inside, -dist, dist)


def polygon_is_simple(vertices):
    """True when no two non-adjacent edges intersect."""
    n = len(vertices)
    segs = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]

    def intersects(s1, s2):
        (p, q), (r, s) = s1, s2
        d1 = np.cross(q - p, r - p)
        d2 = np.cross(q - p, s - p)
        d3 = np.cross(s - r, p - r)
        d4 = np.cross(s - r, q - r)
        return (d1 * d2 < 0) and (d3 * d4 < 0)

    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if intersects(segs[i], segs[j]):
                return False
    return True


def _image_shifts(height, width, pitch, wrap):
    """Periodic image offsets (dx, dy) in mm for the wrap flags."""
    ly, lx = height * pitch, width * pitch
    ys = (-ly, 0.0, ly) if wrap[0] else (0.0,)
    xs = (-lx, 0.0, lx) if wrap[1] else (0.0,)
    return [(dx, dy) for dy in ys for dx in xs]


def particle_distance_field(particle, height, width, pitch, wrap):
    """Min signed distance over all periodic images, at pixel centers."""
    x = (np.arange(width) + 0.5) * pitch
    y = (np.arange(height) + 0.5) * pitch
    gx, gy = np.meshgrid(x, y)
    best = np.full((height, width), np.inf)
    for dx, dy in _image_shifts(height, width, pitch, wrap):
        np.minimum(best, particle.signed_distance(gx - dx, gy - dy), out=best)
    return best


# ---------------------------------------------------------------------------
# placement


def make_polygon(size_class, rng, center=(0.0, 0.0)):
    """Random star-shaped polygon with 4-8 vertices inscribed in radius r.

    Central angles are a randomized partition of 2 pi (sector floor 15 deg)
    and vertex radii are uniform in [0.75 r, r], so the polygon is simple
    by construction.
    """
    r = size_class.radius
    n = int(rng.integers(4, 9))
    raw = rng.uniform(size=n)
    sectors = MIN_SECTOR + raw / raw.sum() * (2.0 * np.pi - n * MIN_SECTOR)
    start = rng.uniform(0.0, 2.0 * np.pi)
    angles = start + np.concatenate(([0.0], np.cumsum(sectors[:-1])))
    radii = rng.uniform(0.75 * r, r, size=n)
    center = np.asarray(center, dtype=float)
    verts = center + radii[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return PolygonParticle(center=center, vertices=verts, radius=r,
                           diameter=size_class.nominal_diameter)


def sample_admissible_center(dist, radius, clearance, rng):
    """Uniformly pick a pixel center where a particle of `radius` fits."""
    admissible = dist.values > radius + clearance
    idx = np.flatnonzero(admissible)
    if idx.size == 0:
        raise NoAdmissibleRegion(f"no admissible pixel for radius {radius} mm")
    pick = idx[rng.integers(idx.size)]
    h, w = dist.values.shape
    i, j = divmod(int(pick), w)
    return np.array([(j + 0.5) * dist.pitch, (i + 0.5) * dist.pitch])


def insert_particle(dist, particle):
    """Merge a particle into the distance field (min update), in place."""
    h, w = dist.values.shape
    d_new = particle_distance_field(particle, h, w, dist.pitch, dist.wrap)
    if np.any((d_new < 0) & (dist.values < 0)):
        raise OverlapViolation("particle interior intersects an existing interior")
    np.minimum(dist.values, d_new, out=dist.values)
    return dist


def generate(config):
    """Generate a microstructure; deterministic in the config (incl. seed)."""
    rng = np.random.default_rng(config.seed)
    wrap = wrap_axes(config.scenario)
    dist = DistanceGrid.empty(config.height, config.width, config.pitch, wrap)
    domain_area = config.height * config.width * config.pitch ** 2
    tol_area = config.fraction_tol * domain_area

    particles = []
    achieved = {sc.nominal_diameter: 0.0 for sc in config.size_classes}
    for sc in config.size_classes:
        target_area = sc.target_area_fraction * domain_area
        attempts = 0
        exhausted = False
        while achieved[sc.nominal_diameter] < target_area - tol_area:
            attempts += 1
            if attempts > config.max_attempts:
                exhausted = True
                break
            try:
                center = sample_admissible_center(dist, sc.radius, config.clearance, rng)
            except NoAdmissibleRegion:
                exhausted = True
                break
            poly = make_polygon(sc, rng, center)
            area = polygon_area(poly.vertices)
            if achieved[sc.nominal_diameter] + area > target_area + tol_area:
                continue  # overshoot; redraw (a smaller polygon may fit)
            insert_particle(dist, poly)
            particles.append(poly)
            achieved[sc.nominal_diameter] += area
            attempts = 0
        if exhausted:
            fractions = {d: a / domain_area for d, a in achieved.items()}
            raise TargetUnreachable(
                f"class {sc.nominal_diameter} mm stuck at "
                f"{fractions[sc.nominal_diameter]:.3f} of {sc.target_area_fraction:.3f}",
                fractions)

    phase = rasterize(particles, (config.height, config.width), config.pitch, wrap)
    return Microstructure(phase=phase, particles=particles,
                          scenario=config.scenario, seed=config.seed)


# ---------------------------------------------------------------------------
# rasterization


def dilate8(mask, wrap):
    """One-pixel 8-neighbourhood dilation honouring the wrap flags."""
    out = mask.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            shifted = mask
            if dy:
                shifted = np.roll(shifted, dy, axis=0)
                if not wrap[0]:  # clear wrapped-in rows
                    if dy > 0:
                        shifted[:dy] = False
                    else:
                        shifted[dy:] = False
            if dx:
                shifted = np.roll(shifted, dx, axis=1)
                if not wrap[1]:
                    if dx > 0:
                        shifted[:, :dx] = False
                    else:
                        shifted[:, dx:] = False
            out |= shifted
    return out


def particle_mask(particle, dims, pitch, wrap):
    """Pixels whose centers lie in the particle (boundary counts inside)."""
    h, w = dims
    return particle_distance_field(particle, h, w, pitch, wrap) <= 0.0


def rasterize(particles, dims, pitch, wrap):
    """Phase raster: AGG inside particles, one-pixel ITZ ring, MORTAR else."""
    h, w = dims
    agg = np.zeros((h, w), dtype=bool)
    for p in particles:
        agg |= particle_mask(p, dims, pitch, wrap)
    itz = dilate8(agg, wrap) & ~agg
    codes = np.full((h, w), MORTAR, dtype=np.uint8)
    codes[itz] = ITZ
    codes[agg] = AGG
    return PhaseGrid(codes, pitch)


def area_fractions(micro):
    """Per-size-class aggregate area ratios plus the total, on pixel counts.

    ITZ counts as matrix.  Ownership is the particle's rasterized mask
    clipped to the current aggregate pixels, so erased or smoothed grids
    report their actual remaining areas.
    """
    codes = micro.phase.codes
    h, w = codes.shape
    wrap = wrap_axes(micro.scenario)
    agg = codes == AGG
    n_pix = codes.size
    fractions = {}
    for p in micro.particles:
        owned = particle_mask(p, (h, w), micro.pitch, wrap) & agg
        key = p.diameter
        fractions[key] = fractions.get(key, 0.0) + owned.sum() / n_pix
    total = agg.sum() / n_pix
    return fractions, total


# ---------------------------------------------------------------------------
# transforms


def smooth(micro, s_bar):
    """Round particle corners via a positive level-set threshold.

    The aggregate contour is taken at distance ``s = s_bar * r`` per
    particle and each particle is centrally shrunk so its pixel area is
    preserved; offenders that would overlap after scaling are shrunk in
    1% steps.
    """
    if not 0.0 <= s_bar <= 0.5:
        raise ValueError("s_bar outside [0, 0.5]")
    if s_bar == 0.0:
        return Microstructure(micro.phase.copy(), [replace(p) for p in micro.particles],
                              micro.scenario, micro.seed)

    dims = micro.phase.codes.shape
    pitch = micro.pitch
    wrap = wrap_axes(micro.scenario)

    new_particles = []
    for p in micro.particles:
        target_px = int(particle_mask(p, dims, pitch, wrap).sum())
        s = s_bar * p.radius
        smoothed = replace(p, smooth_offset=s, scale=1.0)
        lam = _area_preserving_scale(smoothed, target_px, dims, pitch, wrap)
        new_particles.append(replace(smoothed, scale=lam))

    _shrink_overlaps(new_particles, dims, pitch, wrap)

    phase = rasterize(new_particles, dims, pitch, wrap)
    return Microstructure(phase, new_particles, micro.scenario, micro.seed)


def _area_preserving_scale(particle, target_px, dims, pitch, wrap):
    """Bisect the central scale so the rasterized pixel count matches."""
    def count(lam):
        return int(particle_mask(replace(particle, scale=lam), dims, pitch, wrap).sum())

    lo, hi = 0.4, 1.0
    if count(hi) <= target_px:
        return hi
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if count(mid) > target_px:
            hi = mid
        else:
            lo = mid
    # pick the endpoint with the closer count
    if abs(count(lo) - target_px) <= abs(count(hi) - target_px):
        return lo
    return hi


def _shrink_overlaps(particles, dims, pitch, wrap):
    """Shrink later-placed offenders by 1% steps until masks are disjoint."""
    masks = [particle_mask(p, dims, pitch, wrap) for p in particles]
    for i in range(len(particles)):
        for j in range(i + 1, len(particles)):
            guard = 0
            while np.any(masks[i] & masks[j]):
                particles[j] = replace(particles[j], scale=particles[j].scale * 0.99)
                masks[j] = particle_mask(particles[j], dims, pitch, wrap)
                guard += 1
                if guard > 200:
                    raise OverlapViolation("could not resolve smoothing overlap")


def erase_outer_layer(micro, thickness_px):
    """Remove aggregate within `thickness_px` rows of the drying surface.

    The drying surface is the last raster row.  Erased AGG/ITZ pixels turn
    to mortar and the remaining bodies are re-skinned with a one-pixel ITZ
    outside the erased band.
    """
    if micro.scenario != NONUNIFORM:
        raise ValueError("outer-layer erasure applies to the non-uniform scenario")
    h, w = micro.phase.codes.shape
    if not 0 <= thickness_px < h:
        raise ValueError("thickness_px outside [0, H)")
    if thickness_px == 0:
        return Microstructure(micro.phase.copy(), [replace(p) for p in micro.particles],
                              micro.scenario, micro.seed)

    wrap = wrap_axes(micro.scenario)
    agg = micro.phase.codes == AGG
    agg[h - thickness_px:, :] = False
    itz = dilate8(agg, wrap) & ~agg
    itz[h - thickness_px:, :] = False  # erased band stays pure mortar
    codes = np.full((h, w), MORTAR, dtype=np.uint8)
    codes[itz] = ITZ
    codes[agg] = AGG
    return Microstructure(PhaseGrid(codes, micro.pitch),
                          [replace(p) for p in micro.particles],
                          micro.scenario, micro.seed)


# ---------------------------------------------------------------------------
# augmentation

ROT90, HFLIP, VFLIP, SHIFT = "rot90", "hflip", "vflip", "shift"


def admitted_ops(scenario):
    if scenario == UNIFORM:
        return (ROT90, HFLIP, VFLIP, SHIFT)
    return (HFLIP, SHIFT)


def augment(stack, op, scenario):
    """Apply one augmentation op to all channels of an aligned stack.

    `stack` has shape (..., H, W); `op` is ("rot90", k), ("hflip",),
    ("vflip",) or ("shift", dy, dx).  Every op is a pixel bijection.
    """
    kind = op[0]
    if kind not in admitted_ops(scenario):
        raise IllegalAugmentation(f"{kind} not admitted under {scenario}")
    if kind == ROT90:
        return np.ascontiguousarray(np.rot90(stack, k=op[1], axes=(-2, -1)))
    if kind == HFLIP:
        return np.ascontiguousarray(np.flip(stack, axis=-1))
    if kind == VFLIP:
        return np.ascontiguousarray(np.flip(stack, axis=-2))
    if kind == SHIFT:
        dy, dx = op[1], op[2]
        if scenario == NONUNIFORM and dy != 0:
            raise IllegalAugmentation("vertical shift not admitted under nonuniform")
        return np.roll(stack, (dy, dx), axis=(-2, -1))
    raise ValueError(f"unknown augmentation {op!r}")


def inverse_op(op):
    kind = op[0]
    if kind == ROT90:
        return (ROT90, (4 - op[1]) % 4)
    if kind in (HFLIP, VFLIP):
        return op
    if kind == SHIFT:
        return (SHIFT, -op[1], -op[2])
    raise ValueError(f"unknown augmentation {op!r}")


def random_augment_op(scenario, rng, dims=(100, 100)):
    """Draw one admitted augmentation op."""
    h, w = dims
    if scenario == UNIFORM:
        choice = rng.integers(4)
        if choice == 0:
            return (ROT90, int(rng.integers(1, 4)))
        if choice == 1:
            return (HFLIP,)
        if choice == 2:
            return (VFLIP,)
        return (SHIFT, int(rng.integers(h)), int(rng.integers(w)))
    choice = rng.integers(2)
    if choice == 0:
        return (HFLIP,)
    return (SHIFT, 0, int(rng.integers(w)))


# ---------------------------------------------------------------------------
# serialization helpers


def particles_to_json(particles):
    return [
        {
            "diameter": p.diameter,
            "center": [float(p.center[0]), float(p.center[1])],
            "vertices": [[float(x), float(y)] for x, y in p.vertices],
            "radius": p.radius,
            "smooth_offset": p.smooth_offset,
            "scale": p.scale,
        }
        for p in particles
    ]


def particles_from_json(data):
    return [
        PolygonParticle(
            center=np.array(d["center"], dtype=float),
            vertices=np.array(d["vertices"], dtype=float),
            radius=d["radius"],
            diameter=d["diameter"],
            smooth_offset=d.get("smooth_offset", 0.0),
            scale=d.get("scale", 1.0),
        )
        for d in data
    ]
