"""File formats: FGRD field rasters, PGM previews, sidecars, scalars CSV.

FGRD layout: magic "FGRD", version u32, H u32, W u32, C u32, pitch_mm f32,
then C*H*W little-endian f32, channel-major row-major.  All integers are
little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FGRD"
VERSION = 1
HEADER = struct.Struct("<4sIIIIf")

SCALARS_HEADER = "t,eps_imposed_surface,eps_observed,k_pa,omega_total"


class FgrdError(Exception):
    pass


def write_fgrd(path, data, pitch_mm):
    """Write a (C, H, W) or (H, W) float field."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise FgrdError("expected (C, H, W) data")
    c, h, w = data.shape
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, h, w, c, pitch_mm))
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_fgrd(path):
    """Read an FGRD file, returns ((C, H, W) float32, pitch_mm)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FgrdError(f"{path}: truncated header")
    magic, version, h, w, c, pitch = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FgrdError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FgrdError(f"{path}: unsupported version {version}")
    expected = HEADER.size + 4 * c * h * w
    if len(raw) != expected:
        raise FgrdError(f"{path}: size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(c, h, w)
    return data.copy(), pitch


def write_pgm(path, rho):
    """Binary P5 preview of the geometry channel, rho scaled to {0,128,255}."""
    levels = np.rint(np.asarray(rho) * 255.0)
    levels[np.isclose(rho, 0.5)] = 128
    img = levels.astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def write_sidecar(path, micro, config):
    """JSON sidecar with seed, scenario, particles, and config hash."""
    from .microgen import particles_to_json

    doc = {
        "seed": micro.seed,
        "scenario": micro.scenario,
        "particles": particles_to_json(micro.particles),
        "config_hash": config.config_hash() if config is not None else None,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def read_sidecar(path):
    from .microgen import particles_from_json

    doc = json.loads(Path(path).read_text())
    doc["particles"] = particles_from_json(doc["particles"])
    return doc


def write_scalars_csv(path, rows):
    """Rows of (t, eps_imposed_surface, eps_observed, k_pa, omega_total)."""
    lines = [SCALARS_HEADER]
    for t, eps_imp, eps_obs, k, omega in rows:
        lines.append(f"{int(t)},{eps_imp:.10e},{eps_obs:.10e},{k:.10e},{omega:.10e}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_scalars_csv(path):
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != SCALARS_HEADER:
        raise FgrdError(f"{path}: bad scalars header")
    rows = []
    for line in text[1:]:
        t, eps_imp, eps_obs, k, omega = line.split(",")
        rows.append((int(t), float(eps_imp), float(eps_obs), float(k), float(omega)))
    return rows
