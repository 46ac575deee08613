"""Plane-stress quad mesh over the phase raster with periodic constraints.

One bilinear quadrilateral element per pixel, 2x2 Gauss quadrature.  The
uniform scenario couples opposite edges through leader-follower ties with
macroscopic displacement-gradient degrees of freedom; the non-uniform
scenario is periodic in x only, with the beam core beyond the meshed strip
represented by an axial truss stack tied to the same macroscopic strain.

Raster row H-1 is the drying surface; mesh y runs down the raster so
element (i, j) is pixel (i, j).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import NONUNIFORM, UNIFORM
from ..microgen import AGG, ITZ, MORTAR
from . import material
from .material import AGG_MAT, ITZ_MAT, MORTAR_MAT, elastic_matrix

GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)

#: beam half-depth for the non-uniform scenario (mm); the mesh covers the
#: strip nearest the drying surface and trusses the remainder of the core.
BEAM_HALF_DEPTH_MM = 50.0


class SingularSystem(Exception):
    """Damage fully disconnected the mesh."""


def _element_basis(size):
    """B matrices (4, 3, 8) at the Gauss points of a square quad, side `size`."""
    Bs = []
    scale = 2.0 / size
    for eta in GAUSS:
        for xi in GAUSS:
            dN = np.array([
                [-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)],
                [-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)],
            ]) / 4.0 * scale
            B = np.zeros((3, 8))
            B[0, 0::2] = dN[0]
            B[1, 1::2] = dN[1]
            B[2, 0::2] = dN[1]
            B[2, 1::2] = dN[0]
            Bs.append(B)
    wdet = (size / 2.0) ** 2  # unit Gauss weights, constant Jacobian
    return np.array(Bs), wdet


def _gauss_offsets(size):
    """Local (dx, dy) of the Gauss points from the element corner."""
    pts = []
    for eta in GAUSS:
        for xi in GAUSS:
            pts.append(((1 + xi) / 2.0 * size, (1 + eta) / 2.0 * size))
    return np.array(pts)


@dataclass
class QuadModel:
    height: int
    width: int
    size: float                 # element size, m
    pitch_mm: float
    scenario: str
    phase: np.ndarray           # (E,) element phase codes
    B: np.ndarray               # (4, 3, 8)
    wdet: float
    M_stack: np.ndarray         # (E, 4, 8, 8) elastic element integrands
    b_stack: np.ndarray         # (E, 4, 8) eigenstrain load integrands
    D_stack: np.ndarray         # (E, 3, 3)
    E_phase: np.ndarray         # (E,) Young's moduli
    shrinks: np.ndarray         # (E,) bool
    edof: np.ndarray            # (E, 8) global dof per element
    asm_rows: np.ndarray        # (E*64,)
    asm_cols: np.ndarray
    T: sp.csr_matrix            # (n_full, n_red) constraint expansion
    macro_base: int             # first macro dof in the reduced vector
    n_macro: int
    gp_depth_mm: np.ndarray     # (E, 4) Gauss-point depth from drying surface
    truss_stiffness: float = 0.0      # E_h * V_core, N (per unit thickness)
    truss_depths_mm: np.ndarray = None
    shrink_reduction: float = 1.0     # observed/imposed ratio of the strip
    materials: dict = None

    @property
    def n_full(self):
        return 2 * (self.height + 1) * (self.width + 1)

    @property
    def n_red(self):
        return self.T.shape[1]

    @property
    def n_elems(self):
        return self.height * self.width

    @property
    def volume(self):
        """Meshed volume per unit thickness, m^2."""
        return self.n_elems * self.size ** 2

    @property
    def cell_length(self):
        return self.width * self.size

    def axial_dof(self):
        """Reduced index of the macroscopic axial (xx) strain dof."""
        return self.macro_base

    def transverse_dof(self):
        if self.scenario != UNIFORM:
            raise ValueError("transverse macro dof exists only for uniform")
        return self.macro_base + 2

    def macro_strains(self, u_red):
        """(eps_xx, eps_yy, eps_xy) for uniform, (eps_a,) for non-uniform."""
        if self.scenario == UNIFORM:
            hxx, hs, hyy = u_red[self.macro_base:self.macro_base + 3]
            return hxx, hyy, hs
        return (u_red[self.macro_base],)

    def truss_eigenstrain(self, program, t_step):
        """Axial eigenstrain of the core truss stack at solver step t."""
        if self.truss_stiffness == 0.0:
            return 0.0
        prof = program.eigenstrain(t_step, self.truss_depths_mm)
        return self.shrink_reduction * float(np.mean(prof))


def _build_constraints(height, width, size, scenario, fixed=True):
    """Expansion matrix from reduced (master + macro) to full nodal dofs.

    Uniform: masters are the (H x W) lower-left node block plus the
    macroscopic displacement gradient [Hxx, Hxy, Hyx, Hyy]; when `fixed`,
    Hxy and Hyx collapse into a single shared shear dof (removing the
    rigid rotation) and node (0, 0) is pinned.  Non-uniform: masters are
    all rows but only the first W columns, plus one axial strain dof.
    """
    wrap_y = scenario == UNIFORM
    n_nodes_y = height + 1
    n_nodes_x = width + 1

    if wrap_y:
        n_master_nodes = height * width

        def master_of(i, j):
            mi, mj = i % height, j % width
            return mi * width + mj, (j - mj) * size, (i - mi) * size
    else:
        n_master_nodes = n_nodes_y * width

        def master_of(i, j):
            mj = j % width
            return i * width + mj, (j - mj) * size, 0.0

    if scenario == UNIFORM:
        n_macro = 3 if fixed else 4
        # column of each H component in the macro block
        macro_col = {"xx": 0, "xy": 1, "yx": 1, "yy": 2} if fixed \
            else {"xx": 0, "xy": 1, "yx": 2, "yy": 3}
    else:
        n_macro = 1
        macro_col = {"xx": 0}

    macro_base = 2 * n_master_nodes
    n_red = macro_base + n_macro

    rows, cols, data = [], [], []
    for i in range(n_nodes_y):
        for j in range(n_nodes_x):
            node = i * n_nodes_x + j
            m, dx, dy = master_of(i, j)
            rows += [2 * node, 2 * node + 1]
            cols += [2 * m, 2 * m + 1]
            data += [1.0, 1.0]
            if dx != 0.0 or dy != 0.0:
                if scenario == UNIFORM:
                    entries = [(2 * node, "xx", dx), (2 * node, "xy", dy),
                               (2 * node + 1, "yx", dx), (2 * node + 1, "yy", dy)]
                else:
                    entries = [(2 * node, "xx", dx)]
                for r, key, val in entries:
                    if val != 0.0:
                        rows.append(r)
                        cols.append(macro_base + macro_col[key])
                        data.append(val)

    T = sp.coo_matrix((data, (rows, cols)),
                      shape=(2 * n_nodes_y * n_nodes_x, n_red)).tocsc()
    if fixed:
        keep = np.ones(n_red, dtype=bool)
        keep[[0, 1]] = False  # pin node (0, 0)
        T = T[:, keep]
        macro_base -= 2
    return T.tocsr(), macro_base, T.shape[1] - macro_base


def build_model(micro, scenario=None, fixed=True, with_truss=True):
    """Assemble the constrained quad model for a microstructure."""
    from .solver import homogenize_axial, solve_stress_free  # cycle-free at call time

    scenario = scenario or micro.scenario
    codes = micro.phase.codes
    height, width = codes.shape
    pitch_mm = micro.phase.pitch
    size = pitch_mm * 1e-3

    B, wdet = _element_basis(size)
    mats = {MORTAR: MORTAR_MAT, ITZ: ITZ_MAT, AGG: AGG_MAT}
    D_by_phase = {}
    M_by_phase = {}
    b_by_phase = {}
    for code, mat in mats.items():
        D = elastic_matrix(mat.E, mat.nu)
        D_by_phase[code] = D
        M_by_phase[code] = np.einsum("gia,ij,gjb->gab", B, D, B) * wdet
        b_by_phase[code] = np.einsum("gia,ij,j->ga", B, D, np.array([1.0, 1.0, 0.0])) * wdet

    phase = codes.reshape(-1)
    lut = np.zeros((3, 4, 8, 8))
    blut = np.zeros((3, 4, 8))
    dlut = np.zeros((3, 3, 3))
    elut = np.zeros(3)
    slut = np.zeros(3, dtype=bool)
    for code, mat in mats.items():
        lut[code] = M_by_phase[code]
        blut[code] = b_by_phase[code]
        dlut[code] = D_by_phase[code]
        elut[code] = mat.E
        slut[code] = mat.shrinks
    M_stack = lut[phase]
    b_stack = blut[phase]
    D_stack = dlut[phase]
    E_phase = elut[phase]
    shrinks = slut[phase]

    # connectivity: element (i, j) uses nodes (i,j), (i,j+1), (i+1,j+1), (i+1,j)
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    n0 = ii * (width + 1) + jj
    conn = np.stack([n0, n0 + 1, n0 + width + 2, n0 + width + 1], axis=-1).reshape(-1, 4)
    edof = np.empty((height * width, 8), dtype=np.int64)
    edof[:, 0::2] = 2 * conn
    edof[:, 1::2] = 2 * conn + 1
    asm_rows = np.repeat(edof, 8, axis=1).ravel()
    asm_cols = np.tile(edof, (1, 8)).ravel()

    T, macro_base, n_macro = _build_constraints(height, width, size, scenario, fixed)

    # Gauss-point depth below the drying surface (last raster row)
    offs = _gauss_offsets(size)  # (4, 2) local (dx, dy) from node (i, j)
    y_gp = (ii.reshape(-1, 1) * size + offs[:, 1][None, :])  # (E, 4), y down
    gp_depth_mm = (height * size - y_gp) * 1e3

    model = QuadModel(
        height=height, width=width, size=size, pitch_mm=pitch_mm,
        scenario=scenario, phase=phase, B=B, wdet=wdet,
        M_stack=M_stack, b_stack=b_stack, D_stack=D_stack,
        E_phase=E_phase, shrinks=shrinks, edof=edof,
        asm_rows=asm_rows, asm_cols=asm_cols, T=T,
        macro_base=macro_base, n_macro=n_macro,
        gp_depth_mm=gp_depth_mm, materials=mats,
    )

    if scenario == NONUNIFORM and with_truss:
        # core properties from the undamaged meshed strip: homogenized axial
        # stiffness, and the observed/imposed shrinkage ratio used to reduce
        # the eigenstrain imposed on the trusses
        e_hom = homogenize_axial(model, np.zeros((model.n_elems, 4)))
        eps_obs = solve_stress_free(model, np.where(model.shrinks, 1.0, 0.0))
        strip_depth = height * pitch_mm
        core_depth = BEAM_HALF_DEPTH_MM - strip_depth
        if core_depth <= 0:
            raise ValueError("mesh deeper than the beam half-depth")
        n_sub = max(1, int(round(core_depth)))  # ~1 mm tributary slices
        edges = np.linspace(strip_depth, BEAM_HALF_DEPTH_MM, n_sub + 1)
        model.truss_depths_mm = 0.5 * (edges[:-1] + edges[1:])
        core_volume = model.cell_length * core_depth * 1e-3  # m^2/thickness
        model.truss_stiffness = e_hom * core_volume
        model.shrink_reduction = float(eps_obs)

    return model
