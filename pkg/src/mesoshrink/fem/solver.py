"""Nonlinear quasi-static solution of the shrinkage damage problem.

Each pseudo-time step solves equilibrium under the imposed eigenstrain via
secant-stiffness iterations: assemble with the current damage, solve, update
kappa/omega from the effective stress, repeat until the internal-force
residual falls below 1e-6 of the eigenstrain load norm.  Linear systems use
a sparse LU that is reused as a PCG preconditioner while damage drifts, and
refactored when PCG slows down; a `direct` mode refactors every solve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import UNIFORM
from ..microgen import AGG, ITZ, MORTAR
from . import material
from .loading import LoadProgram
from .model import BEAM_HALF_DEPTH_MM, SingularSystem, build_model

RESIDUAL_TOL = 1e-6
MAX_EQ_ITERS = 60
MAX_BISECTIONS = 4


class StepNonConvergence(Exception):
    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


@dataclass
class SimState:
    u: np.ndarray        # (n_red,) reduced displacements
    kappa: np.ndarray    # (E, 4) history variable per Gauss point
    omega: np.ndarray    # (E, 4)
    h_elem: np.ndarray   # (E,) crack band width, nan before initiation

    @classmethod
    def initial(cls, model):
        n_e = model.n_elems
        return cls(np.zeros(model.n_red), np.zeros((n_e, 4)),
                   np.zeros((n_e, 4)), np.full(n_e, np.nan))

    def copy(self):
        return SimState(self.u.copy(), self.kappa.copy(),
                        self.omega.copy(), self.h_elem.copy())


@dataclass
class SimSnapshot:
    t: int                     # snapshot index 0..10
    omega_field: np.ndarray    # (H, W) element-average damage
    eps_observed: float        # macroscopic shrinkage strain (negative)
    k: float                   # homogenized stiffness, Pa
    Omega: float               # mean damage over all pixels
    Omega_shrinking: float     # mean damage over shrinking-phase pixels
    eps_surface: float         # imposed surface eigenstrain


@dataclass
class SimResult:
    snapshots: list
    convergence_log: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def omega_stack(self):
        return np.stack([s.omega_field for s in self.snapshots])

    def scalar_rows(self):
        return [(s.t, s.eps_surface, s.eps_observed, s.k, s.Omega)
                for s in self.snapshots]


class LinearSolver:
    """LU-preconditioned CG with adaptive refactorization."""

    def __init__(self, mode="auto", rtol=1e-12, refresh_iters=40):
        self.mode = mode
        self.rtol = rtol
        self.refresh_iters = refresh_iters
        self.lu = None

    def _factor(self, K):
        try:
            self.lu = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as err:
            raise SingularSystem(str(err)) from err

    def solve(self, K, f, x0=None):
        if self.mode == "direct":
            self._factor(K)
            return self.lu.solve(f)
        if self.lu is None:
            self._factor(K)
            return self.lu.solve(f)
        precond = spla.LinearOperator(K.shape, self.lu.solve)
        x, info = spla.cg(K, f, x0=x0, rtol=self.rtol, atol=0.0,
                          M=precond, maxiter=self.refresh_iters)
        if info != 0:
            self._factor(K)
            x = self.lu.solve(f)
        return x


# ---------------------------------------------------------------------------
# assembly


def assemble_reduced(model, omega, element_order=None):
    """Secant stiffness in the reduced (periodic + macro) space."""
    ke = np.einsum("eg,egab->eab", 1.0 - omega, model.M_stack)
    rows, cols = model.asm_rows, model.asm_cols
    if element_order is not None:
        ke = ke[element_order]
        rows = rows.reshape(model.n_elems, 64)[element_order].ravel()
        cols = cols.reshape(model.n_elems, 64)[element_order].ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)),
                      shape=(model.n_full, model.n_full)).tocsr()
    K_red = (model.T.T @ K @ model.T).tolil()
    if model.truss_stiffness:
        a = model.axial_dof()
        K_red[a, a] += model.truss_stiffness
    return K_red.tocsc()


def _scatter(model, fe):
    f = np.bincount(model.edof.ravel(), weights=fe.ravel(), minlength=model.n_full)
    return model.T.T @ f


def eigen_force_reduced(model, omega, eps_gp, eps_truss=0.0):
    """Load vector of the eigenstrain, consistent with secant moduli."""
    fe = np.einsum("eg,egi->ei", (1.0 - omega) * eps_gp, model.b_stack)
    f = _scatter(model, fe)
    if model.truss_stiffness:
        f[model.axial_dof()] += model.truss_stiffness * eps_truss
    return f


def gp_strains(model, u_red):
    u_full = model.T @ u_red
    ue = u_full[model.edof]
    return np.einsum("gij,ej->egi", model.B, ue)


def effective_stress(model, eps_tot, eps_gp):
    eps_mech = eps_tot.copy()
    eps_mech[..., 0] -= eps_gp
    eps_mech[..., 1] -= eps_gp
    return np.einsum("eij,egj->egi", model.D_stack, eps_mech)


def internal_force_reduced(model, omega, u_red, eps_gp, eps_truss=0.0):
    eps_tot = gp_strains(model, u_red)
    sig_eff = effective_stress(model, eps_tot, eps_gp)
    sig_nom = (1.0 - omega)[..., None] * sig_eff
    fe = np.einsum("gia,egi->ea", model.B, sig_nom) * model.wdet
    f = _scatter(model, fe)
    if model.truss_stiffness:
        a = model.axial_dof()
        f[a] += model.truss_stiffness * (u_red[a] - eps_truss)
    return f


# ---------------------------------------------------------------------------
# homogenized responses


def homogenize_axial(model, omega, lin=None, direction="x"):
    """Axial secant stiffness with the transverse response left stress-free.

    With damage frozen, prescribes a unit macroscopic strain on the chosen
    axis and returns the conjugate mean stress.  Uses the identity
    lambda = 1 / (K^-1 e)_dof so one linear solve with the existing
    factorization suffices.
    """
    if direction == "x":
        dof = model.axial_dof()
    else:
        dof = model.transverse_dof()
    K = assemble_reduced(model, omega)
    e = np.zeros(model.n_red)
    e[dof] = 1.0
    try:
        if lin is None:
            v = spla.splu(K, permc_spec="MMD_AT_PLUS_A").solve(e)
        else:
            v = lin.solve(K, e)
    except (SingularSystem, RuntimeError):
        return 0.0
    if not np.isfinite(v[dof]) or abs(v[dof]) < 1e-300:
        return 0.0
    reaction = 1.0 / v[dof]
    if model.scenario == UNIFORM:
        volume = model.volume
    else:
        volume = model.cell_length * BEAM_HALF_DEPTH_MM * 1e-3
    k = reaction / volume
    if k < 0 or not np.isfinite(k):
        return 0.0
    return k


def homogenized_stiffness(model, state, lin=None):
    """Scenario stiffness: isotropized (x/y mean) for uniform, axial else."""
    kx = homogenize_axial(model, state.omega, lin, "x")
    if model.scenario != UNIFORM:
        return kx
    ky = homogenize_axial(model, state.omega, lin, "y")
    return 0.5 * (kx + ky)


def observed_shrinkage(model, state):
    strains = model.macro_strains(state.u)
    if model.scenario == UNIFORM:
        return 0.5 * (strains[0] + strains[1])
    return strains[0]


def total_damage(omega_field, codes=None, per_shrinking=False):
    """Mean damage over pixels; optionally only over shrinking phases."""
    omega_field = np.asarray(omega_field)
    if per_shrinking:
        if codes is None:
            raise ValueError("phase codes required for the shrinking-phase variant")
        mask = codes != AGG
        return float(omega_field[mask].mean())
    return float(omega_field.mean())


def solve_stress_free(model, eps_gp_unit, lin=None):
    """Axial macro strain of the undamaged stress-free eigenstrain solution."""
    omega = np.zeros((model.n_elems, 4))
    eps_gp = np.broadcast_to(np.asarray(eps_gp_unit, dtype=float)[:, None],
                             (model.n_elems, 4))
    K = assemble_reduced(model, omega)
    f = eigen_force_reduced(model, omega, eps_gp)
    u = spla.splu(K, permc_spec="MMD_AT_PLUS_A").solve(f) if lin is None \
        else lin.solve(K, f)
    return model.macro_strains(u)[0]


# ---------------------------------------------------------------------------
# nonlinear stepping


def _update_damage(model, state, u_red, eps_gp, h_work):
    """Damage trial state from the current displacement iterate."""
    eps_tot = gp_strains(model, u_red)
    sig_eff = effective_stress(model, eps_tot, eps_gp)
    eps_eq = material.equivalent_strain(sig_eff, model.E_phase[:, None])
    kappa_new = np.maximum(state.kappa, eps_eq)

    kappa0 = np.full(model.n_elems, np.inf)
    for code, mat in model.materials.items():
        if mat.softens:
            kappa0[model.phase == code] = mat.kappa0

    onset = np.isnan(h_work) & np.any(kappa_new > kappa0[:, None], axis=1)
    if np.any(onset):
        sig_mean = sig_eff[onset].mean(axis=1)
        direction = material.max_principal_direction(sig_mean)
        h_work[onset] = material.crack_band_width(model.size, direction)

    omega_new = np.zeros_like(kappa_new)
    for code, mat in model.materials.items():
        if not mat.softens:
            continue
        mask = model.phase == code
        if not np.any(mask):
            continue
        h_gp = np.broadcast_to(h_work[mask][:, None], kappa_new[mask].shape)
        with np.errstate(invalid="ignore"):
            h_filled = np.where(np.isnan(h_gp), model.size, h_gp)
        omega_new[mask] = material.solve_damage(kappa_new[mask], mat, h_filled)
    return kappa_new, omega_new, h_work


def _equilibrium(model, state, eps_gp, eps_truss, lin, element_order=None):
    """Secant iterations at a fixed load level; returns trial state + iters."""
    omega = state.omega.copy()
    h_work = state.h_elem.copy()
    u = state.u.copy()
    for it in range(1, MAX_EQ_ITERS + 1):
        K = assemble_reduced(model, omega, element_order)
        f = eigen_force_reduced(model, omega, eps_gp, eps_truss)
        u = lin.solve(K, f, x0=u)

        kappa_new, omega_new, h_work = _update_damage(model, state, u, eps_gp, h_work)

        r = internal_force_reduced(model, omega_new, u, eps_gp, eps_truss)
        f_ref = eigen_force_reduced(model, omega_new, eps_gp, eps_truss)
        ref_norm = np.linalg.norm(f_ref)
        rel = np.linalg.norm(r) / max(ref_norm, 1e-300)
        if rel <= RESIDUAL_TOL:
            return u, kappa_new, omega_new, h_work, it, rel
        omega = omega_new
    raise StepNonConvergence(f"no equilibrium after {MAX_EQ_ITERS} iterations "
                             f"(rel residual {rel:.2e})")


def _commit(model, state, u, kappa, omega, h_work):
    kappa0 = np.full(model.n_elems, np.inf)
    for code, mat in model.materials.items():
        if mat.softens:
            kappa0[model.phase == code] = mat.kappa0
    # only freeze h where damage actually started
    stale = ~np.any(kappa > kappa0[:, None], axis=1)
    h_work = h_work.copy()
    h_work[stale & np.isnan(state.h_elem)] = np.nan
    state.u = u
    state.kappa = kappa
    state.omega = omega
    state.h_elem = h_work
    return state


def advance(model, state, eps_prev, eps_target, truss_prev, truss_target,
            lin, log, step_id, level=0, element_order=None):
    """Advance the state to the target load, bisecting on non-convergence."""
    try:
        u, kappa, omega, h_work, iters, rel = _equilibrium(
            model, state, eps_target, truss_target, lin, element_order)
    except StepNonConvergence:
        if level >= MAX_BISECTIONS:
            raise StepNonConvergence(
                f"step {step_id} failed after {MAX_BISECTIONS} bisection levels",
                step=step_id)
        eps_mid = 0.5 * (eps_prev + eps_target)
        truss_mid = 0.5 * (truss_prev + truss_target)
        advance(model, state, eps_prev, eps_mid, truss_prev, truss_mid,
                lin, log, step_id, level + 1, element_order)
        return advance(model, state, eps_mid, eps_target, truss_mid, truss_target,
                       lin, log, step_id, level + 1, element_order)
    log.append((step_id, level, iters, rel))
    return _commit(model, state, u, kappa, omega, h_work)


def step(model, state, eps_gp, eps_truss=0.0, lin=None, log=None, step_id=0):
    """Single load step to the given eigenstrain field (op-level entry)."""
    lin = lin or LinearSolver()
    log = [] if log is None else log
    eps_prev = np.zeros_like(eps_gp)  # conservative lower anchor for bisection
    return advance(model, state, eps_prev, eps_gp, 0.0, eps_truss,
                   lin, log, step_id)


def _snapshot(model, state, program, t_step, lin):
    omega_field = state.omega.mean(axis=1).reshape(model.height, model.width)
    codes = model.phase.reshape(model.height, model.width)
    return SimSnapshot(
        t=t_step // program.snapshot_stride,
        omega_field=omega_field,
        eps_observed=float(observed_shrinkage(model, state)),
        k=float(homogenized_stiffness(model, state, lin)),
        Omega=total_damage(omega_field),
        Omega_shrinking=total_damage(omega_field, codes, per_shrinking=True),
        eps_surface=float(program.surface_value(t_step)),
    )


def run(micro, scenario=None, program=None, solver_mode="auto", element_order=None,
        model=None):
    """Full 100-step load program with snapshots every 10 steps."""
    t0 = time.perf_counter()
    if model is None:
        model = build_model(micro, scenario)
    program = program or LoadProgram(model.scenario)
    if hasattr(program.profile, "validate_range"):
        program.profile.validate_range(BEAM_HALF_DEPTH_MM)

    lin = LinearSolver(mode=solver_mode)
    state = SimState.initial(model)
    log = []
    snapshots = [_snapshot(model, state, program, 0, lin)]

    rng_order = None
    if element_order == "shuffled":
        rng_order = np.random.default_rng(12345).permutation(model.n_elems)

    eps_prev = np.zeros((model.n_elems, 4))
    truss_prev = 0.0
    for t_step in range(1, program.n_steps + 1):
        depth = model.gp_depth_mm
        eps_gp = program.eigenstrain(t_step, depth) * model.shrinks[:, None]
        truss_eps = model.truss_eigenstrain(program, t_step)
        state = advance(model, state, eps_prev, eps_gp, truss_prev, truss_eps,
                        lin, log, t_step, element_order=rng_order)
        eps_prev, truss_prev = eps_gp, truss_eps
        if t_step % program.snapshot_stride == 0:
            snapshots.append(_snapshot(model, state, program, t_step, lin))

    return SimResult(snapshots=snapshots, convergence_log=log,
                     wall_time=time.perf_counter() - t0)
