"""Mesoscale concrete shrinkage-damage toolkit.

Generates synthetic (semi-)periodic mesostructures, simulates
shrinkage-induced damage with a nonlinear plane-stress FEM, trains an
auto-regressive U-Net + property CNN surrogate on the simulated
trajectories, and evaluates predictions against the reference solver.
"""

UNIFORM = "uniform"
NONUNIFORM = "nonuniform"

SCENARIOS = (UNIFORM, NONUNIFORM)


def wrap_axes(scenario):
    """Periodic wrap flags (wrap_y, wrap_x) for a scenario."""
    if scenario == UNIFORM:
        return (True, True)
    if scenario == NONUNIFORM:
        return (False, True)
    raise ValueError(f"unknown scenario {scenario!r}")
