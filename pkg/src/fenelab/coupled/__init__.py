"""Micro-macro coupling: per-node Fokker-Planck fields driven by a periodic 2D flow."""
from fenelab.coupled.spectral import FlowField, kappa_field, nse_step
from fenelab.coupled.advection import advect_values
from fenelab.coupled.fields import CoupledState, FieldStepper, StressField, WField, compute_stress
from fenelab.coupled.picard import (ConstantPath, CoupledProblem, CoupledTrajectory, ShiftedPath,
                                    StoredPath, contraction_curve, contraction_ratio, picard_map,
                                    solve_coupled, standard_pair, weak_norm)


def advect_w(w: WField, v, dt) -> WField:
    """Semi-Lagrangian transport of every coefficient of w by the velocity v."""
    vel = v.physical if isinstance(v, FlowField) else v
    return w.replace(advect_values(w.coeffs, vel, dt), w.time + dt)


__all__ = ["FlowField", "kappa_field", "nse_step", "advect_values", "advect_w", "CoupledState",
           "FieldStepper", "StressField", "WField", "compute_stress", "ConstantPath", "CoupledProblem",
           "CoupledTrajectory", "ShiftedPath", "StoredPath", "contraction_curve", "contraction_ratio",
           "picard_map", "solve_coupled", "standard_pair", "weak_norm"]
