"""Koopman mode decomposition performance analysis for nonlinear consensus networks."""

from .analytic import two_agent_measure_analytic
from .errors import (ConfigError, DegenerateImage, DimensionError, EigenFailure, GraphError,
                     IllConditioned, InfeasibleConstraints, KMDError, NonPSD, NotInvertible,
                     OutOfBox, OutOfDomain, SeriesRangeError, SingularSystem, StepSizeUnderflow)
from .flow import InitialDistribution, Trajectory, integrate, measure_by_simulation, output_energy
from .koopman import (EigenfunctionApprox, KoopmanDecomposition, decompose, expand_modes,
                      fit_eigenfunction, fit_inverse_map, kmd_flow)
from .network import (CouplingFunction, Graph, LinearSpectrum, Network, complete_graph, path_graph,
                      random_connected_graph)
from .performance import (PerformanceReport, compare, linear_closed_form, linear_measure,
                          measure_by_koopman)
from .sparse_grid import SmolyakBasis, build_basis, fit_collocation

__all__ = [name for name in dir() if not name.startswith("_")]
