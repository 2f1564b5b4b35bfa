"""momentlab: coupled moment-map equations on model Kahler manifolds."""

__version__ = "0.1.0"

from .errors import (DegenerateVolumeError, DegreeError, DimensionError,
                     DivergedError, FlowBlowupError, GaugeError,
                     GaugeNotFixedError, InterpolationError, MomentLabError,
                     NotHolomorphicError, NotInConeError, NotKahlerError,
                     PathTypeError, StallError, UsageError)
from .exterior import (AlternatingForm, TangentVector, check_interior_identity,
                       interior, power, standard_symplectic, top_ratio,
                       two_form_from_matrix, wedge)
from .torus import (DiffeoField, PotentialField, TorusGeometry,
                    hamiltonian_flow, metric_from_potential, ricci,
                    scalar_curvature)
from .toric import SymplecticPotential, ToricCP1Geometry
from .states import KahlerState, cp1_state, torus_state
from .moments import (MomentMapValue, graph_mu_p, moment_pairing, mu_p,
                      mu_p_dual, normalizing_constants)
from .coupled import (CoupledResidual, DhymData, ccsck_residual,
                      closed_form_angle, coupled_dhym_residual, dhym_residual,
                      kym_u1_residual)
from .functionals import (FunctionalReport, HolomorphicFieldData,
                          PotentialPath, calabi, futaki, geodesic_convexity_check,
                          H_function, mabuchi_increment, mabuchi_path,
                          straight_path)
from .solve import (CoupledProblem, SolveConfig, SolveState,
                    fix_automorphism_gauge, flow_step, newton_refine, solve)
