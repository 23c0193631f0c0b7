"""paralab: a numerical laboratory for sectorial operators and the scale
calculus built on them — contour functional calculus, tent-space norms,
Hardy/BMO diagnostics, and semigroup paraproducts on discrete doubling
spaces."""

from .space import (Ball, MetricMeasureSpace, SpaceError, annulus, average,
                    average_adjoint, ball_volume, build_grid_space,
                    doubling_exponent, doubling_report, space_from_descriptor)
from .grids import TGrid, covering_tgrid
from .operator import (CoefficientField, OperatorError, ResolventError,
                       SectorialOperator, SpectralOracle,
                       build_divergence_form, constant_coefficients,
                       grid_edge_count, make_power_operator,
                       random_coefficients, resolvent_apply, spectral_oracle,
                       verify_sectoriality)
from .calculus import (CalculusError, Contour, HypothesisError, PsiFunction,
                       apply_fractional_power, apply_psi, apply_semigroup,
                       calderon_reconstruct, conservation_check,
                       default_contour, measure_offdiag, measure_offdiag_lp,
                       normalize_pair, pairing_integral, phi_one_minus_exp,
                       psi_field, psi_make, quadratic_norm, semigroup_field,
                       PsiFamily, SemigroupFamily)
from .tent import (FieldFunction, carleson_functional, carleson_norm,
                   carleson_pairing, conical_square, duality_checks,
                   maximal_M2, maximal_Nh, nontangential_max, tent_norm)
from .hardy import (HardyNormReport, Molecule, MoleculeError, bmo_m_spread,
                    bmo_norm, carleson_characterization, hardy_norm,
                    molecule_check, molecule_make, reproducing_pairing_check)
from .paraproduct import (MeasureReport, ParaproductSpec, leibniz_check,
                          measure_para_hp_l1, measure_para_l2,
                          measure_para_linf_l2, measure_para_lp_hp,
                          para_identity_check, para_offdiag,
                          paraproduct_adjoint_apply, paraproduct_apply,
                          paraproduct_bilinear)

__version__ = "0.1.0"
