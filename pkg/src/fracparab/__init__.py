"""Numerical laboratory for fractional powers of parabolic operators.

The package is organised around a pipeline:

* :mod:`fracparab.grid` -- tensor-product grids, conductivity fields,
  region masks, and the spectral decomposition of the elliptic part.
* :mod:`fracparab.semigroup` -- heat semigroup and shifted evolution family.
* :mod:`fracparab.fractional` -- fractional powers of the parabolic operator
  via the spectral symbol and via Balakrishnan subordination.
* :mod:`fracparab.solvers` -- exterior-value problems for the nonlocal
  operator and the classical local problem.
* :mod:`fracparab.lifted` -- the lifted field and the reduction of nonlocal
  Cauchy data to local Cauchy data.
* :mod:`fracparab.transform` -- diffeomorphic changes of variables and the
  non-uniqueness experiment.
* :mod:`fracparab.extension` -- degenerate-elliptic extension problem whose
  Neumann trace recovers the fractional symbol.
* :mod:`fracparab.carleman` -- Carleman weight verification in polar
  coordinates.
* :mod:`fracparab.cli` -- command-line experiment runner.
"""

from .grid import (
    BoxGrid,
    ConductivityField,
    EllipticOperator,
    GridError,
    RegionMasks,
    SpectralDecomposition,
    TimeGrid,
    assemble_elliptic,
    build_conductivity,
    build_grid,
    conductivity_from_matrices,
    region_masks,
    spectral_decompose,
)
from .semigroup import (
    SemigroupHandle,
    SpaceTimeField,
    evolution_apply,
    field_from_function,
    semigroup_apply,
)
from .fractional import (
    BalakrishnanQuadrature,
    FractionalOrder,
    coercivity_check,
    default_quadrature,
    fractional_norm,
    hs_apply_balakrishnan,
    hs_apply_spectral,
    symbol,
)
from .solvers import (
    CauchyDataLocal,
    CauchyDataNonlocal,
    ExteriorData,
    bump_exterior_data,
    extract_local_cauchy,
    extract_nonlocal_cauchy,
    solve_local,
    solve_nonlocal,
)
from .lifted import (
    LiftedField,
    TauGrid,
    build_tau_grid,
    compute_W,
    integrate_V_modal,
    lift,
    march_lifted_pde,
    reduce_to_local,
    verify_HV,
    verify_lifted_pde,
)
from .transform import (
    Diffeomorphism,
    RadialTwist,
    cauchy_data_gap,
    identity_map,
    nonuniqueness_experiment,
    pushforward_sigma,
    verify_transformation,
)
from .extension import (
    ExtensionMesh,
    build_extension_mesh,
    extension_consistency,
    neumann_trace,
    solve_extension_mode,
    trace_error_table,
)
from .carleman import (
    CarlemanWeight,
    CutoffPair,
    carleman_scan,
    modewise_inequality_check,
    verify_weight_properties,
)

__version__ = "0.1.0"

__all__ = [
    "BalakrishnanQuadrature",
    "BoxGrid",
    "CarlemanWeight",
    "CauchyDataLocal",
    "CauchyDataNonlocal",
    "ConductivityField",
    "CutoffPair",
    "Diffeomorphism",
    "EllipticOperator",
    "ExtensionMesh",
    "ExteriorData",
    "FractionalOrder",
    "GridError",
    "LiftedField",
    "RadialTwist",
    "RegionMasks",
    "SemigroupHandle",
    "SpaceTimeField",
    "SpectralDecomposition",
    "TauGrid",
    "TimeGrid",
    "assemble_elliptic",
    "build_conductivity",
    "build_extension_mesh",
    "build_grid",
    "build_tau_grid",
    "bump_exterior_data",
    "carleman_scan",
    "cauchy_data_gap",
    "coercivity_check",
    "compute_W",
    "conductivity_from_matrices",
    "default_quadrature",
    "evolution_apply",
    "extension_consistency",
    "extract_local_cauchy",
    "extract_nonlocal_cauchy",
    "field_from_function",
    "fractional_norm",
    "hs_apply_balakrishnan",
    "hs_apply_spectral",
    "identity_map",
    "integrate_V_modal",
    "lift",
    "march_lifted_pde",
    "modewise_inequality_check",
    "neumann_trace",
    "nonuniqueness_experiment",
    "pushforward_sigma",
    "reduce_to_local",
    "region_masks",
    "semigroup_apply",
    "solve_extension_mode",
    "solve_local",
    "solve_nonlocal",
    "spectral_decompose",
    "symbol",
    "trace_error_table",
    "verify_HV",
    "verify_lifted_pde",
    "verify_transformation",
    "verify_weight_properties",
    "__version__",
]
