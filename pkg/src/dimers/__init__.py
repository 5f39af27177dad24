"""Dimer models from Schottky uniformization data.

Turns a U2 Schottky group plus clustered marked points on the real oval
into theta-function dimer weights on the square lattice, the associated
amoeba, Ronkin function and surface tension, and samples random height
functions with a flip Metropolis chain.
"""

from .errors import (
    DimersError,
    NumericError,
    PoleError,
    QuadratureError,
    SeriesConvergenceError,
    ValidationError,
)
from .schottky import (
    CosetFilter,
    Generator,
    MobiusMap,
    SchottkyData,
    enumerate_words,
    generator_map,
    mobius_apply,
    oval_circle,
    validate_u2,
)
from .surface import (
    HarnackData,
    TrackPair,
    abel_increment,
    abel_point,
    amoeba_map,
    dzeta_pair,
    holomorphic_differential,
    period_matrix,
    trace_amoeba_boundary,
    zeta_pair,
)
from .theta import Characteristic, PeriodMatrix, theta, theta_char, truncation_radius
from .ronkin import RonkinContext, build_path, euler_lagrange_residual, h_value, r_ratio, ronkin_sample
from .weights import (
    SquareLatticeSpec,
    WeightOptions,
    ba_function,
    build_weight_field,
    dirac_residual,
    discrete_abel,
    edge_weight,
    face_weight,
    fay_residual,
    kasteleyn_check,
    monodromies,
    periodicity_residual,
    solve_periodic,
    spectral_det,
)
from .sampler import (
    ChainSpec,
    DimerConfig,
    brute_force_distribution,
    flip,
    flippable,
    height_field,
    init_config,
    kasteleyn_partition,
    mh_step,
    mh_step_volume,
    run_chain,
)

__version__ = "0.1.0"
