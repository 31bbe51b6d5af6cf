"""Solvers for discrete fractional diffusion u = L^{-s} b.

L = M^{-1} K comes from a symmetric definite pencil.  The package provides
rational Krylov extraction, reduced-basis surrogates, quadrature schemes,
best uniform rational approximations of z^{-s}, and a dense reference
solver to compare them against.
"""

from .errors import (
    ConditioningError,
    ConvergenceError,
    DegeneracyError,
    DomainError,
    FormatError,
    FracRKMError,
    InvalidArgument,
    PreconditionError,
    ResourceLimit,
    ValidationError,
)
from .krylov import (
    KrylovBasis,
    PoleSet,
    build_basis,
    dual_rbm,
    extract,
    rbm_resolvent,
    resolvent_batch,
    spectral_interpolant,
)
from .operator import (
    NEG_INF,
    OperatorPencil,
    SpectralInterval,
    load_pencil,
    make_fd_laplacian_1d,
    make_fd_laplacian_2d,
    m_norm,
    shifted_solve,
    spectral_interval,
)
from .rational import (
    BarycentricRational,
    BestApproxReport,
    PartialFraction,
    brasil_best_approx,
    interpolate,
    poles,
    to_partial_fractions,
)
from .schemes import (
    MethodResult,
    SincGrid,
    bura_poles,
    greedy_snapshots,
    sinc_grid,
    solve_direct,
    solve_dual,
    solve_gauss_rbm,
    solve_oracle,
    solve_rkm,
    solve_sinc_rbm,
    zolotarev_snapshots,
)

__version__ = "0.1.0"
