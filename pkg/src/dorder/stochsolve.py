"""Output moments under random forcing and random coefficients.

For a linear system the output mean and covariance follow from the
input mean and covariance through the assembled operator:

    C_mY  = E[A_G] C_mU
    C_kYY = E[ A_G (C_kUU + C_mU C_mU^T) A_G^T ] - C_mY C_mY^T

With deterministic coefficients the expectations drop out.  With
random coefficients they are evaluated by full tensor Gauss cubature
over the parameters (stochastic collocation): assemble A_G at every
node, accumulate probability-weighted sums.  Accumulation is
compensated so node ordering cannot move results beyond roundoff.
"""

import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.signal import fftconvolve

from .bpf import SpectralVector, SpectralMatrix, reconstruct_bivariate
from . import opmat
from .dosys import assemble_system_operator

__all__ = [
    "StochasticForcing", "MomentResult", "CubatureGrid",
    "parameter_quadrature", "tensor_cubature", "expected_operator",
    "expected_sandwich", "propagate_moments", "variance_series",
]

log = logging.getLogger(__name__)

# tolerated asymmetry / negativity relative to the largest entry;
# projection truncation produces harmless violations at this scale
_SYM_RTOL = 1e-10
_PSD_RTOL = 1e-8


def _check_covariance(c, what, spectrum=False):
    m = np.abs(c).max()
    floor = m if m > 0 else 1.0
    skew = np.abs(c - c.T).max()
    if skew > _SYM_RTOL * floor:
        raise ValueError(f"{what} covariance is not symmetric: "
                         f"max |C - C^T| = {skew:.3e} vs scale {m:.3e}")
    d = np.diag(c)
    if d.min() < -_PSD_RTOL * floor:
        raise ValueError(f"{what} covariance has negative diagonal entries "
                         f"beyond tolerance: min {d.min():.3e} vs scale {m:.3e}")
    if spectrum:
        # block averaging preserves positive semidefiniteness exactly, so a
        # clearly negative eigenvalue means the kernel itself is indefinite
        lo = np.linalg.eigvalsh(0.5 * (c + c.T)).min()
        if lo < -_PSD_RTOL * floor:
            raise ValueError(f"{what} covariance is not positive semidefinite: "
                             f"min eigenvalue {lo:.3e} vs scale {m:.3e}")


@dataclass(frozen=True, eq=False)
class StochasticForcing:
    """Input mean and covariance in spectral form."""

    mean: SpectralVector
    covariance: SpectralMatrix

    def __post_init__(self):
        if self.mean.basis != self.covariance.basis:
            raise ValueError("mean and covariance live on different bases")
        _check_covariance(self.covariance.coeffs, "input", spectrum=True)


@dataclass(frozen=True, eq=False)
class MomentResult:
    """Output mean and covariance in spectral form."""

    mean: SpectralVector
    covariance: SpectralMatrix


@dataclass(frozen=True, eq=False)
class CubatureGrid:
    """Flattened tensor cubature: parameter maps and matching weights."""

    nodes: tuple
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.nodes) != w.shape[0]:
            raise ValueError("node and weight counts differ")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.nodes)


def parameter_quadrature(p):
    """Probability-weighted quadrature rule for one random parameter.

    uniform: Gauss-Legendre nodes mapped to [lo, hi], weights divided
    by 2 so they sum to 1.  gaussian: probabilists' Gauss-Hermite rule
    scaled by (mean, stddev), weights divided by sqrt(2 pi).

    Returns
    -------
    list of (node, weight) float pairs
    """
    q = p.quad_order
    if p.distribution == "uniform":
        x, w = np.polynomial.legendre.leggauss(q)
        nodes = p.lo + (x + 1.0) * 0.5 * (p.hi - p.lo)
        weights = w / 2.0
    elif p.distribution == "gaussian":
        x, w = np.polynomial.hermite_e.hermegauss(q)
        nodes = p.mean + p.stddev * x
        weights = w / np.sqrt(2.0 * np.pi)
    else:  # unreachable through RandomParameter validation
        raise ValueError(f"unsupported distribution {p.distribution!r}")
    return list(zip(nodes.tolist(), weights.tolist()))


def tensor_cubature(params):
    """Full tensor product of per-parameter rules.

    The flattening enumerates multi-indices in graded lexicographic
    order: sorted first by total index sum, ties broken
    lexicographically.  Grid size is the product of the quad orders.
    """
    params = tuple(params)
    if not params:
        raise ValueError("tensor_cubature needs at least one parameter")
    rules = [parameter_quadrature(p) for p in params]
    names = [p.name for p in params]
    indices = sorted(product(*(range(len(r)) for r in rules)),
                     key=lambda ix: (sum(ix), ix))
    nodes = []
    weights = []
    for ix in indices:
        nodes.append({n: rules[d][i][0] for d, (n, i) in enumerate(zip(names, ix))})
        weights.append(float(np.prod([rules[d][i][1] for d, i in enumerate(ix)])))
    return CubatureGrid(tuple(nodes), np.array(weights))


class _Kahan:
    """Compensated elementwise accumulator for arrays."""

    def __init__(self, shape):
        self.s = np.zeros(shape)
        self.c = np.zeros(shape)

    def add(self, x):
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


def _grid_or_trivial(sys, grid):
    if grid is not None:
        return grid
    if sys.random_params:
        return tensor_cubature(sys.random_params)
    return CubatureGrid(({},), np.array([1.0]))


def expected_operator(sys, basis, grid):
    """E[A_G] over the cubature grid, accumulated on first columns."""
    acc = _Kahan(basis.n_funcs)
    for j, (node, w) in enumerate(zip(grid.nodes, grid.weights)):
        try:
            ag = assemble_system_operator(sys, basis, node)
        except (ValueError, RuntimeError) as e:
            raise type(e)(f"assembly failed at cubature node {j} {node}: {e}") from e
        acc.add(w * ag.first_col)
    return opmat.OpMatrix(basis, acc.s, label="E[A_G]")


def expected_sandwich(sys, basis, grid, m):
    """E[A_G M A_G^T] over the grid; dense N x N result.

    A_G is lower-triangular Toeplitz, so both products are truncated
    convolutions with its first column (FFT over columns, then rows);
    this stays O(N^2 log N) per node without ever forming A_G densely.
    Each summand is a congruence transform of the symmetric M, so the
    exact sum is symmetric; roundoff asymmetry is left to the caller.
    """
    mm = m.coeffs if isinstance(m, SpectralMatrix) else np.asarray(m, dtype=float)
    n = basis.n_funcs
    acc = _Kahan((n, n))
    for j, (node, w) in enumerate(zip(grid.nodes, grid.weights)):
        try:
            ag = assemble_system_operator(sys, basis, node)
        except (ValueError, RuntimeError) as e:
            raise type(e)(f"assembly failed at cubature node {j} {node}: {e}") from e
        a = ag.first_col
        t = fftconvolve(a[:, None], mm, axes=0)[:n]
        acc.add(w * fftconvolve(a[None, :], t, axes=1)[:, :n])
    return acc.s


def propagate_moments(sys, basis, forcing, grid=None):
    """Mean and covariance of the output.

    Parameters
    ----------
    sys : DOSystem
    basis : BpfBasis
    forcing : StochasticForcing
        Input mean and covariance on the same basis.
    grid : CubatureGrid, optional
        Override the cubature built from sys.random_params (used by
        refinement checks); deterministic systems get a single
        unit-weight node.

    Returns
    -------
    MomentResult
    """
    if forcing.mean.basis != basis:
        raise ValueError("forcing does not live on the requested basis")
    _check_covariance(forcing.covariance.coeffs, "input")
    grid = _grid_or_trivial(sys, grid)

    ea = expected_operator(sys, basis, grid)
    mean_y = opmat.apply(ea, forcing.mean)

    mu = forcing.mean.coeffs
    inner = forcing.covariance.coeffs + np.outer(mu, mu)
    s = expected_sandwich(sys, basis, grid, inner)
    out = np.outer(mean_y.coeffs, mean_y.coeffs)
    cov = s - out

    # roundoff in the subtraction is relative to its operands, not to the
    # (possibly tiny) difference, so tolerances use the operand scale
    scale = max(np.abs(s).max(), np.abs(out).max(), 1e-300)
    skew = np.abs(cov - cov.T).max()
    if skew > _SYM_RTOL * scale:
        raise RuntimeError(f"output covariance asymmetry {skew:.3e} exceeds "
                           f"tolerance at scale {scale:.3e}")
    cov = 0.5 * (cov + cov.T)
    d = np.diag(cov)
    if d.min() < -_PSD_RTOL * scale:
        raise RuntimeError(
            f"output variance went negative beyond tolerance: min diagonal "
            f"{d.min():.3e} at scale {scale:.3e}")
    return MomentResult(mean_y, SpectralMatrix(basis, cov))


def variance_series(r, times):
    """Output variance at the given times, from the covariance diagonal.

    Tiny negative values within the projection-noise tolerance are
    clamped to zero (logged); larger violations have already been
    rejected by propagate_moments.
    """
    out = []
    clamped = 0
    for t in times:
        v = reconstruct_bivariate(r.covariance, t, t)
        if v < 0.0:
            clamped += 1
            v = 0.0
        out.append((float(t), v))
    if clamped:
        log.warning("clamped %d tiny negative variance values to zero", clamped)
    return out
