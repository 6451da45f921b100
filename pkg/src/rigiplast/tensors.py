"""Symmetric-tensor algebra, the isotropic Hooke law and the von Mises return map.

Symmetric n x n tensors are stored packed, row-major upper triangle:

    dim 2:  (a11, a12, a22)
    dim 3:  (a11, a12, a13, a22, a23, a33)

This order is fixed once here; every serialized field in the package uses it.
All module functions accept arrays of packed tensors (components on the last
axis) and broadcast over the leading axes, so a cell field of shape
``(n_cells, 3)`` works the same as a single tensor of shape ``(3,)``.

The double contraction A:B = tr(AB) counts off-diagonal entries twice, which
is what the component weights below encode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Deviatoric tolerance: |tr p| <= DEV_TOL * max(1, |p|) counts as trace-free.
DEV_TOL = 1e-10

_PACKED = {2: [(0, 0), (0, 1), (1, 1)], 3: [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]}
_WEIGHTS = {2: np.array([1.0, 2.0, 1.0]), 3: np.array([1.0, 2.0, 2.0, 1.0, 2.0, 1.0])}
_DIAG = {2: [0, 2], 3: [0, 3, 5]}
_NCOMP = {2: 3, 3: 6}
_DIM_OF_NCOMP = {3: 2, 6: 3}


class NonDeviatoricError(ValueError):
    """Raised when an operation defined on trace-free tensors gets a trace."""


def ncomp(dim: int) -> int:
    return _NCOMP[dim]


def dim_of(a: np.ndarray) -> int:
    """Spatial dimension from the packed component count of the last axis."""
    try:
        return _DIM_OF_NCOMP[a.shape[-1]]
    except KeyError:
        raise ValueError(f"last axis has {a.shape[-1]} components, expected 3 (2-D) or 6 (3-D)")


def identity(dim: int) -> np.ndarray:
    out = np.zeros(_NCOMP[dim])
    out[_DIAG[dim]] = 1.0
    return out


def trace(a: np.ndarray) -> np.ndarray:
    return a[..., _DIAG[dim_of(a)]].sum(axis=-1)


def ddot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Double contraction A:B = tr(AB), off-diagonals counted twice."""
    return ((a * b) * _WEIGHTS[dim_of(a)]).sum(axis=-1)


def norm(a: np.ndarray) -> np.ndarray:
    """Frobenius norm |A| = sqrt(A:A)."""
    return np.sqrt(ddot(a, a))


def dev_decompose(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal split A = dev(A) + mean_trace * I.

    Returns (deviator, mean_trace) with mean_trace = tr(A)/dim, so that
    dev(A):I = 0 and |A|^2 = |dev A|^2 + dim * mean_trace^2.
    """
    d = dim_of(a)
    mean = trace(a) / d
    out = a.astype(float, copy=True)
    for i in _DIAG[d]:
        out[..., i] -= mean
    return out, mean


def deviator(a: np.ndarray) -> np.ndarray:
    return dev_decompose(a)[0]


def is_deviatoric(a: np.ndarray) -> np.ndarray:
    return np.abs(trace(a)) <= DEV_TOL * np.maximum(1.0, norm(a))


def require_deviatoric(a: np.ndarray, what: str = "tensor") -> None:
    bad = ~is_deviatoric(a)
    if np.any(bad):
        worst = float(np.max(np.abs(trace(a))))
        raise NonDeviatoricError(f"{what} has trace up to {worst:.3e} beyond tolerance")


def sym_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symmetrized outer product, (a (.) b)_ij = (a_i b_j + a_j b_i) / 2."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"vector dims differ: {a.shape[-1]} vs {b.shape[-1]}")
    d = a.shape[-1]
    if d not in _PACKED:
        raise ValueError(f"unsupported dim {d}")
    comps = [0.5 * (a[..., i] * b[..., j] + a[..., j] * b[..., i]) for i, j in _PACKED[d]]
    return np.stack(comps, axis=-1)


def from_matrix(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    d = m.shape[-1]
    return np.stack([0.5 * (m[..., i, j] + m[..., j, i]) for i, j in _PACKED[d]], axis=-1)


def to_matrix(a: np.ndarray) -> np.ndarray:
    d = dim_of(a)
    out = np.zeros(a.shape[:-1] + (d, d))
    for k, (i, j) in enumerate(_PACKED[d]):
        out[..., i, j] = a[..., k]
        out[..., j, i] = a[..., k]
    return out


@dataclass(frozen=True)
class SymTensor:
    """A single symmetric tensor value; thin wrapper over the packed layout."""

    dim: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.shape != (_NCOMP[self.dim],):
            raise ValueError(f"dim {self.dim} needs {_NCOMP[self.dim]} entries, got {e.shape}")
        object.__setattr__(self, "entries", e)

    @classmethod
    def from_matrix(cls, m) -> "SymTensor":
        m = np.asarray(m, dtype=float)
        return cls(m.shape[0], from_matrix(m))

    def to_matrix(self) -> np.ndarray:
        return to_matrix(self.entries)

    def norm(self) -> float:
        return float(norm(self.entries))

    def trace(self) -> float:
        return float(trace(self.entries))

    def dev(self) -> "SymTensor":
        return SymTensor(self.dim, deviator(self.entries))


@dataclass(frozen=True)
class HookeTensor:
    """Isotropic elasticity law C^eps xi = (2 mu dev xi + kappa_b tr(xi) I) / eps.

    mu and kappa_b are the shear and bulk moduli of the base law C; eps is the
    dimensionless stiffening parameter (eps -> 0 makes the material rigid).
    """

    shear_modulus: float
    bulk_modulus: float
    epsilon: float = 1.0

    def __post_init__(self):
        if self.shear_modulus <= 0 or self.bulk_modulus <= 0 or self.epsilon <= 0:
            raise ValueError("shear_modulus, bulk_modulus and epsilon must be positive")

    def with_epsilon(self, epsilon: float) -> "HookeTensor":
        return HookeTensor(self.shear_modulus, self.bulk_modulus, epsilon)

    def alpha(self, dim: int = 2) -> float:
        """Lower coercivity constant: alpha |xi|^2 <= C^eps xi : xi."""
        return min(2.0 * self.shear_modulus, dim * self.bulk_modulus) / self.epsilon

    def beta(self, dim: int = 2) -> float:
        """Upper growth constant: C^eps xi : xi <= beta |xi|^2."""
        return max(2.0 * self.shear_modulus, dim * self.bulk_modulus) / self.epsilon

    @property
    def scaled_shear(self) -> float:
        """Deviatoric stiffness 2 mu / eps of the scaled law."""
        return 2.0 * self.shear_modulus / self.epsilon

    def apply(self, xi: np.ndarray) -> np.ndarray:
        """C^eps xi, broadcast over leading axes."""
        dev, mean = dev_decompose(np.asarray(xi, dtype=float))
        d = dim_of(dev)
        out = self.scaled_shear * dev
        tr_part = d * self.bulk_modulus / self.epsilon * mean
        for i in _DIAG[d]:
            out[..., i] += tr_part
        return out

    def matrix(self, dim: int = 2) -> np.ndarray:
        """Packed-component matrix of C^eps (sigma = M @ e, no contraction weights)."""
        nc = _NCOMP[dim]
        m = np.empty((nc, nc))
        for k in range(nc):
            e = np.zeros(nc)
            e[k] = 1.0
            m[:, k] = self.apply(e)
        return m


@dataclass(frozen=True)
class YieldSet:
    """The admissible set of deviatoric stresses: a von Mises ball |tau| <= radius."""

    radius: float
    kind: str = field(default="von-mises-ball")

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("yield radius must be positive")
        if self.kind != "von-mises-ball":
            raise ValueError(f"unsupported yield set kind: {self.kind!r}")

    @property
    def inner_radius(self) -> float:
        return self.radius

    @property
    def outer_radius(self) -> float:
        return self.radius

    def support(self, p: np.ndarray) -> np.ndarray:
        """Support function H(p) = sup_{tau in K} tau : p = radius * |p|.

        Defined on trace-free tensors only; a trace beyond tolerance raises
        NonDeviatoricError (H is +inf off the deviatoric subspace).
        """
        p = np.asarray(p, dtype=float)
        require_deviatoric(p, "support-function argument")
        return self.radius * norm(p)

    def project(self, tau: np.ndarray) -> np.ndarray:
        """Euclidean projection of a deviatoric tensor onto the ball."""
        tau = np.asarray(tau, dtype=float)
        require_deviatoric(tau, "projection argument")
        return _cap_to_ball(tau, self.radius)

    def contains(self, tau: np.ndarray, slack: float = 0.0) -> np.ndarray:
        return norm(deviator(np.asarray(tau, dtype=float))) <= self.radius + slack


# One-sided safety factor: plastic stresses are scaled so the stored magnitude
# never exceeds the radius in floating point (keeps the feasibility checks and
# projection idempotency exact, bias ~4 ulp).
_CAP_SAFETY = 1.0 - 4.0 * np.finfo(float).eps


def _cap_to_ball(tau: np.ndarray, radius: float) -> np.ndarray:
    m = norm(tau)
    over = m > radius
    if not np.any(over):
        return tau.copy()
    scale = np.ones_like(m)
    np.divide(radius * _CAP_SAFETY, m, out=scale, where=over)
    return tau * scale[..., None]


def radial_return(
    e_dev: np.ndarray,
    p_old: np.ndarray,
    hooke: HookeTensor,
    yield_set: YieldSet,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form minimizer of the cellwise incremental problem.

    Solves  min_p  (1/2) C^eps (E - p):(E - p) + radius * |p - p_old|  over
    deviatoric p, for E with deviatoric part ``e_dev``. Returns
    (p_new, sigma_dev) where sigma_dev = (2 mu / eps)(e_dev - p_new):

    * trial s = (2 mu / eps)(e_dev - p_old); if |s| <= radius the step is
      elastic, p_new = p_old and sigma_dev = s;
    * otherwise p_new = p_old + ((|s| - radius) / (2 mu / eps)) s/|s| and
      sigma_dev sits on the yield surface along s.

    The increment p_new - p_old is a nonnegative multiple of sigma_dev, so
    sigma_dev : (p_new - p_old) = radius * |p_new - p_old| (Hill's maximum
    plastic work at the update).
    """
    e_dev = np.asarray(e_dev, dtype=float)
    p_old = np.asarray(p_old, dtype=float)
    require_deviatoric(e_dev, "deviatoric strain")
    require_deviatoric(p_old, "previous plastic strain")

    g = hooke.scaled_shear
    kappa = yield_set.radius
    s = g * (e_dev - p_old)
    m = norm(s)
    plastic = m > kappa

    if not np.any(plastic):
        return p_old.copy(), s

    scale = np.ones_like(m)
    np.divide(kappa * _CAP_SAFETY, m, out=scale, where=plastic)
    sigma_dev = s * scale[..., None]
    dp_mag = np.where(plastic, (m - kappa) / g, 0.0)
    direction = np.zeros_like(s)
    np.divide(s, m[..., None], out=direction, where=plastic[..., None])
    p_new = p_old + dp_mag[..., None] * direction
    return p_new, sigma_dev


def project_K(tau: np.ndarray, yield_set: YieldSet) -> np.ndarray:
    """Module-level alias for the yield-set projection."""
    return yield_set.project(tau)


def support_H(p: np.ndarray, yield_set: YieldSet) -> np.ndarray:
    """Module-level alias for the support function."""
    return yield_set.support(p)
