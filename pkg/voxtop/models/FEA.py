import itertools
import logging
import typing
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix

from voxtop.models.Domain import HEX_OFFSETS, DesignDomain, DofMap
from voxtop.utils.Constants import Material, SIMPDefaults
from voxtop.utils.Errors import ConvergenceError, MaterialError


@dataclass(frozen=True)
class MaterialModel:
    """
    Isotropic linear-elastic material with modified-SIMP interpolation

    E(x) = e_min + (e0 - e_min) * x**p
    """

    e0: float = Material.e0
    e_min: float = Material.e_min
    p: float = Material.penal
    nu: float = Material.nu

    def __post_init__(self):
        if not 0 < self.e_min < self.e0:
            raise MaterialError(
                f"Invalid moduli: e_min={self.e_min}, e0={self.e0}; need 0 < e_min < e0"
            )
        if self.p < 1:
            raise MaterialError(f"Invalid penalization exponent: '{self.p}', must be >= 1")
        if not 0 <= self.nu < 0.5:
            raise MaterialError(f"Invalid Poisson ratio: '{self.nu}', must be in [0, 0.5)")

    def elasticity_matrix(self) -> np.ndarray:
        """
        6x6 isotropic constitutive matrix at unit Young's modulus

        Strain ordering is (exx, eyy, ezz, gxy, gyz, gzx)
        """
        nu = self.nu
        a = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu))
        D = np.zeros((6, 6))
        D[:3, :3] = nu
        D[np.arange(3), np.arange(3)] = 1.0 - nu
        D[np.arange(3, 6), np.arange(3, 6)] = 0.5 - nu
        return a * D


def _shape_gradients(xi: float, eta: float, zeta: float) -> np.ndarray:
    """
    Derivatives of the 8 trilinear shape functions w.r.t. natural coordinates, as (3, 8)
    """
    s = 2 * HEX_OFFSETS - 1
    nat = np.array([xi, eta, zeta])
    factors = 1.0 + s * nat[None, :]  # (8, 3)
    grads = np.empty((3, 8))
    for d in range(3):
        others = [o for o in range(3) if o != d]
        grads[d] = 0.125 * s[:, d] * factors[:, others[0]] * factors[:, others[1]]
    return grads


def strain_displacement(xi: float, eta: float, zeta: float, h: float) -> np.ndarray:
    """
    6x24 strain-displacement matrix of a cubic hexahedron with edge h at a natural point
    """
    dN = _shape_gradients(xi, eta, zeta) * (2.0 / h)
    B = np.zeros((6, 24))
    for a in range(8):
        dx, dy, dz = dN[:, a]
        c = 3 * a
        B[0, c] = dx
        B[1, c + 1] = dy
        B[2, c + 2] = dz
        B[3, c], B[3, c + 1] = dy, dx
        B[4, c + 1], B[4, c + 2] = dz, dy
        B[5, c], B[5, c + 2] = dz, dx
    return B


def element_stiffness(material: MaterialModel, h: float) -> np.ndarray:
    """
    24x24 stiffness of a trilinear hexahedron with edge h at unit Young's modulus

    Integrated with 2x2x2 Gauss quadrature; DOFs are node-major (x, y, z per node) in
    HEX_OFFSETS node order
    """
    if not h > 0:
        raise MaterialError(f"Invalid element edge length: '{h}'")

    D = material.elasticity_matrix()
    gp = 1.0 / np.sqrt(3.0)
    detJ = (h / 2.0) ** 3
    KE = np.zeros((24, 24))
    for xi, eta, zeta in itertools.product((-gp, gp), repeat=3):
        B = strain_displacement(xi, eta, zeta, h)
        KE += B.T @ D @ B * detJ

    return 0.5 * (KE + KE.T)


def simp_modulus(xphys, material: MaterialModel):
    """
    Modified-SIMP Young's modulus for physical density(ies) in [0, 1]
    """
    x = np.asarray(xphys, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise MaterialError("Densities must lie in [0, 1] for SIMP interpolation")

    E = material.e_min + (material.e0 - material.e_min) * x ** material.p
    return float(E) if E.ndim == 0 else E


class StiffnessOperator:
    def __init__(
        self,
        domain: DesignDomain,
        moduli: np.ndarray,
        KE: np.ndarray,
        dofs: typing.Optional[DofMap] = None,
    ):
        """
        Matrix-free global stiffness K = sum_e E_e * K0_e

        When a DofMap is given, apply() acts on the constrained operator: fixed DOFs are
        zeroed on input and output. Element contributions are accumulated with bincount in
        element order, so results are bit-reproducible
        """
        self.domain = domain
        self.moduli = np.asarray(moduli, dtype=float)
        self.KE = KE
        self.edof = domain.element_dofs
        self._flatdofs = self.edof.ravel()

        self._free = None
        if dofs is not None:
            self._free = ~dofs.fixed_mask

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self._free is not None:
            u = u * self._free

        ue = u[self.edof]
        fe = (ue @ self.KE) * self.moduli[:, None]
        out = np.bincount(self._flatdofs, weights=fe.ravel(), minlength=self.domain.dof_count)

        if self._free is not None:
            out *= self._free
        return out

    def diagonal(self) -> np.ndarray:
        diag = np.bincount(
            self._flatdofs,
            weights=(self.moduli[:, None] * np.diag(self.KE)[None, :]).ravel(),
            minlength=self.domain.dof_count,
        )
        if self._free is not None:
            diag = np.where(self._free, diag, 1.0)
        return diag


def assemble_stiffness(domain: DesignDomain, moduli: np.ndarray, KE: np.ndarray):
    """
    Assemble the global stiffness as a scipy CSR matrix (unconstrained)
    """
    edof = domain.element_dofs
    iK = np.kron(edof, np.ones((24, 1), dtype=int)).ravel()
    jK = np.kron(edof, np.ones((1, 24), dtype=int)).ravel()
    sK = (KE.ravel()[None, :] * np.asarray(moduli)[:, None]).ravel()
    K = coo_matrix((sK, (iK, jK)), shape=(domain.dof_count, domain.dof_count))
    return K.tocsr()


def pcg(
    apply: typing.Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    diag: np.ndarray,
    tol: float,
    max_iter: int,
    x0: typing.Optional[np.ndarray] = None,
) -> typing.Tuple[np.ndarray, typing.List[float]]:
    """
    Jacobi-preconditioned conjugate gradients

    Returns the solution and the relative residual history; raises ConvergenceError if
    ||b - Ax|| / ||b|| > tol after max_iter iterations
    """
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply(x)
    z = r / diag
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]

    k = 0
    while history[-1] > tol:
        if k >= max_iter:
            raise ConvergenceError(
                f"PCG did not converge in {max_iter} iterations", residuals=history
            )
        Ap = apply(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = r / diag
        rz_next = r @ z
        p = z + (rz_next / rz) * p
        rz = rz_next
        history.append(np.linalg.norm(r) / bnorm)
        k += 1

        if history[-1] <= tol:
            # Guard against drift of the recursive residual
            r = b - apply(x)
            history[-1] = np.linalg.norm(r) / bnorm
            if history[-1] > tol:
                z = r / diag
                p = z.copy()
                rz = r @ z

    return x, history


def solve_equilibrium(
    xphys: np.ndarray,
    f: np.ndarray,
    dofs: DofMap,
    domain: DesignDomain,
    material: MaterialModel,
    KE: typing.Optional[np.ndarray] = None,
    tol: float = SIMPDefaults.pcg_tol,
    u0: typing.Optional[np.ndarray] = None,
    max_iter: typing.Optional[int] = None,
) -> np.ndarray:
    """
    Solve K(xphys) u = f on the free DOFs, matrix-free with Jacobi-preconditioned CG

    xphys is the per-element physical density (x-fastest vector). Entries of u at fixed DOFs
    are exactly 0. The default iteration cap is 10 * free DOF count
    """
    if not np.all(np.isfinite(f)):
        raise ValueError("Force vector contains non-finite entries")

    KE = element_stiffness(material, domain.h) if KE is None else KE
    free = ~dofs.fixed_mask
    b = f * free
    if not np.any(b):
        return np.zeros(domain.dof_count)

    op = StiffnessOperator(domain, simp_modulus(xphys, material), KE, dofs)
    max_iter = 10 * dofs.free_dof_count if max_iter is None else max_iter
    x0 = None if u0 is None else u0 * free
    u, history = pcg(op.apply, b, op.diagonal(), tol, max_iter, x0=x0)
    logging.debug(f"PCG converged in {len(history) - 1} iterations, residual {history[-1]:.3e}")

    u[~free] = 0.0
    return u


def compliance_and_sensitivity(
    u: np.ndarray,
    xphys: np.ndarray,
    domain: DesignDomain,
    material: MaterialModel,
    KE: typing.Optional[np.ndarray] = None,
) -> typing.Tuple[float, np.ndarray]:
    """
    Return compliance c = u^T K(x) u and its derivative w.r.t. each physical density
    """
    KE = element_stiffness(material, domain.h) if KE is None else KE
    ue = u[domain.element_dofs]
    ce = np.einsum("ij,jk,ik->i", ue, KE, ue)
    c = float(np.dot(simp_modulus(xphys, material), ce))
    dc = -material.p * xphys ** (material.p - 1) * (material.e0 - material.e_min) * ce
    return c, dc
