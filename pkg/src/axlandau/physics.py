"""Species data, collision frequencies, initial states, and moments.

Units are dimensionless throughout: masses are multiples of the reference
mass m_o (so the first species of a typical electron-led list has mass 1),
charges are multiples of the elementary charge, temperatures set the
thermal widths through sigma^2 = 2 T / m, and time is normalized by the
first species' self-collision frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import ReferenceElement, StateVector, sample_state
from .kernel import CollisionParams
from .mesh import VelocityMesh

__all__ = [
    "Species",
    "MomentSet",
    "collision_params",
    "maxwellian_init",
    "moments",
    "entropy",
    "temperatures",
]


@dataclass(frozen=True)
class Species:
    """One particle species: mass/charge in reference units, plus the
    temperature and z-drift of its initial shifted Maxwellian."""

    name: str
    mass: float
    charge: float
    temperature: float
    shift: float = 0.0

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"species {self.name!r}: mass must be positive")
        if self.temperature <= 0:
            raise ValueError(f"species {self.name!r}: temperature must be positive")

    @property
    def sigma2(self) -> float:
        """Squared thermal width of the initial Maxwellian, 2 T m_o / m."""
        return 2.0 * self.temperature / self.mass


@dataclass(frozen=True)
class MomentSet:
    """Per-species velocity moments: density, z-momentum, kinetic energy,
    and z thermal flux (all with the azimuthal 2*pi reinstated)."""

    n: np.ndarray
    p_z: np.ndarray
    E: np.ndarray
    q_z: np.ndarray

    @property
    def total_pz(self) -> float:
        return float(self.p_z.sum())

    @property
    def total_E(self) -> float:
        return float(self.E.sum())

    @property
    def total_qz(self) -> float:
        return float(self.q_z.sum())


def collision_params(species, ln_lambda: float = 10.0, m_o: float = 1.0,
                     eps0: float = 1.0) -> CollisionParams:
    """Pairwise collision frequencies, normalized by the first pair.

    nu[a][b] = e_a^2 e_b^2 ln_lambda / (8 pi m_o^2 eps0^2); the returned
    table is nu_hat = nu / nu[0][0], so it reduces to (e_a e_b / e_0^2)^2
    for a shared Coulomb logarithm.  Frequencies carry no mass dependence
    beyond the reference mass; the per-species m_o/m_a ratios ride along
    for the kernel's accumulation weights.
    """
    if len(species) == 0:
        raise ValueError("species list must be nonempty")
    e = np.array([s.charge for s in species], dtype=float)
    nu = (e[:, None] ** 2) * (e[None, :] ** 2) * ln_lambda / (8.0 * np.pi * m_o**2 * eps0**2)
    if nu[0, 0] == 0.0:
        raise ValueError("first species must be charged (it sets the time unit)")
    mro = np.array([1.0 / s.mass for s in species])
    return CollisionParams(nu_hat=nu / nu[0, 0], mass_ratio_o=mro)


def maxwellian_values(sp: Species, r, z, theta: float = 1.0) -> np.ndarray:
    """Shifted Maxwellian theta * (1/2) (pi sigma^2)^(-3/2) exp(-(r^2+(z-s)^2)/sigma^2)."""
    s2 = sp.sigma2
    return theta * 0.5 * (np.pi * s2) ** -1.5 * np.exp(-(r**2 + (z - sp.shift) ** 2) / s2)


def maxwellian_init(mesh: VelocityMesh, ref: ReferenceElement, species,
                    neutralize: bool = True) -> StateVector:
    """Nodal interpolant of each species' shifted Maxwellian.

    With `neutralize` and at least two species, the first species is left
    unscaled (theta = 1) and all later species share one scaling factor
    chosen so the discrete charge density sums to zero; this makes
    quasi-neutrality hold to rounding on the actual mesh instead of only
    in the continuum limit.
    """
    r, z = mesh.nodes[mesh.free_nodes, 0], mesh.nodes[mesh.free_nodes, 1]
    coeffs = np.stack([maxwellian_values(sp, r, z) for sp in species])
    state = StateVector(coeffs)
    if neutralize and len(species) > 1:
        moms = moments(mesh, ref, state, species)
        charges = np.array([sp.charge for sp in species])
        lead = charges[0] * moms.n[0]
        rest = float(charges[1:] @ moms.n[1:])
        if rest == 0.0:
            raise ValueError("cannot neutralize: trailing species carry no charge density")
        theta = -lead / rest
        if theta <= 0.0:
            raise ValueError("cannot neutralize: charge signs admit no positive scaling")
        state.coeffs[1:] *= theta
    return state


def moments(mesh: VelocityMesh, ref: ReferenceElement, state: StateVector,
            species) -> MomentSet:
    """Density, z-momentum, energy, and z thermal flux by element quadrature.

    With d_mu = 2 pi r dr dz:  n = int f d_mu,  p_z = m int z f d_mu,
    E = (m/2) int (r^2+z^2) f d_mu,  q_z = (m/2) int (r^2+z^2) z f d_mu.
    Linear in the state by construction.
    """
    data = sample_state(mesh, ref, state)
    m = np.array([sp.mass for sp in species])
    wf = data.f * data.w[None, :] * (2.0 * np.pi)
    v2 = data.r**2 + data.z**2
    n = wf.sum(axis=1)
    p_z = m * (wf @ data.z)
    E = 0.5 * m * (wf @ v2)
    q_z = 0.5 * m * (wf @ (v2 * data.z))
    return MomentSet(n=n, p_z=p_z, E=E, q_z=q_z)


def entropy(mesh: VelocityMesh, ref: ReferenceElement, state: StateVector) -> float:
    """Total entropy -sum_a int f_a ln f_a d_mu over the positive part of f.

    Quadrature points where f <= 0 (undershoots of the interpolant)
    contribute zero, which keeps the diagnostic defined along trajectories
    that develop small negative oscillations.
    """
    data = sample_state(mesh, ref, state)
    f = data.f
    flnf = np.where(f > 0.0, f * np.log(np.where(f > 0.0, f, 1.0)), 0.0)
    return float(-(flnf @ data.w).sum() * 2.0 * np.pi)


def temperatures(moms: MomentSet, species) -> np.ndarray:
    """Per-species temperature from the moments: T = (2E/n - m u_z^2)/3."""
    m = np.array([sp.mass for sp in species])
    u = moms.p_z / (m * moms.n)
    return (2.0 * moms.E / moms.n - m * u**2) / 3.0
