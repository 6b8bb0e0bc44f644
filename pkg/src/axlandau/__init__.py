"""Conservative finite-element solver for the axisymmetric multi-species
Landau collision operator on adaptively refined velocity-space meshes.

The package is organized bottom-up:

* `mesh`     quadtree meshes, 2:1 balance, hanging-node constraints
* `fem`      Q2 elements, quadrature geometry, mass matrix, state sampling
* `kernel`   Landau tensors, elliptic integrals, the fused O(N^2) inner loop
* `assembly` collision-matrix assembly (fused and naive reference paths)
* `solver`   Crank-Nicolson stepping with frozen-coefficient Newton
* `physics`  species, collision frequencies, Maxwellians, moments
* `cli`      run / converge / bench / mesh-dump batch front-end
"""

from .assembly import (
    CollisionMatrix,
    assemble_collision,
    assemble_naive,
    element_accumulate,
    export_coo,
    transform_point,
)
from .fem import (
    ElementGeometry,
    QuadPointData,
    ReferenceElement,
    StateVector,
    build_reference_element,
    element_geometry,
    mass_matrix,
    sample_state,
)
from .kernel import (
    Accumulators,
    CollisionParams,
    LandauTensorPair,
    axisym_tensor_pair,
    elliptic_KE,
    flop_count,
    fused_inner_loop,
    fused_sweep,
    landau_tensor_3v,
)
from .mesh import (
    DomainSpec,
    VelocityMesh,
    adapt_for_species,
    cartesian_mesh,
    mesh_stats,
    refine,
    write_vtk,
)
from .physics import (
    MomentSet,
    Species,
    collision_params,
    entropy,
    maxwellian_init,
    moments,
    temperatures,
)
from .solver import (
    StepConfig,
    StepFailure,
    advance,
    linear_cn_step,
    newton_step,
    residual,
)

__version__ = "0.1.0"
