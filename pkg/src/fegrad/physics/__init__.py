"""Energy densities, constraint functionals and coupling terms."""

from .cohesive import (
    CohesiveParams,
    InterfaceOperator,
    cohesive_density,
    effective_traction,
    loading_potential,
    loading_traction,
    update_history,
)
from .constraints import lagrangian, periodicity_constraints, rigid_body_lift, rotation_matrix
from .contact import ContactSurface, node_to_segment_gaps, penalty_contact_energy
from .elasticity import (
    ElasticParams,
    elastic_density,
    elastic_energy,
    kirsch_reference,
    linear_elastic_density,
    neo_hookean_density,
    phase_elastic_energy,
    traction_potential,
)
from .fiber import EmbeddedFibers, fiber_energy
from .neural import (
    MlpWeights,
    init_mlp,
    invariant_base_density,
    mlp,
    mlp_energy_density,
    neural_inclusion_energy,
    zero_mlp,
)
from .transport import (
    advection_diffusion_virtual_work,
    rotation_velocity,
    transient_heat_potential,
    virtual_work_residual,
)

__all__ = [name for name in dir() if not name.startswith("_")]
