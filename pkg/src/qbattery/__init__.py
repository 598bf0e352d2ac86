"""Numerical checks of charging-power bounds for quantum batteries."""

__version__ = "0.1.0"

from .linalg import (  # noqa: E402
    CompositeSpace,
    DensityMatrix,
    NotHermitianError,
    SingularLogarithm,
    Spectral,
    eig_hermitian,
    embed_battery_operator,
    expectation,
    matrix_function,
    partial_trace,
    tensor,
)
from .thermo import (  # noqa: E402
    RegularizationPolicy,
    ThermoContext,
    ergotropy,
    free_energy_operator,
    max_extractable_work,
    relative_entropy,
    thermal_state,
    von_neumann_entropy,
)
from .dynamics import (  # noqa: E402
    ClosedModel,
    IntegratorFailure,
    LindbladModel,
    Trajectory,
    evolve_closed,
    evolve_lindblad,
    lindblad_rhs,
    power_closed,
    power_open,
)
from .bounds import (  # noqa: E402
    BoundReport,
    closed_bound,
    cusumano_power,
    eigenstate_open_bound,
    open_bound,
    qfi_eigsum,
    qfi_sld,
    singularity_probe,
)
from .scenarios import load_scenario, named_model  # noqa: E402
