"""Phase-field quasi-static fracture: regularized energies, alternating
minimization under an irreversibility ceiling, and sharp-interface
convergence diagnostics on structured 1D/2D grids."""

from .analysis import (
    CrackEstimate,
    eps_sweep,
    extract_crack,
    gamma_liminf_check,
    select_levels,
    sharp_oracle_1d,
    sharp_oracle_strip,
)
from .config import RunConfig, build_problem, parse_config, write_config
from .energy import (
    ATParams,
    EnergyRecord,
    elliptic_energy,
    mm_energy,
    total_energy,
    work_increment,
)
from .evolution import (
    BoundarySchedule,
    EvolutionState,
    Strategy,
    advance,
    competitor_step,
    init_step,
    run,
)
from .grid import (
    Field,
    Grid,
    QuadraticForm,
    assemble_phase_form,
    assemble_weighted_stiffness,
    build_grid,
    constant_field,
    read_field,
    validate_phase_field,
    write_field,
)
from .solve import SolverError, alternate_minimize, solve_box_qp, solve_spd

__version__ = "0.1.0"
