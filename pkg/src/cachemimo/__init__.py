"""Joint cache placement, delivery scheduling and power allocation for
cache-aided multi-antenna downlinks at finite SNR."""

from .closed_form import closed_form_solution, feasibility_check, placement_for_closed_form
from .enumeration import enumerate_combinations, enumerate_modes, enumerate_sections, validate_mode, variable_count
from .lp import (
    ProblemInstance,
    build_lp,
    extract_placement,
    extract_schedule,
    solve,
    solve_lp,
    verify_schedule,
)

__version__ = "0.1.0"
