"""Moving-mirror cavities in 1+1 dimensions: Moore functions, Casimir energy and
shortcuts to adiabaticity, plus the harmonic-oscillator (Ermakov) analogue."""
from .trajectory import (
    CavityProtocol,
    Segment,
    Trajectory,
    TrajectoryError,
    erasing_trajectory_left,
    erasing_trajectory_right,
    make_cosine_pulse,
    make_hermite,
    make_polynomial_pulse,
    make_ramp,
    time_reverse,
)
from .moore import (
    AdiabaticMoore,
    LinearMoore,
    MooreError,
    MoorePair,
    SolvedMoore,
    adiabatic_moore,
    decompose_periodic,
    invert_characteristic,
    residuals,
    solve,
)
from .energy import (
    adiabatic_energy,
    adiabaticity,
    energy_cost,
    energy_density,
    f_component,
    thermal_Z,
    total_energy,
    trace,
)
from .sta import (
    CompletionError,
    CompletionPlan,
    check_reversal_condition,
    complete_by_extension,
    complete_by_pulse,
    complete_by_time_reversal,
    inverse_engineer,
    reverse_protocol,
    shortcut_from_reference,
    verify_sta,
)

__version__ = "0.1.0"
