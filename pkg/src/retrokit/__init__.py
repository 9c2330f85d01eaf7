"""Retrofit-control synthesis and simulation toolkit.

Design a controller for one subsystem of an already-stable network from that
subsystem's model alone, with guaranteed whole-network stability and
quantified transient performance. The package provides the numeric kernels,
the plant data model, hierarchical state-space expansion, the retrofit
controller forms, a deterministic simulator, and benchmark builders for a
power network and a nonlinear vehicle platoon (``retrokit.bench``, also
exposed as the ``retrokit`` command line tool).
"""

from .errors import (
    DimensionError,
    DivergenceError,
    NumericsError,
    ProjectionError,
    RetrokitError,
    StabilityError,
    SynthesisError,
)
from .hierarchy import (
    HierarchicalRealization,
    ProjectionPair,
    admissible_projection,
    downstream_transfer,
    expand,
    expand_nonlinear,
    expand_parameterized,
    identity_projection,
    oblique_projector,
)
from .numlin import (
    GramianPair,
    StateSpace,
    balanced_truncation,
    h2_norm,
    hankel_singular_values,
    hinf_norm,
    ic_response_l2,
    ic_response_l2_sup,
    is_hurwitz,
    lqr_gain,
    solve_care,
    solve_lyapunov,
)
from .retrofit import (
    NaiveObserver,
    NaiveProjectedStateFeedback,
    NaiveStaticFeedback,
    PerformanceBound,
    RetrofitObserverBased,
    RetrofitOutputFeedback,
    RetrofitStateFeedback,
    controller_from_json,
    controller_to_json,
    design_local_lqr,
    design_local_observer,
    performance_bounds,
    synthesize_observer_based,
    synthesize_output_feedback,
    synthesize_state_feedback,
)
from .sim import (
    EventSpec,
    IntegratorConfig,
    Trajectory,
    TruncationWarning,
    integrate,
    l2_norm,
    min_pairwise_gap,
    trajectory_to_csv,
)
from .sysmodel import (
    Attachment,
    ClosedLoop,
    LinearEnvironment,
    LinearSubsystem,
    NonlinearEnvironment,
    NonlinearResidual,
    PreexistingSystem,
    assemble_closed_loop,
    assemble_preexisting,
    jacobian,
    linearize_environment,
    load_system,
    residualize,
    save_system,
)

__version__ = "0.1.0"
