"""Fixed-effect least-squares regression on network data.

Graph construction, spectral connectivity diagnostics, the constrained
estimator and its pseudoinverse, bipartite one-mode projections, variance
bounds, standard errors and moment bias corrections.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConvergenceError,
    DisconnectedGraphError,
    GraphInputError,
    NetFEError,
    RankError,
)
from .graph import (  # noqa: E402
    Graph,
    GraphMatrices,
    build_graph,
    connected_components,
    is_connected,
    largest_component,
    matrices,
    neighbor_index,
    read_edge_csv,
    write_edge_csv,
)
from .spectral import (  # noqa: E402
    cheeger_bounds,
    cheeger_exact,
    diag_Sdag,
    lambda2,
    lstar_solve,
    normalized_laplacian,
    pseudoinverse_star,
    spectral_summary,
)
from .bipartite import (  # noqa: E402
    BipartiteData,
    build_bipartite,
    one_mode_projection,
    q_and_w,
    read_matched_csv,
    stack_two_way,
)
from .estimator import (  # noqa: E402
    FixedEffectFit,
    fit_alpha_known_beta,
    fit_alternative_normalization,
    fit_eta_three_ways,
    fit_full,
    plain_first_difference,
)
from .inference import (  # noqa: E402
    connectivity_report,
    covariate_gap_bound,
    diagnostics,
    difference_variance_bounds,
    harmonic_means,
    mean_zero_variance_bounds,
    rho_and_xbar,
    standard_errors,
    vertex_variance_bounds,
)
from .moments import (  # noqa: E402
    MomentEstimate,
    bias_corrected_variance,
    functional_bias,
    sample_variance,
    variance_bias_homoskedastic,
)
from .generators import (  # noqa: E402
    DGPConfig,
    erdos_renyi,
    extended_hypercube,
    hypercube,
    random_bipartite,
    random_connected,
    simulate,
    star,
    wheel,
)
