"""Node-level SIR epidemics on random contact graphs, with group control games."""
from netsir.contact_graph import (
    ContactGraph,
    Topology,
    TopologyConfig,
    WeightMatrix,
    assign_labels,
    binarize,
    confine,
    generate_weights,
    graph_stats,
)
from netsir.errors import ConfigurationError, ContractViolation, NetsirError, StructuralError
from netsir.games import (
    PreferenceProfile,
    compound_payoff,
    intensity_sweep,
    objective_weights,
    pure_nash,
    ranking_weights,
)
from netsir.metrics import activation_margin, infection_load, peak_mean_infection
from netsir.scenarios import (
    ControlStrategy,
    Kind,
    PayoffMatrix,
    Timing,
    build_payoff_matrix,
    experiment1,
    resolve_schedule,
)
from netsir.sir_dynamics import EpidemicParams, SirState, euler_step, run_epidemic, vaccinate

__version__ = "0.1.0"
