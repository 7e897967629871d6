"""Finitely-repeated bimatrix games with private types: equilibrium
enumeration, regret accounting, handshake-coordination and
imitate-then-commit agents, population datasets, and a verification harness
for the associated concentration and performance bounds.
"""

from .game_core import (
    BimatrixGame,
    CapacityError,
    EpisodeTrace,
    GameError,
    GameFormatError,
    History,
    TypeSpace,
    exact_episode_value,
    expected_payoff,
    history_distribution,
    normalize_game,
    payoff,
    total_variation,
)
from .equilibria import (
    EquilibriumProfile,
    NashEnumeration,
    PoneSet,
    best_response,
    enumerate_nash,
    is_nash,
    pareto_optimal_nash,
    worst_pone_payoff,
)
from .regret import (
    AzumaThresholds,
    RegretReport,
    altruistic_regret,
    azuma_thresholds,
    expected_external_regret,
    external_regret,
    report_from_trace,
)
from .agents import (
    Agent,
    AgentSpec,
    ConventionTable,
    MWAgent,
    ProtocolAgent,
    SocialParams,
    build_agent,
    build_convention_table,
    default_eta,
    default_handshake_length,
    handshake_decode,
    handshake_encode,
    mw_update,
    protocol_threshold,
    register_agent_kind,
    theorem26_params,
)
from .population import (
    Dataset,
    Population,
    TypeDistribution,
    derive_episode_seed,
    flatten_population,
    generate_dataset,
    play_episode,
    read_dataset,
    run_episode,
    write_dataset,
)
from .imitation_commit import (
    CommitmentMixture,
    ImitateThenCommitAgent,
    ImitationPolicy,
    auth_failure_probability,
    bound_report,
    delta_K,
    fit_imitation,
    ic_strategy,
    mixture_from_joint,
    response_function,
    theorem42_bound,
)
from .harness import (
    ExperimentConfig,
    VerificationResult,
    emit_curves,
    run_experiment,
)

__version__ = "0.1.0"
