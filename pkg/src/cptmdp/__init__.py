"""Policy synthesis for finite-horizon MDPs under cumulative prospect theory measures."""

from .ccp import (
    CcpTrace,
    DcStageProblem,
    build_stage_objective,
    ccp_solve_stage,
    convexify,
    maximize_concave_over_simplex,
    project_simplex,
    stage_objective_value,
)
from .cpt import (
    DiscreteOutcome,
    Identity,
    PosynomialApprox,
    PowerGain,
    PowerLoss,
    Prelec,
    TailCurve,
    TverskyKahneman,
    cpt_value_discrete,
    eval_utility,
    eval_weighting,
    tail_curve,
)
from .errors import DomainError, InvalidInputError, ModelParseError, NumericalFailure
from .mdp import (
    InducedChain,
    Mdp,
    PolicyTable,
    SimulationReport,
    ValueTable,
    evaluate_policy_expected,
    induce_chain,
    simulate,
    validate,
    value_iteration_expected_cost,
    value_iteration_reachability,
)
from .posy import (
    DcSplit,
    FitReport,
    GridSpec,
    Posynomial,
    classify_terms,
    default_basis,
    fit_polynomial_baseline,
    fit_posynomial,
    select_basis,
)
from .synthesis import SynthesisConfig, evaluate_policy_cpt, synthesize

__version__ = "0.1.0"
