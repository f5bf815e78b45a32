"""symopt: symbolic-expression search driven by policy gradients.

An autoregressive recurrent policy samples expression traversals under hard
constraint masks and soft priors; candidates are scored by 1/(1+NMSE) after
inner constant fitting; the policy trains by vanilla, quantile (risk-seeking),
or priority-queue policy gradients, optionally hybridized with a genetic
programming inner loop. A benchmark harness measures exact-recovery rates on
the Nguyen suite.
"""

from ._backend import backend_name
from .bench import (
    BenchmarkSpec,
    RunRecord,
    SearchSettings,
    get_benchmark,
    list_benchmarks,
    make_dataset,
    nguyen_spec,
    run_experiment,
    run_single,
)
from .dataset import Dataset, load_csv
from .equivalence import EquivalenceResult, check_equivalence, symbolically_equivalent
from .errors import (
    ConfigError,
    ContractViolationError,
    IncompleteTraversalError,
    SymoptError,
    UnknownTokenError,
    UnreachableTraversalError,
)
from .evaluate import INVALID, evaluate, evaluate_ids, is_invalid
from .gp import GPConfig, gp_generation, hybrid_loop, seed_population
from .policy import (
    PolicyParams,
    SampleBatch,
    init_policy,
    load_params,
    log_prob_and_grad,
    sample_batch,
    sample_sequence,
    save_params,
    step_logits,
)
from .priors import (
    ArityBalancePrior,
    LengthMask,
    NoAllConstChildren,
    NoInverseUnary,
    NoNestedTrig,
    StepContext,
    build_adjusters,
    compose,
)
from .reward import RewardEvaluator, RewardValue, nmse, reward_for
from .tokens import Token, TokenKind, TokenLibrary, make_library
from .toymodel import BernoulliProductSpace, four_point_space
from .train import (
    RunResult,
    TopKQueue,
    TrainerConfig,
    empirical_quantile,
    entropy_gradient,
    pqt_gradient,
    rspg_gradient,
    train_loop,
    vpg_gradient,
)
from .traversal import (
    ExpressionTree,
    Traversal,
    is_complete,
    parent_sibling,
    random_complete,
    render_infix,
    to_traversal,
    to_tree,
)
from .treecheck import is_constraint_valid, scan_violations

__version__ = "0.1.0"
