"""Numerical toolkit for two-player zero-sum stochastic differential games.

Solves the lower Isaacs equation with a monotone finite-difference scheme,
synthesizes simple Markov strategies and counter-strategies from the
numerical value, and checks them with exact restricted-value sweeps,
Monte Carlo simulation and a Markov-chain lattice oracle.
"""
__version__ = "0.1.0"

from .errors import (ArityError, CFLError, ConfigError, EvaluationError, ExpressionSyntaxError, GridError,
                     IsaacsLabError, LatticeError, NonFiniteValueError, StageError, UnknownIdentifierError)
from .expr import eval_expression, evaluate, parse_expression, to_source, variables
from .model import ActionGrid, AuditReport, GameModel, audit_assumptions, load_model, make_model
from .hamiltonian import (DerivativePair, HamiltonianResult, counter_response, isaacs_gap, lower_hamiltonian,
                          running_cost_operator, upper_hamiltonian)
from .solver import SpatialGrid, ValueFunction, cfl_step, query_value, read_value_csv, solve_lower_isaacs
from .strategy import (ConstantSource, ControlSource, FeedbackSource, RandomSource, ScheduleSource,
                       SimpleMarkovCounterStrategy, SimpleMarkovStrategy, TimeGrid, counter_action,
                       counter_response_source, hamiltonian_feedback_source, strategy_action,
                       synthesize_markov_counter_strategy, synthesize_markov_strategy)
from .restricted import (AugmentedValue, GapRow, GapTable, adversary_best_response_value,
                         controller_best_response_value, sandwich_report)
from .simulator import (Path, PayoffEstimate, exit_frequency, gauge_function, gauge_tail_bound,
                        martingale_defect, mc_payoff, simulate_path)
from .lattice import (LatticeGame, build_lattice, lattice_grid_restricted_lower, lattice_lower_value,
                      lattice_upper_value)
from .experiments import (ExperimentConfig, SaddleReport, emit_report, estimate_delta, load_experiment_config,
                          run_convergence_study, run_saddle_check)
from .estimators import LowerIsaacsSolver, MarkovStrategySynthesizer
