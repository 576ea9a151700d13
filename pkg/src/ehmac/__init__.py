"""Analysis and simulation of TDMA, framed ALOHA and dynamic framed ALOHA
for single-hop sensor networks powered by harvested energy."""

from .capture import (CaptureTable, GainParticles, build_capture_table, capture_cond,
                      poisson_weight, propagate_gain_particles)
from .estimator import (BacklogEstimator, FrameObservation, beta_means, frame_length,
                        initial_backlog, update_backlog)
from .markov import (EnergyDistribution, StateIndex, TransitionMatrix, begin_ir_distribution,
                     build_transition_matrix, energy_pmf, stationary_distribution,
                     steady_state, transient_evolution)
from .metrics import MetricsReport, TradeoffPoint, analyze, tradeoff_curve
from .model import (ConfigError, EnergyConfig, FadingModel, HarvestModel, NumericTolerances,
                    SystemConfig, evaluation_config, validate)
from .sim import SimReport, resolve_slot, run_ir, run_replicas, run_simulation

__version__ = "0.1.0"
