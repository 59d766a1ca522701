"""Cognitive radar waveform selection with contextual bandits.

Modules
-------
spectrum
    Waveform catalog, channel grid and the collision / missed-bandwidth /
    distortion cost.
bandit
    Observation history, contexts, constrained Thompson sampling and EXP3,
    regret accounting.
environment
    Cellular coexistence and adaptive jammer interference models.
signalchain
    Pulse-agile CPI synthesis, matched filtering, range-Doppler processing,
    2D CA-CFAR and detection scoring.
harness
    Experiment configuration, the per-PRI loop and aggregation.
"""

from .spectrum import (
    Catalog,
    ChannelGrid,
    CostWeights,
    Waveform,
    build_catalog,
    cost,
)
from .bandit import Exp3, ObservationHistory, RegretLedger, ThompsonSampling
from .environment import CoexistenceEnvironment, JammerEnvironment, StaticEnvironment
from .signalchain import CpiConfig, Target, cfar_2d, process_cpi, simulate_cpi
from .harness import ExperimentConfig, aggregate, run_episode, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "ChannelGrid",
    "CostWeights",
    "Waveform",
    "build_catalog",
    "cost",
    "Exp3",
    "ObservationHistory",
    "RegretLedger",
    "ThompsonSampling",
    "CoexistenceEnvironment",
    "JammerEnvironment",
    "StaticEnvironment",
    "CpiConfig",
    "Target",
    "cfar_2d",
    "process_cpi",
    "simulate_cpi",
    "ExperimentConfig",
    "aggregate",
    "run_episode",
    "run_experiment",
]
