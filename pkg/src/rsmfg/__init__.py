"""Mean-field equilibria of partially observed risk-sensitive games on finite spaces."""

from .game_model import GameSpec, validate_spec
from .mfg_solver import EquilibriumArtifact, find_equilibrium, solve_pomdp
from .policies import Policy

__all__ = ["GameSpec", "validate_spec", "EquilibriumArtifact", "find_equilibrium", "solve_pomdp", "Policy"]
__version__ = "0.1.0"
