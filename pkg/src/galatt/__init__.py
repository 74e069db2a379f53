"""Symbolic infinite-state game solving with acceleration lemmas and enforcement summaries."""
from .formula import Bool, Int, Real, Var
from .game import Buchi, CoBuchi, Player, Reach, Safety, SymbolicGame, SymbolicState
from .gamefile import parse_game, read_game_file
from .smt import SmtBackend, SolverConfig
from .solver import Result, SolveOptions, SolveResult, Solver, solve

__all__ = [
    "Bool", "Int", "Real", "Var",
    "Buchi", "CoBuchi", "Player", "Reach", "Safety", "SymbolicGame", "SymbolicState",
    "parse_game", "read_game_file", "SmtBackend", "SolverConfig",
    "Result", "SolveOptions", "SolveResult", "Solver", "solve",
]
