"""Randomization-based variance estimation for general assignment mechanisms."""

import json

from ._core import (
    ConfigError,
    Mechanism,
    SapViolation,
    SupportTooLarge,
    battery_names,
    bias,
    estimate,
    lambda_max,
    max_eigenvalue,
    minimax_q,
    q_half,
    q_strat,
    q_strict,
    q_wholeplot,
    sap_condition,
    v_q,
    v_q_hat,
    validate_q,
    variance,
)
from . import _core


class Result(dict):
    """Parsed command output; `exit_code` matches the command-line tool."""

    def __init__(self, text, exit_code):
        super().__init__(json.loads(text))
        self.exit_code = exit_code


def _wrap(pair):
    return Result(*pair)


def probs(config, max_pairs=20000):
    return _wrap(_core._probs(str(config), max_pairs))


def variance_report(config, q="strict"):
    return _wrap(_core._variance(str(config), q))


def analyze(config, observed, q="strict", partition=None):
    """A refusal comes back with `refused` set and exit_code 3."""
    return _wrap(_core._analyze(str(config), str(observed), q, None if partition is None else str(partition)))


def check(config, q="strict", partition=None):
    return _wrap(_core._check(str(config), q, None if partition is None else str(partition)))


def oracle(battery, seed):
    return _wrap(_core._oracle_battery(battery, seed))


def simulate(models=("I", "II", "III", "IV", "V", "VI"), reps=100, seed=0, threads=0, end_to_end=False, draws=200):
    return _wrap(_core._simulate(list(models), reps, seed, threads, end_to_end, draws))


def factorial(levels, effect, basis=False):
    return _wrap(_core._factorial(list(levels), list(effect), basis))


__all__ = [
    "ConfigError",
    "Mechanism",
    "Result",
    "SapViolation",
    "SupportTooLarge",
    "analyze",
    "battery_names",
    "bias",
    "check",
    "estimate",
    "factorial",
    "lambda_max",
    "max_eigenvalue",
    "minimax_q",
    "oracle",
    "probs",
    "q_half",
    "q_strat",
    "q_strict",
    "q_wholeplot",
    "sap_condition",
    "simulate",
    "v_q",
    "v_q_hat",
    "validate_q",
    "variance",
    "variance_report",
]
