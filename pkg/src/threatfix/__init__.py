"""Threat detection and minimum-cost repair for architectural system models."""

from .dsl import (DslError, Rule, RuleSyntaxError, SortError, parse_formula,
                  parse_rules, print_formula, print_rules)
from .engine import (Change, CheckReport, EngineConfig, RepairReport,
                     apply_repair, check, heuristic_partial_repair,
                     minimal_repair, partial_repair, repair, repair_wcnf)
from .model import (AttributeDef, MetaModel, ModelError, SystemModel,
                    load_costs, parse_model, serialize_model)
from .semantics import (OracleBoundError, Path, Witness, brute_force_min_repair,
                        enumerate_paths, evaluate, witnesses)
from .smtlib import emit_smtlib

__version__ = "0.1.0"

__all__ = [
    "AttributeDef", "Change", "CheckReport", "DslError", "EngineConfig",
    "MetaModel", "ModelError", "OracleBoundError", "Path", "RepairReport",
    "Rule", "RuleSyntaxError", "SortError", "SystemModel", "Witness",
    "apply_repair", "brute_force_min_repair", "check", "emit_smtlib",
    "enumerate_paths", "evaluate", "heuristic_partial_repair", "load_costs",
    "minimal_repair", "parse_formula", "parse_model", "parse_rules",
    "partial_repair", "print_formula", "print_rules", "repair", "repair_wcnf",
    "serialize_model", "witnesses",
]
