"""Multi-level FSM contract compiler: spec loading, validation, dependency
analysis, Solidity generation, auditing, and an execution oracle."""

from .audit import AuditFinding, audit_generated, audit_spec
from .codegen import GeneratedBundle, GeneratedUnit, format_source, generate, write_bundle
from .depgraph import CycleError, DependencyGraph, build_graph, to_dot, topo_order
from .errors import MlfsmError
from .exprlang import ExprNode, Value, eval_expr, parse_expr, translate_expr, typecheck_expr
from .interpreter import (
    ExecutionEnv,
    ReachabilitySet,
    Trace,
    TransitionResult,
    explore,
    new_env,
    parse_script,
    run_script,
)
from .loader import load_contract_spec, load_package, load_package_dir
from .model import (
    AutomatonCompleted,
    ClauseAutomaton,
    ConditionRef,
    ContractSpec,
    PackageCall,
    Transition,
    parse_condition_token,
    render_condition_token,
)
from .packages import PackageFunction, PackageLibrary, PackageSet, PackageVariable
from .validator import Diagnostic, reachable_states, validate

__all__ = [
    "AuditFinding",
    "AutomatonCompleted",
    "ClauseAutomaton",
    "ConditionRef",
    "ContractSpec",
    "CycleError",
    "DependencyGraph",
    "Diagnostic",
    "ExecutionEnv",
    "ExprNode",
    "GeneratedBundle",
    "GeneratedUnit",
    "MlfsmError",
    "PackageCall",
    "PackageFunction",
    "PackageLibrary",
    "PackageSet",
    "PackageVariable",
    "ReachabilitySet",
    "Trace",
    "Transition",
    "TransitionResult",
    "Value",
    "audit_generated",
    "audit_spec",
    "build_graph",
    "eval_expr",
    "explore",
    "format_source",
    "generate",
    "load_contract_spec",
    "load_package",
    "load_package_dir",
    "new_env",
    "parse_condition_token",
    "parse_expr",
    "parse_script",
    "reachable_states",
    "render_condition_token",
    "run_script",
    "to_dot",
    "topo_order",
    "translate_expr",
    "typecheck_expr",
    "validate",
    "write_bundle",
]

__version__ = "0.1.0"
