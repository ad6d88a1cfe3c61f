"""
Command line: scenario simulation, oracle verification and cost evaluation.

For Copyright information, please see LICENCE.
"""

from .commands import (  # noqa: F401
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_VERIFICATION,
    build_parser,
    cmd_cost,
    cmd_simulate,
    cmd_verify,
    main,
    run_scenario,
)
from .config import (  # noqa: F401
    REPORT_DIR_ENV,
    ScenarioConfig,
    load_scenario,
    parse_scenario,
)
from .cost import FORMULAS, evaluate_formula, scenario_cost_report  # noqa: F401
from .reporting import (  # noqa: F401
    RECORD_FIELDS,
    read_jsonl,
    scenario_records,
    write_records,
)
from .verification import VerificationMatrix, run_sweep  # noqa: F401
