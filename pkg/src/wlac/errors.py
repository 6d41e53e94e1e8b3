"""Error taxonomy shared by every module.

ConfigError   - bad construction-time settings (sizes, ranges, ratios)
InputError    - bad runtime payloads (unknown pieces, malformed records)
ContractError - caller broke an API contract (shape mismatch, reused tape)
NumericFault  - a non-finite value escaped a numeric op
"""


class WlacError(Exception):
    pass


class ConfigError(WlacError, ValueError):
    pass


class InputError(WlacError, ValueError):
    pass


class ContractError(WlacError, ValueError):
    pass


class NumericFault(WlacError, ArithmeticError):
    pass
