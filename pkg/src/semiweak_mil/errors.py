"""Error family shared by every layer of the package.

Each error carries a machine-friendly ``code`` and the process ``exit_code`` the
command-line surface reports for it, so the CLI can translate failures into a
stable contract without bespoke mapping logic.

The currently defined error codes are:

``format_error`` (2)
    A feature store manifest is missing, unparsable or structurally invalid.

``integrity_error`` (2)
    A feature file's byte count disagrees with the manifest shape.

``data_error`` (2)
    Feature values are non-finite or bag contents violate their invariants.

``domain_error`` (2)
    An argument lies outside its documented domain (class index, decay, ratio...).

``dimension_error`` (2)
    Matrix or parameter shapes are incompatible.

``numeric_error`` (3)
    A computation produced a non-finite value (divergent loss, NaN propagation).

``contract_error`` (2)
    A caller violated an operation precondition (non-scalar loss, empty pseudo bag...).

``split_error`` / ``recycle_error`` / ``lifecycle_error`` (2)
    Pseudo bag splitting, recycling or status transitions were asked to do the impossible.

``config_error`` (2)
    Training or synthesis configuration is invalid or inconsistent with the data.

``oracle_error`` (2)
    Oracle instance labels are required but absent.

``write_error`` / ``checkpoint_error`` (2)
    Artifacts could not be written or read back.
"""

from __future__ import annotations

from dataclasses import dataclass

EXIT_USAGE = 2
EXIT_NUMERIC = 3


@dataclass(frozen=True)
class SemiweakError(Exception):
    """Exception representing a failure with a stable code and CLI exit status.

    Parameters
    ----------
    message:
        Human readable summary that can be surfaced in panels and logs.
    details:
        Optional free-form diagnostic information.
    """

    message: str
    details: str | None = None

    code = "error"
    exit_code = EXIT_USAGE

    def __str__(self) -> str:  # pragma: no cover - trivial override
        if self.details:
            return f"{self.message} ({self.details})"
        return self.message


class FormatError(SemiweakError):
    code = "format_error"


class IntegrityError(SemiweakError):
    code = "integrity_error"


class DataError(SemiweakError):
    code = "data_error"


class DomainError(SemiweakError):
    code = "domain_error"


class DimensionError(SemiweakError):
    code = "dimension_error"


class NumericError(SemiweakError):
    code = "numeric_error"
    exit_code = EXIT_NUMERIC


class ContractError(SemiweakError):
    code = "contract_error"


class SplitError(SemiweakError):
    code = "split_error"


class RecycleError(SemiweakError):
    code = "recycle_error"


class LifecycleError(SemiweakError):
    code = "lifecycle_error"


class ConfigError(SemiweakError):
    code = "config_error"


class OracleError(SemiweakError):
    code = "oracle_error"


class StoreWriteError(SemiweakError):
    code = "write_error"


class CheckpointError(SemiweakError):
    code = "checkpoint_error"


__all__ = [
    "EXIT_NUMERIC",
    "EXIT_USAGE",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "DomainError",
    "FormatError",
    "IntegrityError",
    "LifecycleError",
    "NumericError",
    "OracleError",
    "RecycleError",
    "SemiweakError",
    "SplitError",
    "StoreWriteError",
]
