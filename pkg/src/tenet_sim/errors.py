"""Exception hierarchy shared across the simulator.

Two top-level families so the CLI can map failures to exit codes:
ValidationError covers bad configs, schemas, shapes and parse errors
(exit 1); ComputeError covers failures detected while computing, such
as corrupt payload bytes or a failed equivalence suite (exit 2).
"""


class ValidationError(ValueError):
    """Input, config, schema or shape is invalid."""


class ComputeError(RuntimeError):
    """A computation failed or an internal consistency check tripped."""


class ShapeError(ValidationError):
    """Operand shapes are inconsistent."""


class SchemaError(ValidationError):
    """A JSON document does not match its schema."""
