"""plotkit: renders figures from brwkit experiment artifacts.

Consumes only the published artifact files (rows CSV, fit JSON, prediction
JSON); performs no statistics of its own beyond plotting transforms, and
cross-checks the fit report against a resummarization of the CSV before
trusting it.
"""

__version__ = "0.1.0"

from .render import (  # noqa: F401
    CrossCheckError,
    PlotRequest,
    SchemaError,
    render,
)
