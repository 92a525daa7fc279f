"""Matrix-weighted dyadic harmonic analysis lab: Python bindings."""

import json

from . import _mwdha
from ._mwdha import (
    ResourceError,
    SingularityError,
    UnsupportedError,
    ValidationError,
    apply_czo,
    lp_norm,
    subcommands,
)

__all__ = [
    "ResourceError",
    "SingularityError",
    "UnsupportedError",
    "ValidationError",
    "apply_czo",
    "default_config",
    "estimate_pi_bad",
    "haar_inverse",
    "haar_transform",
    "lp_norm",
    "run",
    "subcommands",
]


def run(subcommand, config=None, **overrides):
    """Run a CLI subcommand in-process; keyword names use underscores for dashes."""
    cfg = dict(config or {})
    cfg.update({k.replace("_", "-"): v for k, v in overrides.items()})
    return json.loads(_mwdha.run_json(subcommand, json.dumps(cfg)))


def default_config():
    return json.loads(_mwdha.default_config_json())


def haar_transform(values, d, L, shift_seed=-1):
    """values has shape (2**(d*L), m); returns the coefficient dict."""
    return json.loads(_mwdha.haar_transform_json(values, d, L, shift_seed))


def haar_inverse(coefficients):
    return _mwdha.haar_inverse_json(json.dumps(coefficients))


def estimate_pi_bad(d, r, alpha, trials, seed, depth=10):
    return json.loads(_mwdha.estimate_pi_bad_json(d, r, alpha, trials, seed, depth))
