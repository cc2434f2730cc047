"""Reweighted adversarial training: weights, attacks, training and mixture theory."""

import json as _json

from ._virlab import (
    Classifier,
    attack,
    gairat_weight,
    kl_divergence,
    mail_margin,
    mail_weight,
    s_d,
    s_v,
    softmax,
    theorem_risks,
    theory_row,
    thresholds,
    vir_weight,
)
from . import _virlab


def default_config(profile="desk"):
    """Resolved configuration of a named profile as a dict."""
    return _json.loads(_virlab.default_config(profile))


def train(config, out_dir=None, profile="desk"):
    """Train from a config dict or JSON string overlaid on `profile`."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _virlab.train(config, out_dir=out_dir, profile=profile)


__all__ = [
    "Classifier",
    "attack",
    "default_config",
    "gairat_weight",
    "kl_divergence",
    "mail_margin",
    "mail_weight",
    "s_d",
    "s_v",
    "softmax",
    "theorem_risks",
    "theory_row",
    "thresholds",
    "train",
    "vir_weight",
]
