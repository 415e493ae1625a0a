"""JSON encoding of phase-type, frailty and bivariate models."""

import json

from .frailty import FrailtyModel
from .multivariate import BivariatePH, CorrelatedFrailtyModel
from .phase_type import PhaseType

__all__ = ["to_json", "from_json", "load_model", "save_model", "round_floats"]


def round_floats(obj, digits):
    """Round every float in a nested structure to ``digits`` significant digits."""
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    return obj


def to_json(obj, digits=None, **kwargs):
    """Serialise a model (or anything with ``to_dict``) to a JSON string.

    Python's float repr round-trips exactly, so ``digits=None`` keeps full
    precision.
    """
    d = obj.to_dict() if hasattr(obj, "to_dict") else obj
    if digits is not None:
        d = round_floats(d, digits)
    return json.dumps(d, **kwargs)


def from_dict(d):
    if "eta" in d:
        return CorrelatedFrailtyModel.from_dict(d) if "baseline1" in d else BivariatePH.from_dict(d)
    if "baseline" in d:
        return FrailtyModel.from_dict(d)
    return PhaseType.from_dict(d)


def from_json(text):
    """Inverse of :func:`to_json`; the model type is inferred from the keys."""
    return from_dict(json.loads(text))


def load_model(path):
    with open(path) as fh:
        return from_json(fh.read())


def save_model(obj, path, digits=None):
    with open(path, "w") as fh:
        fh.write(to_json(obj, digits, indent=2))
        fh.write("\n")
