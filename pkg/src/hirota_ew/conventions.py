"""Sign and normalisation conventions that the source formulas leave open.

Each entry was fixed by matching an explicit formula (see the tests named in
``evidence``).  Reports embed :func:`digest` so that results can be read
against the conventions in force when they were produced.
"""
from __future__ import annotations

import hashlib
import json
from importlib import resources

_DATA = json.loads(resources.files(__package__).joinpath("conventions.json").read_text())

HODGE_ORIENTATION: int = _DATA["hodge_orientation"]["value"]
SYMMETRIC_PRODUCT_WEIGHT: float = _DATA["symmetric_product_weight"]["value"]
JONES_TOD_METRIC_FACTOR: float = _DATA["jones_tod_metric_factor"]["value"]
LAX_TO_VERONESE_MOBIUS: str = _DATA["lax_to_veronese_mobius"]["value"]
HEISENBERG_LIE_SIGN: int = _DATA["heisenberg_lie_sign"]["value"]
PSI_WEIGHT: int = _DATA["psi_weight"]["value"]


def lax_to_veronese(lam: float) -> float:
    """Veronese parameter of the plane spanned by the Hirota Lax pair at ``lam``."""
    return -1.0 / lam


def hirota_to_nil(lam: float, a: float, b: float) -> float:
    """Nil twistor parameter of the Hirota Lax plane at ``lam`` (Heisenberg example)."""
    return (a - b) / (a * (b * lam + 1.0))


def as_dict() -> dict:
    return {k: v["value"] for k, v in _DATA.items()}


def digest() -> str:
    blob = json.dumps(as_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
