"""Shared labelling conventions.

Outcomes are indexed ``00, 01, 10, 11`` with qubit/party A as the left bit.
Bit 0 means outcome ``+1`` and bit 1 means ``-1``.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

CONTEXTS: tuple[str, ...] = ("xy", "xy'", "x'y", "x'y'")
OUTCOMES: tuple[str, ...] = ("00", "01", "10", "11")

# sign of each context in S = E_xy + E_xy' + E_x'y - E_x'y'
CHSH_SIGNS: dict[str, int] = {"xy": 1, "xy'": 1, "x'y": 1, "x'y'": -1}

# product of the two +/-1 outcomes for each bitstring
PARITY = np.array([1.0, -1.0, -1.0, 1.0])

_ALIASES = {
    "xy": "xy",
    "xy'": "xy'",
    "xyp": "xy'",
    "x'y": "x'y",
    "xpy": "x'y",
    "x'y'": "x'y'",
    "xpyp": "x'y'",
}


def normalize_context(label: str) -> str:
    """Return the canonical label for ``label``.

    Accepts the primed form (``x'y'``), the ASCII ``p`` form (``xpyp``) and
    typographic primes.
    """
    key = str(label).strip().lower().replace("′", "'").replace("’", "'")
    try:
        return _ALIASES[key]
    except KeyError:
        raise ValidationError(f"unknown context label {label!r}; expected one of {CONTEXTS}") from None


def context_settings(context: str) -> tuple[int, int]:
    """Setting indices (a, b) of a context; 0 is unprimed, 1 is primed."""
    c = normalize_context(context)
    return CONTEXTS.index(c) // 2, CONTEXTS.index(c) % 2
