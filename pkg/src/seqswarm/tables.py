"""Shared residue data tables, loaded from the versioned JSON shipped with the package."""

from __future__ import annotations

import json
from importlib import resources

_raw = json.loads(
    resources.files("seqswarm").joinpath("data/residue_tables.json").read_text()
)

TABLE_VERSION: int = _raw["version"]

#: The 20 standard one-letter amino-acid codes, alphabetical.
ALPHABET: str = _raw["alphabet"]
ALPHABET_SET = frozenset(ALPHABET)

#: Secondary-structure propensity scales, keyed by label H/E/L then residue.
PROPENSITY: dict[str, dict[str, float]] = {
    label: dict(values)
    for label, values in _raw["propensity"].items()
    if label != "comment"
}

#: Average residue masses (Da) and the water mass added once per free peptide.
AVERAGE_RESIDUE_MASS: dict[str, float] = {
    k: v for k, v in _raw["average_residue_mass"].items() if k != "comment"
}
WATER_MASS: float = _raw["water_mass"]

#: Named residue classes. "aromatic" overlaps the primary partition and is
#: only used where a rule asks for it explicitly.
CLASSES: dict[str, frozenset[str]] = {
    name: frozenset(letters) for name, letters in _raw["classes"].items()
}

#: Residues counted as metal-coordinating in pocket scoring.
METAL_COORDINATING = frozenset(_raw["metal_coordinating"])

#: Per-residue reference energies for the built-in contact score.
REFERENCE_ENERGY: dict[str, float] = {
    k: v for k, v in _raw["reference_energy"].items() if k != "comment"
}

# The primary partition assigns every residue exactly one class; aromatics
# fold into hydrophobic, G counts as polar, P stands alone.
_PARTITION_ORDER = ("hydrophobic", "polar", "positive", "negative", "special")
_PRIMARY_CLASS: dict[str, str] = {}
for _name in _PARTITION_ORDER:
    for _aa in CLASSES[_name]:
        _PRIMARY_CLASS.setdefault(_aa, _name)


def primary_class(aa: str) -> str:
    """Return the partition class (hydrophobic/polar/positive/negative/special) of a residue."""
    return _PRIMARY_CLASS[aa]


def resolve_class(name_or_letters: str) -> frozenset[str]:
    """Resolve a residue-class reference: a named class or a literal letter set."""
    if name_or_letters in CLASSES:
        return CLASSES[name_or_letters]
    letters = frozenset(name_or_letters.upper())
    unknown = letters - ALPHABET_SET
    if unknown:
        raise ValueError(f"unknown residue class {name_or_letters!r}")
    return letters
