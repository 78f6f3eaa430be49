"""Shipped search presets.

Two production search strings are stored verbatim as configuration assets:

* ``preset-strict``: field-scoped phrases with per-branch NOT filters that
  weed out known false-positive families, plus two trailing library
  exclusions.
* ``preset-broad``: the body-only recall-oriented variant used for the
  monthly sweep, with the same two library exclusions.

Both presets subtract two libraries referred to by fixed keys (labelled
excluded-A and excluded-B here). The keys are opaque; deployments map them
onto local libraries through resolver aliases (see librarystore.CatalogResolver
and the [aliases] section of the CLI config). The broad preset spells
excluded-B's key with a lower-case 'm'; both spellings are aliased to the
same library by default.
"""

from __future__ import annotations

from importlib import resources

PRESET_STRICT = "preset-strict"
PRESET_BROAD = "preset-broad"

# Keys embedded in the shipped preset strings.
EXCLUDED_A_KEY = "qazeXzDISj-d06qbiWLoXQ"
EXCLUDED_B_KEY = "k1BwfM56QgKbl6X-PXADqg"
EXCLUDED_B_KEY_ALT = "k1Bwfm56QgKbl6X-PXADqg"  # broad preset's spelling

_FILES = {
    PRESET_STRICT: "preset-strict.query",
    PRESET_BROAD: "preset-broad.query",
}


def preset_names() -> tuple[str, ...]:
    return tuple(_FILES)


def load_preset(name: str) -> str:
    """Return the verbatim preset string. KeyError for unknown names."""
    short = name.removeprefix("preset-")
    full = f"preset-{short}"
    if full not in _FILES:
        raise KeyError(f"unknown preset: {name!r}")
    ref = resources.files("bibcurate.assets").joinpath(_FILES[full])
    return ref.read_text(encoding="utf-8").rstrip("\n")
