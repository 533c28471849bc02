"""Bundled example configurations.

Hardware presets carry illustrative placeholder energies for preliminary
exploration; none of the numbers are calibrated against a physical design.
"""

from __future__ import annotations

from importlib import resources


def preset_path(name: str) -> str:
    """Filesystem path of a bundled preset, e.g. 'hw_mars_style.yaml' or
    'sparsity/row_wise.yaml'."""
    root = resources.files("cimcost") / "presets"
    path = root / name
    if not path.is_file():
        available = sorted(
            str(p.name) for p in root.iterdir() if p.name.endswith(".yaml")
        )
        raise FileNotFoundError(f"no preset {name!r}; bundled: {available}")
    return str(path)


def preset_text(name: str) -> str:
    with open(preset_path(name), "r", encoding="utf-8") as f:
        return f.read()
