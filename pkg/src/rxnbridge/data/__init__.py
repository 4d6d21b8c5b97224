"""Bundled corpora: 50 aligned toy reactions and 500 random molecules.

Both files are generated by the scripts in tools/ and frozen here so the
test suite and examples run without external data.
"""

from importlib import resources


def _read_lines(name: str) -> list[str]:
    text = resources.files(__package__).joinpath(name).read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


def load_toy_reactions() -> list[str]:
    """50 atom-mapped reaction SMILES (reactants>>product)."""
    return _read_lines("reactions.txt")


def load_molecule_corpus() -> list[str]:
    """500 machine-generated molecule SMILES in non-canonical form."""
    return _read_lines("molecules.smi")
