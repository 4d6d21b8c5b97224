from .smiles import (
    Atom,
    Molecule,
    SmilesError,
    parse_smiles,
    write_canonical_smiles,
    implicit_hydrogens,
    ELEMENTS,
    ELEMENT_INDEX,
    DUMMY_CLASS,
)
from .reaction import (
    ReactionGraph,
    ReactionPair,
    ReactionError,
    align_reaction,
    graph_to_molecules,
    graph_to_smiles,
    smiles_to_graph,
    encode_pair,
    encode_graph,
    decode_channels,
    MAX_ATOMS,
    N_ATOM_CLASSES,
    N_AROMATIC_CLASSES,
    N_CHARGE_CLASSES,
    N_BOND_CLASSES,
)

__all__ = [
    "Atom",
    "Molecule",
    "SmilesError",
    "parse_smiles",
    "write_canonical_smiles",
    "implicit_hydrogens",
    "ELEMENTS",
    "ELEMENT_INDEX",
    "DUMMY_CLASS",
    "ReactionGraph",
    "ReactionPair",
    "ReactionError",
    "align_reaction",
    "graph_to_molecules",
    "graph_to_smiles",
    "smiles_to_graph",
    "encode_pair",
    "encode_graph",
    "decode_channels",
    "MAX_ATOMS",
    "N_ATOM_CLASSES",
    "N_AROMATIC_CLASSES",
    "N_CHARGE_CLASSES",
    "N_BOND_CLASSES",
]
