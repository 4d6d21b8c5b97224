"""Atom-mapped reaction alignment and the four-channel graph encoding.

Atoms are ordered by ascending atom-map number across both sides of a
reaction. Reactant atoms missing from the product become dummy atoms
(class 73) with zero bond rows on the product side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .smiles import (
    DUMMY_CLASS,
    ELEMENT_INDEX,
    ELEMENTS,
    Atom,
    Molecule,
    SmilesError,
    parse_smiles,
)

MAX_ATOMS = 80

N_ATOM_CLASSES = 73
N_AROMATIC_CLASSES = 2
N_CHARGE_CLASSES = 13
N_BOND_CLASSES = 4

CHARGE_OFFSET = 6


class ReactionError(ValueError):
    """Alignment failure; `code` is a stable machine-readable reason."""

    def __init__(self, message: str, code: str = "invalid"):
        super().__init__(message)
        self.code = code


@dataclass
class ReactionGraph:
    """One side of an aligned reaction over a shared atom index set.

    atom_type is 1-based (1..72 elements, 73 dummy); charge holds class
    indices 0..12 (value + 6); bond is a symmetric NxN class matrix.
    """

    atom_type: np.ndarray
    aromatic: np.ndarray
    charge: np.ndarray
    bond: np.ndarray
    side: str  # "reactant" or "product"

    @property
    def n_atoms(self) -> int:
        return int(self.atom_type.shape[0])

    def validate(self) -> None:
        n = self.n_atoms
        if self.bond.shape != (n, n):
            raise ReactionError("bond matrix shape mismatch")
        if not np.array_equal(self.bond, self.bond.T):
            raise ReactionError("bond matrix not symmetric")
        if np.any(np.diag(self.bond) != 0):
            raise ReactionError("bond matrix has nonzero diagonal")
        if np.any((self.atom_type < 1) | (self.atom_type > DUMMY_CLASS)):
            raise ReactionError("atom_type out of range")
        if self.side == "reactant" and np.any(self.atom_type == DUMMY_CLASS):
            raise ReactionError("dummy atom on reactant side")
        if np.any((self.charge < 0) | (self.charge >= N_CHARGE_CLASSES)):
            raise ReactionError("charge class out of range")
        dummies = self.atom_type == DUMMY_CLASS
        if np.any(self.bond[dummies] != 0):
            raise ReactionError("dummy atom with bonds")

    def copy(self) -> "ReactionGraph":
        return ReactionGraph(
            self.atom_type.copy(),
            self.aromatic.copy(),
            self.charge.copy(),
            self.bond.copy(),
            self.side,
        )


@dataclass
class ReactionPair:
    reactants: ReactionGraph
    product: ReactionGraph

    @property
    def n_atoms(self) -> int:
        return self.reactants.n_atoms


def _molecule_to_side(
    mol: Molecule, map_to_pos: dict[int, int], n: int, side: str
) -> ReactionGraph:
    atom_type = np.full(n, DUMMY_CLASS, dtype=np.int64)
    aromatic = np.zeros(n, dtype=np.int64)
    charge = np.full(n, CHARGE_OFFSET, dtype=np.int64)
    bond = np.zeros((n, n), dtype=np.int64)
    for k, atom in enumerate(mol.atoms):
        pos = map_to_pos[atom.map_number]
        atom_type[pos] = ELEMENT_INDEX[atom.element]
        aromatic[pos] = int(atom.aromatic)
        charge[pos] = atom.formal_charge + CHARGE_OFFSET
    for i, j, order in mol.bonds:
        a = map_to_pos[mol.atoms[i].map_number]
        b = map_to_pos[mol.atoms[j].map_number]
        bond[a, b] = order
        bond[b, a] = order
    return ReactionGraph(atom_type, aromatic, charge, bond, side)


def _checked_parse(smiles: str, side: str) -> Molecule:
    try:
        mol = parse_smiles(smiles)
    except SmilesError as e:
        raise ReactionError(f"{side} parse error: {e}", code="parse") from e
    maps = []
    for k, atom in enumerate(mol.atoms):
        if atom.element not in ELEMENT_INDEX:
            raise ReactionError(
                f"{side}: element {atom.element} not in vocabulary", code="element"
            )
        if atom.map_number is None:
            raise ReactionError(
                f"{side}: unmapped atom at index {k}", code="unmapped-atom"
            )
        maps.append(atom.map_number)
    if len(set(maps)) != len(maps):
        raise ReactionError(
            f"{side}: duplicate atom-map numbers", code="duplicate-map"
        )
    return mol


def split_reaction_smiles(rxn_smiles: str) -> tuple[str, str]:
    """Split 'reactants>reagents?>product'; the reagent field is discarded."""
    parts = rxn_smiles.strip().split(">")
    if len(parts) == 3:
        return parts[0], parts[2]
    raise ReactionError("expected 'reactants>>product' form", code="format")


def align_reaction(rxn_smiles: str) -> ReactionPair:
    """Align an atom-mapped reaction SMILES into a paired graph."""
    reactant_smiles, product_smiles = split_reaction_smiles(rxn_smiles)
    r_mol = _checked_parse(reactant_smiles, "reactants")
    p_mol = _checked_parse(product_smiles, "product")

    r_maps = {a.map_number for a in r_mol.atoms}
    p_maps = {a.map_number for a in p_mol.atoms}
    missing = p_maps - r_maps
    if missing:
        raise ReactionError(
            f"product atom maps absent from reactants: {sorted(missing)}",
            code="unmatched-map",
        )
    for p_atom in p_mol.atoms:
        r_atom = next(a for a in r_mol.atoms if a.map_number == p_atom.map_number)
        if r_atom.element != p_atom.element:
            raise ReactionError(
                f"element mismatch at atom map {p_atom.map_number}",
                code="map-element-mismatch",
            )

    n = len(r_mol.atoms)
    if n > MAX_ATOMS:
        raise ReactionError(
            f"reaction has {n} atoms, limit is {MAX_ATOMS}", code="too-many-atoms"
        )
    map_to_pos = {m: i for i, m in enumerate(sorted(r_maps))}
    reactants = _molecule_to_side(r_mol, map_to_pos, n, "reactant")
    product = _molecule_to_side(p_mol, map_to_pos, n, "product")
    reactants.validate()
    product.validate()
    return ReactionPair(reactants, product)


def graph_to_molecules(g: ReactionGraph) -> list[Molecule]:
    """Decode a graph into molecules, one per connected component.

    Dummy atoms are dropped. Atoms whose bond-order sum exceeds every
    allowed valence are emitted as bracket atoms with explicit_h 0.
    """
    from .smiles import allowed_valences

    keep = [i for i in range(g.n_atoms) if g.atom_type[i] != DUMMY_CLASS]
    if not keep:
        return []
    remap = {old: new for new, old in enumerate(keep)}
    atoms: list[Atom] = []
    for i in keep:
        atoms.append(
            Atom(
                element=ELEMENTS[int(g.atom_type[i]) - 1],
                aromatic=bool(g.aromatic[i]),
                formal_charge=int(g.charge[i]) - CHARGE_OFFSET,
                explicit_h=None,
                map_number=None,
            )
        )
    bonds = []
    for a_idx, i in enumerate(keep):
        for j in keep:
            if j <= i:
                continue
            order = int(g.bond[i, j])
            if order:
                bonds.append((remap[i], remap[j], order))
    mol = Molecule(atoms, bonds)

    # valence overflow: force explicit_h 0 via a bracket atom
    order_sum = [0] * len(atoms)
    for i, j, order in bonds:
        order_sum[i] += order
        order_sum[j] += order
    for idx, atom in enumerate(atoms):
        vals = allowed_valences(atom.element, atom.formal_charge)
        s = order_sum[idx] + (1 if atom.aromatic else 0)
        if vals is None or s > max(vals):
            atoms[idx] = Atom(
                atom.element, atom.aromatic, atom.formal_charge, 0, None
            )

    # split into connected components
    nbr = mol.neighbor_table()
    seen = [False] * len(atoms)
    out: list[Molecule] = []
    for start in range(len(atoms)):
        if seen[start]:
            continue
        comp = []
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j, _ in nbr[i]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        comp.sort()
        sub_remap = {old: new for new, old in enumerate(comp)}
        sub_atoms = [atoms[i] for i in comp]
        sub_bonds = [
            (sub_remap[i], sub_remap[j], order)
            for i, j, order in bonds
            if i in sub_remap and j in sub_remap
        ]
        out.append(Molecule(sub_atoms, sorted(sub_bonds)))
    return out


def smiles_to_graph(smiles: str, side: str) -> ReactionGraph:
    """Build a graph from plain (unmapped) dot-separated molecule SMILES,
    atoms kept in parse order. Used for prediction inputs without an
    aligned counterpart."""
    try:
        mol = parse_smiles(smiles)
    except SmilesError as e:
        raise ReactionError(f"parse error: {e}", code="parse") from e
    n = len(mol.atoms)
    if n > MAX_ATOMS:
        raise ReactionError(f"{n} atoms, limit is {MAX_ATOMS}", code="too-many-atoms")
    atom_type = np.zeros(n, dtype=np.int64)
    aromatic = np.zeros(n, dtype=np.int64)
    charge = np.full(n, CHARGE_OFFSET, dtype=np.int64)
    bond = np.zeros((n, n), dtype=np.int64)
    for i, atom in enumerate(mol.atoms):
        if atom.element not in ELEMENT_INDEX:
            raise ReactionError(
                f"element {atom.element} not in vocabulary", code="element"
            )
        atom_type[i] = ELEMENT_INDEX[atom.element]
        aromatic[i] = int(atom.aromatic)
        charge[i] = atom.formal_charge + CHARGE_OFFSET
    for i, j, order in mol.bonds:
        bond[i, j] = order
        bond[j, i] = order
    g = ReactionGraph(atom_type, aromatic, charge, bond, side)
    g.validate()
    return g


def graph_to_smiles(g: ReactionGraph) -> str:
    """Canonical dot-joined SMILES for all non-dummy components of a graph."""
    from .smiles import write_canonical_smiles

    return ".".join(sorted(write_canonical_smiles(m) for m in graph_to_molecules(g)))


def encode_pair(pair: ReactionPair):
    """Zero-based channel tensors for (reactants, product)."""
    return encode_graph(pair.reactants), encode_graph(pair.product)


def encode_graph(g: ReactionGraph) -> dict[str, np.ndarray]:
    return {
        "atom": g.atom_type - 1,
        "aromatic": g.aromatic.copy(),
        "charge": g.charge.copy(),
        "bond": g.bond.copy(),
    }


def decode_channels(channels: dict[str, np.ndarray], side: str) -> ReactionGraph:
    return ReactionGraph(
        atom_type=np.asarray(channels["atom"], dtype=np.int64) + 1,
        aromatic=np.asarray(channels["aromatic"], dtype=np.int64),
        charge=np.asarray(channels["charge"], dtype=np.int64),
        bond=np.asarray(channels["bond"], dtype=np.int64),
        side=side,
    )
