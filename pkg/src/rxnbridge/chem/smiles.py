"""SMILES parsing, implicit-hydrogen resolution and canonical writing.

No aromaticity perception is performed: aromatic flags are trusted from
lowercase input atoms, and aromatic bonds are stored as single bonds with
both endpoints flagged aromatic. Stereochemistry and isotopes are parsed
and discarded.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

# 72-symbol element vocabulary; class indices are 1-based, dummy is 73.
ELEMENTS = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Na",
    "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca", "Sc",
    "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga",
    "Ge", "As", "Se", "Br", "Rb", "Sr", "Y", "Zr", "Mo", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Sm", "Eu", "Dy", "Yb",
    "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi",
]
ELEMENT_INDEX = {sym: i + 1 for i, sym in enumerate(ELEMENTS)}
DUMMY_CLASS = 73

ORGANIC_SUBSET = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_SYMBOLS = {"b", "c", "n", "o", "p", "s", "se", "as"}

# Allowed valences for implicit-H resolution. Elements not listed are
# always written as bracket atoms.
VALENCES = {
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
    "S": (2, 4, 6),
    "P": (3, 5),
    "B": (3,),
}
# Cations on lone-pair donors gain a bond slot; everything else loses one
# per unit of charge magnitude.
CHARGE_DONORS = {"N", "O", "P", "S"}

BOND_SINGLE = 1
BOND_DOUBLE = 2
BOND_TRIPLE = 3


class SmilesError(ValueError):
    """Raised on malformed SMILES; carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: int | None = None
    map_number: int | None = None


@dataclass
class Molecule:
    atoms: list[Atom] = field(default_factory=list)
    bonds: list[tuple[int, int, int]] = field(default_factory=list)

    def neighbor_table(self) -> list[list[tuple[int, int]]]:
        nbr: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for i, j, order in self.bonds:
            nbr[i].append((j, order))
            nbr[j].append((i, order))
        return nbr

    def permuted(self, perm: list[int]) -> "Molecule":
        """Return the molecule with atom i moved to position perm[i]."""
        n = len(self.atoms)
        atoms = [None] * n
        for i, a in enumerate(self.atoms):
            atoms[perm[i]] = a
        bonds = []
        for i, j, order in self.bonds:
            a, b = perm[i], perm[j]
            bonds.append((min(a, b), max(a, b), order))
        return Molecule(list(atoms), sorted(bonds))

    def labeled_graph_key(self):
        """Order-independent identity of the labeled graph (maps ignored)."""
        inv = [
            (a.element, a.aromatic, a.formal_charge,
             -1 if a.explicit_h is None else a.explicit_h)
            for a in self.atoms
        ]
        return (
            sorted(inv),
            sorted(
                tuple(sorted((inv[i], inv[j]))) + (order,)
                for i, j, order in self.bonds
            ),
        )


def allowed_valences(element: str, charge: int) -> tuple[int, ...] | None:
    base = VALENCES.get(element)
    if base is None:
        return None
    if charge > 0:
        shift = charge if element in CHARGE_DONORS else -charge
    else:
        shift = charge
    vals = tuple(v + shift for v in base if v + shift >= 0)
    return vals or None


def implicit_hydrogens(mol: Molecule, idx: int) -> int:
    """Hydrogen count for atom idx: explicit if bracketed, else by valence."""
    atom = mol.atoms[idx]
    if atom.explicit_h is not None:
        return atom.explicit_h
    vals = allowed_valences(atom.element, atom.formal_charge)
    if vals is None:
        return 0
    order_sum = sum(order for i, j, order in mol.bonds if idx in (i, j))
    # Aromatic atoms carry one bond of the delocalized system implicitly.
    if atom.aromatic:
        order_sum += 1
    for v in sorted(vals):
        if v >= order_sum:
            return v - order_sum
    return 0


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _parse_bracket_atom(text: str, start: int) -> tuple[Atom, int]:
    """Parse a [...] atom starting at the '['; returns (atom, next offset)."""
    pos = start + 1
    n = len(text)

    def fail(msg, at=None):
        raise SmilesError(msg, start if at is None else at)

    # optional isotope, accepted and discarded
    while pos < n and text[pos].isdigit():
        pos += 1
    if pos >= n:
        fail("unterminated bracket atom")
    # element symbol (two-letter match first)
    aromatic = False
    element = None
    for ln in (2, 1):
        cand = text[pos : pos + ln]
        if cand in ELEMENT_INDEX:
            element = cand
            break
        if cand in AROMATIC_SYMBOLS:
            element = cand.capitalize()
            aromatic = True
            break
    if element is None and pos < n and text[pos].isupper():
        # syntactically valid symbol outside the vocabulary; callers that
        # need the fixed element set reject it with a clearer reason
        element = text[pos]
        if pos + 1 < n and text[pos + 1].islower():
            element += text[pos + 1]
    if element is None:
        fail(f"unknown element at {text[pos:pos+2]!r}", pos)
    pos += len(element)
    # chirality, accepted and discarded
    while pos < n and text[pos] == "@":
        pos += 1
    if pos < n and text[pos : pos + 2] in ("TH", "AL", "SP"):
        pos += 2
        while pos < n and text[pos].isdigit():
            pos += 1
    # explicit hydrogens
    explicit_h = 0
    if pos < n and text[pos] == "H":
        pos += 1
        count = ""
        while pos < n and text[pos].isdigit():
            count += text[pos]
            pos += 1
        explicit_h = int(count) if count else 1
    # formal charge
    charge = 0
    if pos < n and text[pos] in "+-":
        sign = 1 if text[pos] == "+" else -1
        symbol = text[pos]
        pos += 1
        count = ""
        while pos < n and text[pos].isdigit():
            count += text[pos]
            pos += 1
        if count:
            charge = sign * int(count)
        else:
            charge = sign
            while pos < n and text[pos] == symbol:
                charge += sign
                pos += 1
    if not -6 <= charge <= 6:
        fail(f"formal charge {charge} outside [-6, 6]")
    # atom map
    map_number = None
    if pos < n and text[pos] == ":":
        pos += 1
        count = ""
        while pos < n and text[pos].isdigit():
            count += text[pos]
            pos += 1
        if not count:
            fail("missing atom-map digits", pos)
        map_number = int(count)
    if pos >= n or text[pos] != "]":
        fail("unterminated bracket atom", pos if pos < n else start)
    atom = Atom(element, aromatic, charge, explicit_h, map_number)
    return atom, pos + 1


def parse_smiles(text: str) -> Molecule:
    """Parse a SMILES string into a Molecule.

    Supports organic-subset atoms, bracket atoms, bonds - = # :, ring
    closures (including %nn), branches and the '.' separator. Raises
    SmilesError with a byte offset on malformed input.
    """
    mol = Molecule()
    pos = 0
    n = len(text)
    prev: int | None = None
    pending_bond: int | None = None
    stack: list[int | None] = []
    ring: dict[int, tuple[int, int | None, int]] = {}

    def add_bond(i: int, j: int, order: int, at: int):
        if i == j:
            raise SmilesError("self-bond", at)
        a, b = min(i, j), max(i, j)
        if any(x == a and y == b for x, y, _ in mol.bonds):
            raise SmilesError("duplicate bond", at)
        mol.bonds.append((a, b, order))

    def attach(idx: int, at: int):
        nonlocal prev, pending_bond
        if prev is not None:
            add_bond(prev, idx, BOND_SINGLE if pending_bond is None else pending_bond, at)
        prev = idx
        pending_bond = None

    def ring_closure(num: int, at: int):
        nonlocal pending_bond
        if prev is None:
            raise SmilesError("ring closure before any atom", at)
        if num in ring:
            other, other_bond, _ = ring.pop(num)
            order = pending_bond if pending_bond is not None else other_bond
            if (
                pending_bond is not None
                and other_bond is not None
                and pending_bond != other_bond
            ):
                raise SmilesError("conflicting ring-closure bond orders", at)
            add_bond(other, prev, BOND_SINGLE if order is None else order, at)
        else:
            ring[num] = (prev, pending_bond, at)
        pending_bond = None

    while pos < n:
        ch = text[pos]
        if ch == "[":
            atom, pos2 = _parse_bracket_atom(text, pos)
            mol.atoms.append(atom)
            attach(len(mol.atoms) - 1, pos)
            pos = pos2
        elif ch == "(":
            if prev is None:
                raise SmilesError("branch before any atom", pos)
            stack.append(prev)
            pos += 1
        elif ch == ")":
            if not stack:
                raise SmilesError("unbalanced parentheses", pos)
            prev = stack.pop()
            pos += 1
        elif ch in "-=#:":
            pending_bond = {"-": 1, "=": 2, "#": 3, ":": 1}[ch]
            pos += 1
        elif ch in "/\\":
            pending_bond = BOND_SINGLE  # stereo bond, direction discarded
            pos += 1
        elif ch == ".":
            if pending_bond is not None:
                raise SmilesError("bond before component separator", pos)
            prev = None
            pos += 1
        elif ch.isdigit():
            ring_closure(int(ch), pos)
            pos += 1
        elif ch == "%":
            if pos + 2 >= n or not text[pos + 1 : pos + 3].isdigit():
                raise SmilesError("malformed %nn ring closure", pos)
            ring_closure(int(text[pos + 1 : pos + 3]), pos)
            pos += 3
        else:
            matched = None
            for ln in (2, 1):
                cand = text[pos : pos + ln]
                if cand in ORGANIC_SUBSET:
                    matched = Atom(cand)
                    break
                if cand in ("b", "c", "n", "o", "p", "s"):
                    matched = Atom(cand.upper(), aromatic=True)
                    break
            if matched is None:
                raise SmilesError(f"unexpected character {ch!r}", pos)
            mol.atoms.append(matched)
            attach(len(mol.atoms) - 1, pos)
            pos += len(matched.element)

    if stack:
        raise SmilesError("unbalanced parentheses", n)
    if ring:
        num, (_, _, at) = next(iter(ring.items()))
        raise SmilesError(f"unmatched ring closure {num}", at)
    if pending_bond is not None:
        raise SmilesError("dangling bond symbol", n)
    if not mol.atoms:
        raise SmilesError("empty SMILES", 0)
    return mol


# ---------------------------------------------------------------------------
# Canonicalization and writing
# ---------------------------------------------------------------------------

_CANON_LEAF_BUDGET = 5000


def _refine(colors: list[int], nbr) -> list[int]:
    n = len(colors)
    while True:
        keys = [
            (colors[i], tuple(sorted((order, colors[j]) for j, order in nbr[i])))
            for i in range(n)
        ]
        order_of = {k: r for r, k in enumerate(sorted(set(keys)))}
        new = [order_of[k] for k in keys]
        if len(set(new)) == len(set(colors)):
            return new
        colors = new


def _initial_colors(mol: Molecule, use_maps: bool) -> list[int]:
    nbr = mol.neighbor_table()
    keys = []
    for i, a in enumerate(mol.atoms):
        key = (
            a.element,
            a.formal_charge,
            a.aromatic,
            -1 if a.explicit_h is None else a.explicit_h,
            len(nbr[i]),
            tuple(sorted(order for _, order in nbr[i])),
        )
        if use_maps:
            key += (a.map_number or 0,)
        keys.append(key)
    order_of = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [order_of[k] for k in keys]


def _discrete_orders(mol: Molecule, use_maps: bool):
    """Yield discrete canonical labelings via individualization-refinement."""
    nbr = mol.neighbor_table()
    n = len(mol.atoms)
    budget = [_CANON_LEAF_BUDGET]

    def descend(colors):
        if budget[0] <= 0:
            return
        if len(set(colors)) == n:
            budget[0] -= 1
            yield colors
            return
        counts: dict[int, int] = {}
        for c in colors:
            counts[c] = counts.get(c, 0) + 1
        target = min(c for c, k in counts.items() if k > 1)
        members = [i for i in range(n) if colors[i] == target]
        for i in members:
            child = list(colors)
            child[i] = -1  # individualize: strictly smallest color
            yield from descend(_refine(child, nbr))

    yield from descend(_refine(_initial_colors(mol, use_maps), nbr))


def _atom_token(mol: Molecule, idx: int, include_maps: bool) -> str:
    a = mol.atoms[idx]
    sym = a.element
    needs_bracket = (
        sym not in ORGANIC_SUBSET
        or a.formal_charge != 0
        or a.explicit_h is not None
        or (include_maps and a.map_number is not None)
        or (a.aromatic and sym.lower() not in AROMATIC_SYMBOLS)
    )
    shown = sym.lower() if a.aromatic and sym.lower() in AROMATIC_SYMBOLS else sym
    if not needs_bracket:
        return shown
    parts = ["[", shown]
    # decoded atoms carry no explicit H; show the valence-derived count so
    # the bracket form re-parses to the same hydrogen count
    n_h = a.explicit_h if a.explicit_h is not None else implicit_hydrogens(mol, idx)
    if n_h == 1:
        parts.append("H")
    elif n_h > 1:
        parts.append(f"H{n_h}")
    c = a.formal_charge
    if c == 1:
        parts.append("+")
    elif c == -1:
        parts.append("-")
    elif c > 1:
        parts.append(f"+{c}")
    elif c < -1:
        parts.append(f"-{-c}")
    if include_maps and a.map_number is not None:
        parts.append(f":{a.map_number}")
    parts.append("]")
    return "".join(parts)


_BOND_TOKEN = {1: "", 2: "=", 3: "#"}


def _render_component(mol: Molecule, ranks: list[int], atoms: list[int],
                      include_maps: bool) -> str:
    """Write one connected component, neighbors visited in rank order."""
    nbr = mol.neighbor_table()
    root = min(atoms, key=lambda i: ranks[i])
    visited: set[int] = set()
    tree: dict[int, list[tuple[int, int]]] = {i: [] for i in atoms}
    ring_bonds: list[tuple[int, int, int]] = []

    def dfs(cur: int, parent: int):
        visited.add(cur)
        for j, order in sorted(nbr[cur], key=lambda t: ranks[t[0]]):
            if j == parent:
                continue
            if j in visited:
                if not any(
                    (x, y) in ((cur, j), (j, cur)) for x, y, _ in ring_bonds
                ):
                    ring_bonds.append((cur, j, order))
            else:
                tree[cur].append((j, order))
                dfs(j, cur)

    dfs(root, -1)

    # assign ring-closure digits in the order the opening atom is written
    ring_open: dict[int, list[tuple[int, int, int]]] = {}
    write_order: list[int] = []

    def collect(i):
        write_order.append(i)
        for j, _ in tree[i]:
            collect(j)

    collect(root)
    pos_of = {a: k for k, a in enumerate(write_order)}
    closures: dict[int, list[tuple[int, int, int]]] = {i: [] for i in atoms}
    digit_pool: list[int] = []
    next_digit = [1]
    ring_num: dict[tuple[int, int], int] = {}
    for x, y, order in sorted(
        ring_bonds, key=lambda b: (min(pos_of[b[0]], pos_of[b[1]]),
                                   max(pos_of[b[0]], pos_of[b[1]]))
    ):
        first, second = (x, y) if pos_of[x] < pos_of[y] else (y, x)
        closures[first].append((second, order, 1))
        closures[second].append((first, order, 0))

    out: list[str] = []
    active: dict[tuple[int, int], int] = {}

    def digit_str(d: int) -> str:
        return str(d) if d < 10 else f"%{d:02d}"

    def emit(i, bond_from_parent):
        out.append(_BOND_TOKEN[bond_from_parent] if bond_from_parent else "")
        out.append(_atom_token(mol, i, include_maps))
        for other, order, opening in sorted(
            closures[i], key=lambda t: pos_of[t[0]]
        ):
            key = (min(i, other), max(i, other))
            if opening:
                if digit_pool:
                    d = digit_pool.pop(0)
                else:
                    d = next_digit[0]
                    next_digit[0] += 1
                active[key] = d
                out.append(_BOND_TOKEN[order])
                out.append(digit_str(d))
            else:
                d = active.pop(key)
                digit_pool.append(d)
                digit_pool.sort()
                out.append(digit_str(d))
        kids = tree[i]
        for k, (j, order) in enumerate(kids):
            last = k == len(kids) - 1
            if not last:
                out.append("(")
            emit(j, order)
            if not last:
                out.append(")")

    emit(root, 0)
    return "".join(out)


def _render(mol: Molecule, ranks: list[int], include_maps: bool) -> str:
    n = len(mol.atoms)
    nbr = mol.neighbor_table()
    seen = [False] * n
    comps = []
    for start in range(n):
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
        comps.append(comp)
    pieces = sorted(_render_component(mol, ranks, c, include_maps) for c in comps)
    return ".".join(pieces)


def write_canonical_smiles(mol: Molecule, include_maps: bool = False) -> str:
    """Deterministic, atom-order-independent SMILES for a molecule."""
    if not mol.atoms:
        return ""
    best: str | None = None
    for colors in _discrete_orders(mol, include_maps):
        s = _render(mol, colors, include_maps)
        if best is None or s < best:
            best = s
    assert best is not None
    return best
