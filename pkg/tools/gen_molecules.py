#!/usr/bin/env python3
"""Generate the bundled random-molecule corpus.

Molecules are built as random valence-respecting graphs and serialized by
a deliberately naive SMILES writer (random start atom, random branch
order, no canonicalization) that is independent of the library's
canonical writer, so corpus round-trip tests exercise real variation.

Usage: python3 tools/gen_molecules.py [count] [seed] > corpus.smi
"""

import random
import sys

# independent valence bookkeeping (deliberately not imported from the library)
VALENCE = {
    "C": 4, "N": 3, "O": 2, "F": 1, "Cl": 1, "Br": 1, "I": 1,
    "S": 2, "P": 3, "B": 3, "Si": 4,
}
ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
HEAVY_WEIGHTS = [
    ("C", 50), ("N", 10), ("O", 12), ("F", 3), ("Cl", 4), ("Br", 3),
    ("I", 1), ("S", 4), ("P", 1), ("B", 1), ("Si", 1),
]


class Mol:
    def __init__(self):
        self.elements = []
        self.aromatic = []
        self.charges = []
        self.bonds = {}  # (i, j) sorted -> order

    def add_atom(self, element, aromatic=False, charge=0):
        self.elements.append(element)
        self.aromatic.append(aromatic)
        self.charges.append(charge)
        return len(self.elements) - 1

    def add_bond(self, i, j, order):
        self.bonds[(min(i, j), max(i, j))] = order

    def degree_sum(self, i):
        total = 0
        for (a, b), order in self.bonds.items():
            if i in (a, b):
                total += order
        if self.aromatic[i]:
            total += 1  # aromatic ring membership consumes one slot
        return total

    def free_valence(self, i):
        v = VALENCE[self.elements[i]]
        if self.charges[i] > 0 and self.elements[i] in ("N", "O", "P", "S"):
            v += self.charges[i]
        elif self.charges[i] != 0:
            v -= abs(self.charges[i])
        return v - self.degree_sum(i)

    def neighbors(self, i):
        out = []
        for (a, b), order in self.bonds.items():
            if a == i:
                out.append((b, order))
            elif b == i:
                out.append((a, order))
        return out


def pick_element(rng):
    total = sum(w for _, w in HEAVY_WEIGHTS)
    r = rng.randrange(total)
    for element, w in HEAVY_WEIGHTS:
        r -= w
        if r < 0:
            return element
    return "C"


def make_chain_molecule(rng):
    mol = Mol()
    n = rng.randint(3, 12)
    mol.add_atom(pick_element(rng))
    while len(mol.elements) < n:
        # attach to an existing atom with free valence
        open_atoms = [i for i in range(len(mol.elements)) if mol.free_valence(i) >= 1]
        if not open_atoms:
            break
        anchor = rng.choice(open_atoms)
        element = pick_element(rng)
        j = mol.add_atom(element)
        max_order = min(mol.free_valence(anchor), VALENCE[element], 3)
        order = 1
        if max_order >= 2 and rng.random() < 0.25:
            order = rng.randint(2, max_order)
        mol.add_bond(anchor, j, order)
    # occasional ring closure between unbonded open atoms
    if rng.random() < 0.35:
        open_atoms = [i for i in range(len(mol.elements)) if mol.free_valence(i) >= 1]
        rng.shuffle(open_atoms)
        for a in open_atoms:
            for b in open_atoms:
                if b <= a or (a, b) in mol.bonds:
                    continue
                mol.add_bond(a, b, 1)
                return mol
    return mol


def make_aromatic_molecule(rng):
    mol = Mol()
    ring = []
    for k in range(6):
        element = "N" if (k == 0 and rng.random() < 0.3) else "C"
        ring.append(mol.add_atom(element, aromatic=True))
    for k in range(6):
        mol.add_bond(ring[k], ring[(k + 1) % 6], 1)
    # hang 0-3 substituents off the ring
    for _ in range(rng.randint(0, 3)):
        slots = [i for i in ring if mol.free_valence(i) >= 1]
        if not slots:
            break
        anchor = rng.choice(slots)
        element = pick_element(rng)
        j = mol.add_atom(element)
        mol.add_bond(anchor, j, 1)
    return mol


def make_charged_molecule(rng):
    mol = make_chain_molecule(rng)
    # try to place one +/- on a suitable heteroatom
    idxs = list(range(len(mol.elements)))
    rng.shuffle(idxs)
    for i in idxs:
        if mol.elements[i] == "N" and not mol.aromatic[i]:
            mol.charges[i] = 1
            return mol
        if mol.elements[i] == "O" and mol.degree_sum(i) <= 1:
            mol.charges[i] = -1
            return mol
    return mol


def atom_token(mol, i):
    element = mol.elements[i]
    sym = element.lower() if mol.aromatic[i] else element
    charge = mol.charges[i]
    if charge == 0 and element in ORGANIC:
        return sym
    # bracket atom with an explicit hydrogen count filling the valence
    h = mol.free_valence(i)
    h_part = "" if h == 0 else ("H" if h == 1 else f"H{h}")
    c_part = ""
    if charge:
        c_part = ("+" if charge > 0 else "-") + (
            str(abs(charge)) if abs(charge) > 1 else ""
        )
    return f"[{sym}{h_part}{c_part}]"


BOND_TOKEN = {1: "", 2: "=", 3: "#"}


def write_naive(mol, rng):
    """Random-order DFS SMILES writer with ring-closure digits."""
    n = len(mol.elements)
    start = rng.randrange(n)
    visited = [False] * n
    ring_digit = [1]
    closures = {}  # atom -> list of (digit, order_token)
    tree = {i: [] for i in range(n)}  # dfs tree children (j, order)

    def dfs(i):
        visited[i] = True
        nbrs = mol.neighbors(i)
        rng.shuffle(nbrs)
        for j, order in nbrs:
            if visited[j]:
                continue
            tree[i].append((j, order))
            dfs(j)

    sys.setrecursionlimit(10000)
    dfs(start)
    # back edges become ring closures
    emitted = set()
    order_of = {}
    for (a, b), order in mol.bonds.items():
        order_of[(a, b)] = order
    tree_edges = {(min(i, j), max(i, j)) for i in tree for j, _ in tree[i]}
    for (a, b), order in mol.bonds.items():
        if (a, b) in tree_edges:
            continue
        digit = ring_digit[0]
        ring_digit[0] += 1
        token = BOND_TOKEN[order] if not (mol.aromatic[a] and mol.aromatic[b]) else ""
        closures.setdefault(a, []).append((digit, token))
        closures.setdefault(b, []).append((digit, token))

    def render(i):
        out = atom_token(mol, i)
        for digit, token in closures.get(i, []):
            out += token + (str(digit) if digit < 10 else f"%{digit}")
        kids = tree[i]
        for k, (j, order) in enumerate(kids):
            aromatic_bond = mol.aromatic[i] and mol.aromatic[j]
            token = "" if aromatic_bond else BOND_TOKEN[order]
            body = token + render(j)
            out += body if k == len(kids) - 1 else f"({body})"
        return out

    return render(start)


def main():
    count = int(sys.argv[1]) if len(sys.argv) > 1 else 500
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 20240817
    rng = random.Random(seed)
    seen = set()
    out = []
    while len(out) < count:
        r = rng.random()
        if r < 0.25:
            mol = make_aromatic_molecule(rng)
        elif r < 0.40:
            mol = make_charged_molecule(rng)
        else:
            mol = make_chain_molecule(rng)
        smi = write_naive(mol, rng)
        if smi in seen:
            continue
        seen.add(smi)
        out.append(smi)
    sys.stdout.write("".join(s + "\n" for s in out))


if __name__ == "__main__":
    main()
