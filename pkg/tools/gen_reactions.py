#!/usr/bin/env python3
"""Generate the bundled 50-reaction toy corpus.

Every reaction is hand-designed so that both prediction directions are
learnable by the network. The encoder applies a single adjacency-weighted
mixing round, so two atoms whose (type, aromatic, charge) features and
bond-weighted neighbor sums coincide receive identical latents, and the
atom heads / bilinear bond head then force identical predictions on them.
Near the source endpoint the network sees only the source graph, so each
direction must be decidable from the source side alone: atoms that are
tied on the source side must have identical targets on the opposite side
(checked exhaustively below, per direction).

Practical consequences baked into the templates:
- no chains of four or more equivalent carbons (interior CH2s collide),
- no benzene-like rings (one mixing round cannot separate ring CH atoms);
  1,3-oxazole and 1,3-thiazole rings are used instead, where the O/N/S
  pattern makes every ring atom distinct,
- symmetric twins are allowed only when attached to the same atom
  (gem-dimethyl style) and only when their targets agree, which rules out
  Markovnikov additions in the retro direction (the two methyls of
  2-halopropane are tied but only one keeps its hydrogen count),
- no symmetric reagents with asymmetric fates (Br2 is replaced by the
  interhalogens BrCl / ICl),
- no esters on either side: an ester's linkage oxygen and carbonyl oxygen
  always receive identical one-round signatures (both contribute weight 2
  to the carbon embedding row), so ester-breaking bonds are undecidable,
- at most one leaving atom per reaction (all placeholder atoms share one
  latent class, so two leaving atoms of different elements would conflict);
  most reactions instead retain the byproduct (HX, water, halide ion) as a
  mapped product molecule.

Families cover alkene/alkyne additions, substitutions, heteroaromatic
halogenation, condensations (amides, imines), nitrile dehydrations
(triple bonds), charged acid-base pairs, and identity reactions.

Usage: python3 tools/gen_reactions.py > reactions.txt
"""

import sys

sys.path.insert(0, "src")

from rxnbridge.chem import align_reaction, graph_to_smiles  # noqa: E402


def hydrohalogenation() -> list[str]:
    """Alkene + HX -> 1-haloalkane (anti-Markovnikov: the halogen lands on
    the terminal CH2, whose signature is unique on both sides)."""
    out = []
    for x in ("Cl", "Br", "I"):
        out.append(
            f"[CH2:1]=[CH:2][CH3:3].[{x}H:4]"
            f">>[{x}:4][CH2:1][CH2:2][CH3:3]"
        )
    for x in ("Cl", "Br", "I"):
        out.append(
            f"[CH2:1]=[C:2]([CH3:3])[CH3:4].[{x}H:5]"
            f">>[{x}:5][CH2:1][CH:2]([CH3:3])[CH3:4]"
        )
    return out


def hydration() -> list[str]:
    """Alkene + water -> primary alcohol (anti-Markovnikov, as above)."""
    return [
        "[CH2:1]=[CH:2][CH3:3].[OH2:4]>>[OH:4][CH2:1][CH2:2][CH3:3]",
        "[CH2:1]=[C:2]([CH3:3])[CH3:4].[OH2:5]"
        ">>[OH:5][CH2:1][CH:2]([CH3:3])[CH3:4]",
    ]


def alkyne_hydrohalogenation() -> list[str]:
    """Propyne + HX -> 2-halopropene (Markovnikov; every propyne carbon
    has a distinct signature, unlike a terminal alkene's CH2)."""
    return [
        f"[CH3:1][C:2]#[CH:3].[{x}H:4]>>[CH2:3]=[C:2]([{x}:4])[CH3:1]"
        for x in ("Cl", "Br", "I")
    ]


def amination() -> list[str]:
    """Alkyl halide + amine -> amine. Most variants retain HX as a mapped
    product molecule; two drop the halide to exercise placeholder atoms
    (one leaving atom each, unique product skeletons)."""
    return [
        "[CH3:1][Cl:2].[NH3:3]>>[CH3:1][NH2:3].[ClH:2]",
        "[CH3:1][CH2:2][Br:3].[NH3:4]>>[CH3:1][CH2:2][NH2:4].[BrH:3]",
        "[CH3:1][CH2:2][CH2:3][I:4].[NH3:5]>>[CH3:1][CH2:2][CH2:3][NH2:5]",
        "[CH3:1][CH:2]([Br:3])[CH3:4].[NH3:5]"
        ">>[CH3:1][CH:2]([NH2:5])[CH3:4].[BrH:3]",
        "[CH3:1][CH2:2][I:3].[CH3:4][NH2:5]>>[CH3:1][CH2:2][NH:5][CH3:4]",
        "[CH3:1][I:2].[CH3:3][CH2:4][NH2:5]"
        ">>[CH3:1][NH:5][CH2:4][CH3:3].[IH:2]",
        "[CH3:1][CH2:2][Cl:3].[CH3:4][NH:5][CH3:6]"
        ">>[CH3:1][CH2:2][N:5]([CH3:4])[CH3:6].[ClH:3]",
    ]


def amidation() -> list[str]:
    """Amine + carboxylic acid -> amide + water (water retained)."""
    return [
        "[NH3:1].[OH:2][C:3](=[O:4])[CH3:5]"
        ">>[NH2:1][C:3](=[O:4])[CH3:5].[OH2:2]",
        "[NH3:1].[OH:2][C:3](=[O:4])[CH2:5][CH3:6]"
        ">>[NH2:1][C:3](=[O:4])[CH2:5][CH3:6].[OH2:2]",
        "[CH3:1][NH2:2].[OH:3][C:4](=[O:5])[CH3:6]"
        ">>[CH3:1][NH:2][C:4](=[O:5])[CH3:6].[OH2:3]",
        "[CH3:1][NH2:2].[OH:3][CH:4]=[O:5]>>[CH3:1][NH:2][CH:4]=[O:5].[OH2:3]",
    ]


def acid_base() -> list[str]:
    """Proton transfer; atoms conserved, charges change. Acid/amine
    pairings are disjoint from the amidation family so no two reactions
    share a reactant graph."""
    return [
        "[CH3:1][C:2](=[O:3])[OH:4].[CH3:5][NH:6][CH3:7]"
        ">>[CH3:1][C:2](=[O:3])[O-:4].[CH3:5][NH2+:6][CH3:7]",
        "[OH:1][CH:2]=[O:3].[NH3:4]>>[O-:1][CH:2]=[O:3].[NH4+:4]",
        "[ClH:1].[NH3:2]>>[Cl-:1].[NH4+:2]",
        "[CH3:1][CH2:2][C:3](=[O:4])[OH:5].[CH3:6][NH2:7]"
        ">>[CH3:1][CH2:2][C:3](=[O:4])[O-:5].[CH3:6][NH3+:7]",
    ]


def etherification() -> list[str]:
    """Alkoxide/thiolate + alkyl halide -> ether; the halide ion is
    retained so the retro direction can recover its identity."""
    return [
        "[CH3:1][O-:2].[CH3:3][CH2:4][I:5]>>[CH3:1][O:2][CH2:4][CH3:3].[I-:5]",
        "[CH3:1][S-:2].[CH3:3][CH2:4][Br:5]"
        ">>[CH3:1][S:2][CH2:4][CH3:3].[Br-:5]",
        "[CH3:1][O-:2].[CH3:3][CH2:4][CH2:5][Br:6]"
        ">>[CH3:1][O:2][CH2:5][CH2:4][CH3:3].[Br-:6]",
        "[CH3:1][CH2:2][S-:3].[CH3:4][I:5]>>[CH3:1][CH2:2][S:3][CH3:4].[I-:5]",
    ]


def heteroaromatic_halogenation() -> list[str]:
    """1,3-oxazole / 1,3-thiazole + interhalogen -> halo heterocycle + HX.
    BrCl / ICl keep the two halogen atoms distinguishable (Br2 would tie
    them while giving them different fates)."""
    out = []
    for het in ("o", "s"):
        for x in ("Br", "I"):
            out.append(
                f"[cH:1]1[{het}:2][cH:3][n:4][cH:5]1.[{x}:6][Cl:7]"
                f">>[c:1]1([{x}:6])[{het}:2][cH:3][n:4][cH:5]1.[ClH:7]"
            )
    out.append(
        "[CH3:8][c:1]1[o:2][cH:3][n:4][cH:5]1.[Br:6][Cl:7]"
        ">>[CH3:8][c:1]1[o:2][c:3]([Br:6])[n:4][cH:5]1.[ClH:7]"
    )
    return out


def nitrile_dehydration() -> list[str]:
    """Primary amide -> nitrile + water (water retained)."""
    return [
        "[CH3:1][C:2](=[O:3])[NH2:4]>>[CH3:1][C:2]#[N:4].[OH2:3]",
        "[CH3:1][CH2:2][C:3](=[O:4])[NH2:5]>>[CH3:1][CH2:2][C:3]#[N:5].[OH2:4]",
        "[NH2:1][CH:2]=[O:3]>>[CH:2]#[N:1].[OH2:3]",
    ]


def cyanide_substitution() -> list[str]:
    """Alkyl halide + cyanide -> nitrile + halide ion."""
    return [
        "[CH3:1][Br:2].[C-:3]#[N:4]>>[CH3:1][C:3]#[N:4].[Br-:2]",
        "[CH3:1][CH2:2][I:3].[C-:4]#[N:5]>>[CH3:1][CH2:2][C:4]#[N:5].[I-:3]",
        "[CH3:1][CH:2]([Br:3])[CH3:4].[C-:5]#[N:6]"
        ">>[CH3:1][CH:2]([C:5]#[N:6])[CH3:4].[Br-:3]",
    ]


def thiol_ene() -> list[str]:
    """Thiol + alkene -> thioether (anti-Markovnikov)."""
    return [
        "[CH3:1][SH:2].[CH2:3]=[CH:4][CH3:5]"
        ">>[CH3:1][S:2][CH2:3][CH2:4][CH3:5]",
        "[CH3:1][SH:2].[CH2:3]=[C:4]([CH3:5])[CH3:6]"
        ">>[CH3:1][S:2][CH2:3][CH:4]([CH3:5])[CH3:6]",
    ]


def imine_condensation() -> list[str]:
    """Amine + aldehyde -> imine + water (water retained)."""
    return [
        "[CH3:1][NH2:2].[CH2:3]=[O:4]>>[CH3:1][N:2]=[CH2:3].[OH2:4]",
        "[NH3:1].[CH3:2][CH:3]=[O:4]>>[NH:1]=[CH:3][CH3:2].[OH2:4]",
    ]


def identity() -> list[str]:
    """Fixed points exercising plain, charged, and aromatic graphs."""
    return [
        "[CH4:1]>>[CH4:1]",
        "[CH3:1][OH:2]>>[CH3:1][OH:2]",
        "[NH4+:1].[I-:2]>>[NH4+:1].[I-:2]",
        "[cH:1]1[o:2][cH:3][n:4][cH:5]1>>[cH:1]1[o:2][cH:3][n:4][cH:5]1",
        "[CH3:1][C:2]#[N:3]>>[CH3:1][C:2]#[N:3]",
    ]


FAMILIES = [
    hydrohalogenation,
    hydration,
    alkyne_hydrohalogenation,
    amination,
    amidation,
    acid_base,
    etherification,
    heteroaromatic_halogenation,
    nitrile_dehydration,
    cyanide_substitution,
    thiol_ene,
    imine_condensation,
    identity,
]


def _side_signature(g, i):
    """Latent-class signature of atom i after the network's mixing round
    z_msg = (R + 0.5 I) z_in: the exact coefficient the sum places on each
    embedding-table row (self contributes 0.5, each neighbor its bond
    class). Two atoms with equal signatures are indistinguishable to the
    network when this graph is all it sees."""
    rows = {"atom": {}, "arom": {}, "chg": {}}

    def add(key, val, coeff):
        rows[key][val] = rows[key].get(val, 0.0) + coeff

    def add_atom(j, coeff):
        add("atom", int(g.atom_type[j]), coeff)
        add("arom", int(g.aromatic[j]), coeff)
        add("chg", int(g.charge[j]), coeff)

    add_atom(i, 0.5)
    n = g.atom_type.shape[0]
    for j in range(n):
        b = int(g.bond[i, j])
        if b:
            add_atom(j, float(b))
    return tuple(tuple(sorted(rows[k].items())) for k in ("atom", "arom", "chg"))


def check_learnable(pair) -> list[str]:
    """Per direction, the target side must be a function of source-side
    signatures: source-tied atoms must share atom-level targets and
    source-tied atom pairs must share bond targets. (Near the source
    endpoint of the bridge the network sees only the source graph, so
    nothing else can break such ties.)"""
    n = pair.reactants.atom_type.shape[0]
    problems = []
    directions = (
        ("forward", pair.reactants, pair.product),
        ("retro", pair.product, pair.reactants),
    )
    for label, src, tgt in directions:
        sigs = [_side_signature(src, i) for i in range(n)]
        seen_atom = {}
        for i in range(n):
            val = (int(tgt.atom_type[i]), int(tgt.aromatic[i]), int(tgt.charge[i]))
            if sigs[i] in seen_atom and seen_atom[sigs[i]] != val:
                problems.append(
                    f"{label}: atom {i} target {val} conflicts with a "
                    f"source-tied atom of target {seen_atom[sigs[i]]}"
                )
            seen_atom.setdefault(sigs[i], val)
        seen_bond = {}
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                key = (sigs[i], sigs[j])
                b = int(tgt.bond[i, j])
                if key in seen_bond and seen_bond[key] != b:
                    problems.append(
                        f"{label}: bond({i},{j})={b} conflicts with a "
                        f"source-tied pair of target {seen_bond[key]}"
                    )
                seen_bond.setdefault(key, b)
    return problems


def main() -> None:
    reactions = []
    for family in FAMILIES:
        reactions.extend(family())
    assert len(reactions) == 50, f"expected 50 reactions, got {len(reactions)}"
    assert len(set(reactions)) == 50, "duplicate reaction strings"

    # both prediction directions must be unambiguous: no two reactions may
    # share a source graph (placeholder atoms erase leaving-group identity,
    # so the count of placeholders is part of the graph key)
    seen_src: dict[tuple, str] = {}
    for rxn in reactions:
        pair = align_reaction(rxn)  # raises on invalid input
        assert pair.n_atoms <= 20, f"too many atoms: {rxn}"
        problems = check_learnable(pair)
        assert not problems, f"{rxn}\n  " + "\n  ".join(problems)
        for g in (pair.reactants, pair.product):
            key = (g.side, graph_to_smiles(g), int((g.atom_type == 73).sum()))
            assert key not in seen_src, (
                f"ambiguous: {rxn} shares a {g.side} graph with "
                f"{seen_src[key]}"
            )
            seen_src[key] = rxn

    for rxn in reactions:
        print(rxn)


if __name__ == "__main__":
    main()
