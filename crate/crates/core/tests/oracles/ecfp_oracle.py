#!/usr/bin/env python3
"""Independent reference for the circular fingerprint frozen in tests/fingerprint.rs.

Graph construction comes from RDKit (sanitize=False, so no hydrogens or
kekulization are added); hashing uses the mmh3 package. Prints, per molecule,
the number of distinct identifiers and the set-bit count and indices at
radius 2 with 2048 bits.
"""

import struct
import sys

import mmh3
from rdkit import Chem

SEED = 0x9747B28C
CODES = {
    Chem.BondType.SINGLE: 1,
    Chem.BondType.DOUBLE: 2,
    Chem.BondType.TRIPLE: 3,
    Chem.BondType.AROMATIC: 4,
}


def h(words):
    return mmh3.hash(struct.pack("<%dI" % len(words), *[w & 0xFFFFFFFF for w in words]), SEED, signed=False)


def identifiers(smiles, radius):
    mol = Chem.MolFromSmiles(smiles, sanitize=False)
    nbrs = [[] for _ in mol.GetAtoms()]
    for b in mol.GetBonds():
        code = CODES[b.GetBondType()]
        u, v = b.GetBeginAtomIdx(), b.GetEndAtomIdx()
        nbrs[u].append((v, code))
        nbrs[v].append((u, code))
    cur = [
        h([a.GetAtomicNum(), len(nbrs[a.GetIdx()]), a.GetFormalCharge(), int(a.GetIsAromatic())])
        for a in mol.GetAtoms()
    ]
    ids = set(cur)
    for r in range(1, radius + 1):
        nxt = []
        for v in range(len(cur)):
            pairs = sorted((code, cur[u]) for u, code in nbrs[v])
            words = [r, cur[v]] + [x for p in pairs for x in p]
            nxt.append(h(words))
        cur = nxt
        ids |= set(cur)
    return ids


if __name__ == "__main__":
    smiles_list = sys.argv[1:] or [
        "*C(*)(C)C(=O)OCCCC.*c1ccc(N)c(N)c1*",
        "[*]C(C)(C(=O)OCCCC)[*].[*]c1ccc([*])c([*])c1",
        "CC",
        "CCO",
        "[NH3+]CC(=O)[O-]",
    ]
    for s in smiles_list:
        ids = identifiers(s, 2)
        bits = sorted({i % 2048 for i in ids})
        print(s, len(ids), len(bits), bits)
