#!/usr/bin/env python3
"""Regenerate the bundled demo inputs under data/.

Outputs (all deterministic):

  data/table1.csv               three literature rows, third one malformed
  data/toy_corpus.smi           200 polymer repeat units for desk-scale pretraining
  data/demo/elastomers.csv      35 SYNTHETIC acrylate records (labels are made up)
  data/demo/seq_embeddings.csv  mean-pooled random token n-gram embeddings, a
                                stand-in for polymer language model features

The synthetic labels come from RDKit descriptors plus log-normal noise. They
exist only so the pipeline can be exercised end to end; they are not
measurements. Requires rdkit and numpy.
"""

import csv
import hashlib
import re
from pathlib import Path

import numpy as np
from rdkit import Chem
from rdkit.Chem import Descriptors, rdMolDescriptors

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"

TABLE1 = [
    ("t1-1", "*C(*)(C)C(=O)OCCCC.*c1ccc(N)c(N)c1*", "168.0", "5.3",
     "https://www.sciencedirect.com/science/article/pii/S1359836819308303"),
    ("t1-2", "[*]C(C)(C(=O)OCCCC)[*].[*]c1ccc([*])c([*])c1", "96.1", "4.52",
     "https://dataset-dl.liris.cnrs.fr/db_amethyst/PDFs/10.1016/j.eurpolymj.2021.110418.pdf"),
    ("t1-3", "[*]C(C)(C(=O)O[Ca]O(=O)C(C)[*]", "5.2", "0.24",
     "https://www.sciencedirect.com/science/article/pii/S0032386117312430"),
]

SIDE_CHAINS = [
    "C", "CC", "CCC", "CCCC", "CCCCCC", "CCCCCCCC", "CC(CC)CCCC", "C(C)C",
    "CCC#N", "CCOC", "CCOCC", "CCOCCOC", "CCO", "CCCO", "CCN(C)C",
    "CC[N+](C)(C)C", "CCS(=O)(=O)C", "CC(F)(F)F", "CCC(F)(F)F", "c1ccccc1",
    "Cc1ccccc1", "CCOc1ccccc1", "CC#N", "CCOC(=O)C", "CCSC", "CCCl",
    "C1CCCCC1", "CCC(=O)C", "CCNC(=O)C", "CCOCCC#N",
]

COMONOMERS = [
    "*CC(*)c1ccccc1", "*CC(*)C#N", "*CC(*)C(=O)N", "*CC(*)OC(=O)C",
    "*c1ccc(N)c(N)c1*", "*CC(*)C(=O)O", "*CC(*)Cl",
]


def acrylate(side, methyl):
    alpha = "(C)" if methyl else ""
    return f"*CC(*){alpha}C(=O)O{side}"


def tokens(smiles):
    return re.findall(r"\[[^\]]*\]|Cl|Br|%\d\d|.", smiles)


def token_vector(token, dim):
    seed = int.from_bytes(hashlib.sha256(token.encode()).digest()[:8], "little")
    return np.random.default_rng(seed).standard_normal(dim)


def seq_embedding(smiles, dim=64):
    # Mean over token 1- to 3-grams, so neighbouring context shows up the way
    # it does in a contextual language model.
    toks = tokens(smiles)
    grams = [" ".join(toks[i:i + n]) for n in (1, 2, 3) for i in range(len(toks) - n + 1)]
    return np.mean([token_vector(g, dim) for g in grams], axis=0)


def synthetic_labels(smiles, rng):
    mol = Chem.MolFromSmiles(smiles)
    heavy = mol.GetNumHeavyAtoms()
    tpsa = rdMolDescriptors.CalcTPSA(mol)
    rot = Descriptors.NumRotatableBonds(mol)
    arom = sum(a.GetIsAromatic() for a in mol.GetAtoms()) / heavy
    charged = sum(a.GetFormalCharge() != 0 for a in mol.GetAtoms())
    nitrile = len(mol.GetSubstructMatches(Chem.MolFromSmarts("C#N")))
    polar = tpsa / heavy + 0.6 * nitrile + 1.0 * charged
    log_k = 0.7 + 0.55 * polar + 0.9 * nitrile + 1.1 * charged
    k = float(np.exp(log_k + rng.normal(0, 0.12)))
    methyl = len(mol.GetSubstructMatches(Chem.MolFromSmarts("[CH3][CX4]([#0])C(=O)O")))
    log_e = -1.0 + 0.45 * methyl + 1.2 * arom - 0.06 * rot + 0.3 * nitrile + 0.25 * charged
    e = float(10 ** (log_e + rng.normal(0, 0.08)))
    return k, e


def main():
    rng = np.random.default_rng(20240601)
    DATA.mkdir(exist_ok=True)
    (DATA / "demo").mkdir(exist_ok=True)

    header = ["id", "smiles", "dielectric_constant", "youngs_modulus_mpa", "source_url"]
    with open(DATA / "table1.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(TABLE1)

    corpus = set()
    while len(corpus) < 200:
        side = SIDE_CHAINS[rng.integers(len(SIDE_CHAINS))]
        unit = acrylate(side, bool(rng.integers(2)))
        if rng.random() < 0.3:
            unit += "." + COMONOMERS[rng.integers(len(COMONOMERS))]
        corpus.add(unit)
    with open(DATA / "toy_corpus.smi", "w") as f:
        f.write("# synthetic acrylate repeat units for desk-scale pretraining\n")
        for s in sorted(corpus):
            f.write(s + "\n")

    records = []
    used = set()
    while len(records) < 35:
        side = SIDE_CHAINS[rng.integers(len(SIDE_CHAINS))]
        unit = acrylate(side, bool(rng.integers(2)))
        if rng.random() < 0.25:
            unit += "." + COMONOMERS[rng.integers(len(COMONOMERS))]
        if unit in used:
            continue
        used.add(unit)
        k, e = synthetic_labels(unit, rng)
        records.append((f"demo-{len(records) + 1:02d}", unit, f"{k:.3g}", f"{e:.3g}",
                        f"synthetic://demo/{len(records) + 1:02d}"))
    with open(DATA / "demo" / "elastomers.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(records)

    dim = 64
    with open(DATA / "demo" / "seq_embeddings.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id"] + [f"e{i}" for i in range(dim)])
        for rid, smiles, *_ in sorted(records):
            w.writerow([rid] + [repr(float(f"{x:.9g}")) for x in seq_embedding(smiles, dim)])

    ks = [float(r[2]) for r in records]
    es = [float(r[3]) for r in records]
    print(f"k<20: {sum(k < 20 for k in ks)}/{len(ks)}; k>100: {sum(k > 100 for k in ks)}; "
          f"k range {min(ks):.3g}..{max(ks):.3g}; E<1: {sum(e < 1 for e in es)}; "
          f"E range {min(es):.3g}..{max(es):.3g}")


if __name__ == "__main__":
    main()
