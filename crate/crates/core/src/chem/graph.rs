use crate::error::{Error, Result};

#[rustfmt::skip]
pub(crate) const ELEMENTS: [&str; 119] = [
    "*",
    "H", "He",
    "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
    "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy",
    "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt",
    "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
    "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf",
    "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Largest atomic number; 0 is the wildcard / attachment point.
pub const MAX_ATOMIC_NUMBER: u8 = 118;

pub(crate) fn atomic_number(symbol: &str) -> Option<u8> {
    ELEMENTS.iter().position(|s| *s == symbol).map(|z| z as u8)
}

pub fn element_symbol(atomic_number: u8) -> Option<&'static str> {
    ELEMENTS.get(atomic_number as usize).copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub atomic_number: u8,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count written inside a bracket atom; `None` outside brackets.
    pub explicit_h: Option<u8>,
}

impl Atom {
    pub fn new(atomic_number: u8) -> Self {
        Atom {
            atomic_number,
            aromatic: false,
            formal_charge: 0,
            explicit_h: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub const ALL: [BondOrder; 4] = [
        BondOrder::Single,
        BondOrder::Double,
        BondOrder::Triple,
        BondOrder::Aromatic,
    ];

    /// Class index used by the bond embedding and bond-type head.
    pub fn index(self) -> usize {
        match self {
            BondOrder::Single => 0,
            BondOrder::Double => 1,
            BondOrder::Triple => 2,
            BondOrder::Aromatic => 3,
        }
    }

    /// Integer code mixed into fingerprint hashes.
    pub fn code(self) -> u32 {
        self.index() as u32 + 1
    }
}

/// A bond between two distinct atoms. Endpoints are stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    a: usize,
    b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(u: usize, v: usize, order: BondOrder) -> Self {
        debug_assert_ne!(u, v);
        Bond {
            a: u.min(v),
            b: u.max(v),
            order,
        }
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.a, self.b)
    }

    pub fn other(&self, atom: usize) -> usize {
        if atom == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub fragment_count: usize,
}

impl MolGraph {
    /// Builds a graph, checking bond endpoints and duplicate bonds.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>, fragment_count: usize) -> Result<Self> {
        let n = atoms.len();
        let mut seen = std::collections::HashSet::with_capacity(bonds.len());
        for bond in &bonds {
            let (a, b) = bond.endpoints();
            if a == b || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "bond ({a}, {b}) invalid for {n} atoms"
                )));
            }
            if !seen.insert((a, b)) {
                return Err(Error::InvalidArgument(format!("duplicate bond ({a}, {b})")));
            }
        }
        for atom in &atoms {
            if atom.atomic_number > MAX_ATOMIC_NUMBER || (atom.atomic_number == 0 && atom.aromatic)
            {
                return Err(Error::InvalidArgument(format!("invalid atom {atom:?}")));
            }
        }
        Ok(MolGraph {
            atoms,
            bonds,
            fragment_count,
        })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Neighbor lists `(neighbor, order)` per atom, each sorted by neighbor index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for bond in &self.bonds {
            let (a, b) = bond.endpoints();
            adj[a].push((b, bond.order));
            adj[b].push((a, bond.order));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.atoms.len()];
        for bond in &self.bonds {
            let (a, b) = bond.endpoints();
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Relabels atoms so that old atom `i` becomes atom `permutation[i]`.
    pub fn permute_atoms(&self, permutation: &[usize]) -> Result<MolGraph> {
        let n = self.atoms.len();
        if permutation.len() != n {
            return Err(Error::InvalidArgument(format!(
                "permutation has length {}, graph has {n} atoms",
                permutation.len()
            )));
        }
        let mut hit = vec![false; n];
        for &p in permutation {
            if p >= n || hit[p] {
                return Err(Error::InvalidArgument(
                    "permutation is not a bijection".to_string(),
                ));
            }
            hit[p] = true;
        }
        let mut atoms = vec![Atom::new(0); n];
        for (old, atom) in self.atoms.iter().enumerate() {
            atoms[permutation[old]] = *atom;
        }
        let bonds = self
            .bonds
            .iter()
            .map(|bond| {
                let (a, b) = bond.endpoints();
                Bond::new(permutation[a], permutation[b], bond.order)
            })
            .collect();
        Ok(MolGraph {
            atoms,
            bonds,
            fragment_count: self.fragment_count,
        })
    }

    /// Labeling-independent summary: each atom with its sorted neighborhood, sorted.
    ///
    /// Equal for isomorphic graphs; not a full canonical form.
    pub fn structure_signature(&self) -> Vec<(Atom, Vec<(BondOrder, Atom)>)> {
        let adj = self.adjacency();
        let mut sig: Vec<_> = self
            .atoms
            .iter()
            .zip(&adj)
            .map(|(atom, nbrs)| {
                let mut env: Vec<_> = nbrs.iter().map(|&(u, o)| (o, self.atoms[u])).collect();
                env.sort_unstable();
                (*atom, env)
            })
            .collect();
        sig.sort_unstable();
        sig
    }
}

/// Inverse of a permutation given as `old -> new`.
pub fn invert_permutation(permutation: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; permutation.len()];
    for (old, &new) in permutation.iter().enumerate() {
        inv[new] = old;
    }
    inv
}
