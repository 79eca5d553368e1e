//! SMILES reader producing [`MolGraph`]s.
//!
//! Covers the organic subset, bracket atoms (isotope, chirality, H count,
//! charge, atom class), the wildcard `*`, bond symbols `- = # :` plus the
//! directional `/ \`, branches, ring closures (`1`..`9`, `%nn`) and
//! dot-separated fragments. Implicit hydrogens never become nodes.
//! Stereo marks are accepted and dropped with a warning.

use std::collections::HashMap;
use std::fmt;

use super::graph::{atomic_number, Atom, Bond, BondOrder, MolGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmilesErrorKind {
    Empty,
    UnbalancedParenthesis,
    DanglingRingClosure(u16),
    UnknownElement(String),
    UnexpectedCharacter(char),
    UnclosedBracket,
    UnsupportedBond(char),
    DanglingBond,
    MisplacedBranch,
    ConflictingRingBond(u16),
    InvalidRingClosure(u16),
    DuplicateBond,
    BadNumber,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct SmilesError {
    /// Byte offset into the input where the problem was detected.
    pub offset: usize,
    pub kind: SmilesErrorKind,
}

impl fmt::Display for SmilesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SmilesErrorKind::*;
        match &self.kind {
            Empty => write!(f, "empty SMILES")?,
            UnbalancedParenthesis => write!(f, "unbalanced parenthesis")?,
            DanglingRingClosure(n) => write!(f, "dangling ring closure {n}")?,
            UnknownElement(s) => write!(f, "unknown element symbol '{s}'")?,
            UnexpectedCharacter(c) => write!(f, "unexpected character '{c}'")?,
            UnclosedBracket => write!(f, "unclosed bracket atom")?,
            UnsupportedBond(c) => write!(f, "unsupported bond symbol '{c}'")?,
            DanglingBond => write!(f, "bond symbol without a following atom")?,
            MisplacedBranch => write!(f, "branch without a preceding atom")?,
            ConflictingRingBond(n) => write!(f, "conflicting bond orders on ring closure {n}")?,
            InvalidRingClosure(n) => write!(f, "ring closure {n} bonds an atom to itself")?,
            DuplicateBond => write!(f, "duplicate bond between the same atoms")?,
            BadNumber => write!(f, "malformed number")?,
        }
        write!(f, " at byte {}", self.offset)
    }
}

/// Parsed graph plus any non-fatal notes (dropped stereo marks).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSmiles {
    pub graph: MolGraph,
    pub warnings: Vec<String>,
}

/// Parses `text`, logging warnings for dropped stereochemistry.
pub fn parse_smiles(text: &str) -> Result<MolGraph, SmilesError> {
    let parsed = parse_smiles_with_warnings(text)?;
    for w in &parsed.warnings {
        log::warn!("{text}: {w}");
    }
    Ok(parsed.graph)
}

pub fn parse_smiles_with_warnings(text: &str) -> Result<ParsedSmiles, SmilesError> {
    Parser::new(text).run()
}

#[derive(Clone, Copy)]
struct PendingBond {
    order: BondOrder,
}

struct OpenRing {
    atom: usize,
    bond: Option<PendingBond>,
    offset: usize,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    bonded: std::collections::HashSet<(usize, usize)>,
    prev: Option<usize>,
    branches: Vec<(usize, usize)>,
    pending: Option<(PendingBond, usize)>,
    rings: HashMap<u16, OpenRing>,
    fragments: usize,
    warnings: Vec<String>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            bonded: Default::default(),
            prev: None,
            branches: Vec::new(),
            pending: None,
            rings: HashMap::new(),
            fragments: 1,
            warnings: Vec::new(),
        }
    }

    fn err(&self, offset: usize, kind: SmilesErrorKind) -> SmilesError {
        SmilesError { offset, kind }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn char_at(&self, offset: usize) -> char {
        self.text[offset..].chars().next().unwrap_or('\u{fffd}')
    }

    fn run(mut self) -> Result<ParsedSmiles, SmilesError> {
        if self.bytes.is_empty() {
            return Err(self.err(0, SmilesErrorKind::Empty));
        }
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(atom) = self.prev else {
                        return Err(self.err(start, SmilesErrorKind::MisplacedBranch));
                    };
                    if self.pending.is_some() {
                        return Err(self.err(start, SmilesErrorKind::MisplacedBranch));
                    }
                    self.branches.push((atom, start));
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return Err(self.err(start, SmilesErrorKind::DanglingBond));
                    }
                    let Some((atom, _)) = self.branches.pop() else {
                        return Err(self.err(start, SmilesErrorKind::UnbalancedParenthesis));
                    };
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'.' => {
                    if self.pending.is_some() {
                        return Err(self.err(start, SmilesErrorKind::DanglingBond));
                    }
                    self.prev = None;
                    self.fragments += 1;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' | b'$' => {
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        b'/' | b'\\' => {
                            self.warnings.push(format!(
                                "directional bond '{}' at byte {start} read as single",
                                c as char
                            ));
                            BondOrder::Single
                        }
                        _ => return Err(self.err(start, SmilesErrorKind::UnsupportedBond('$'))),
                    };
                    if self.pending.is_some() || self.prev.is_none() {
                        return Err(self.err(start, SmilesErrorKind::DanglingBond));
                    }
                    self.pending = Some((PendingBond { order }, start));
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, start)?;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom, start)?;
                }
            }
        }
        if let Some((_, offset)) = self.pending {
            return Err(self.err(offset, SmilesErrorKind::DanglingBond));
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(self.err(offset, SmilesErrorKind::UnbalancedParenthesis));
        }
        if let Some((&digit, ring)) = self.rings.iter().min_by_key(|(_, r)| r.offset) {
            return Err(self.err(ring.offset, SmilesErrorKind::DanglingRingClosure(digit)));
        }
        let graph = MolGraph::new(self.atoms, self.bonds, self.fragments)
            .expect("parser maintains graph invariants");
        Ok(ParsedSmiles {
            graph,
            warnings: self.warnings,
        })
    }

    fn default_order(&self, u: usize, v: usize) -> BondOrder {
        if self.atoms[u].aromatic && self.atoms[v].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn connect(
        &mut self,
        u: usize,
        v: usize,
        order: BondOrder,
        offset: usize,
    ) -> Result<(), SmilesError> {
        let key = (u.min(v), u.max(v));
        if !self.bonded.insert(key) {
            return Err(self.err(offset, SmilesErrorKind::DuplicateBond));
        }
        self.bonds.push(Bond::new(u, v, order));
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom, offset: usize) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        let pending = self.pending.take();
        if let Some(prev) = self.prev {
            let order = pending
                .map(|(b, _)| b.order)
                .unwrap_or_else(|| self.default_order(prev, idx));
            self.connect(prev, idx, order, offset)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let start = self.pos;
        let digit: u16 = if self.bytes[start] == b'%' {
            let digits = self.bytes.get(start + 1..start + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    ((d[0] - b'0') * 10 + (d[1] - b'0')) as u16
                }
                _ => return Err(self.err(start, SmilesErrorKind::BadNumber)),
            }
        } else {
            self.pos += 1;
            (self.bytes[start] - b'0') as u16
        };
        let Some(atom) = self.prev else {
            return Err(self.err(
                start,
                SmilesErrorKind::UnexpectedCharacter(self.char_at(start)),
            ));
        };
        let bond = self.pending.take().map(|(b, _)| b);
        match self.rings.remove(&digit) {
            Some(open) => {
                if open.atom == atom {
                    return Err(self.err(start, SmilesErrorKind::InvalidRingClosure(digit)));
                }
                let order = match (open.bond, bond) {
                    (Some(a), Some(b)) if a.order != b.order => {
                        return Err(self.err(start, SmilesErrorKind::ConflictingRingBond(digit)))
                    }
                    (Some(b), _) | (None, Some(b)) => b.order,
                    (None, None) => self.default_order(open.atom, atom),
                };
                self.connect(open.atom, atom, order, start)?;
            }
            None => {
                self.rings.insert(
                    digit,
                    OpenRing {
                        atom,
                        bond,
                        offset: start,
                    },
                );
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.bytes[start];
        let next = self.bytes.get(start + 1).copied();
        let (symbol, aromatic, len) = match (c, next) {
            (b'*', _) => ("*", false, 1),
            (b'C', Some(b'l')) => ("Cl", false, 2),
            (b'B', Some(b'r')) => ("Br", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b'p', _) => ("P", true, 1),
            (b's', _) => ("S", true, 1),
            (c, _) if c.is_ascii_alphabetic() => {
                let end = self.bytes[start + 1..]
                    .iter()
                    .position(|b| !b.is_ascii_lowercase())
                    .map_or(self.bytes.len(), |p| start + 1 + p);
                return Err(self.err(
                    start,
                    SmilesErrorKind::UnknownElement(
                        self.text[start..end.min(start + 2)].to_string(),
                    ),
                ));
            }
            _ => {
                return Err(self.err(
                    start,
                    SmilesErrorKind::UnexpectedCharacter(self.char_at(start)),
                ))
            }
        };
        self.pos += len;
        let z = atomic_number(symbol).expect("organic subset symbols are elements");
        Ok(Atom {
            atomic_number: z,
            aromatic,
            formal_charge: 0,
            explicit_h: None,
        })
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) && self.pos - start < 6 {
            self.pos += 1;
        }
        (self.pos > start)
            .then(|| self.text[start..self.pos].parse().ok())
            .flatten()
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        let _isotope = self.read_number();

        let sym_start = self.pos;
        let (z, aromatic) = match self.peek() {
            Some(b'*') => {
                self.pos += 1;
                (0, false)
            }
            Some(c) if c.is_ascii_lowercase() => {
                let two = self.text.get(sym_start..sym_start + 2);
                let (symbol, len) = match two {
                    Some("se") => ("Se", 2),
                    Some("as") => ("As", 2),
                    Some("te") => ("Te", 2),
                    _ => match c {
                        b'b' => ("B", 1),
                        b'c' => ("C", 1),
                        b'n' => ("N", 1),
                        b'o' => ("O", 1),
                        b'p' => ("P", 1),
                        b's' => ("S", 1),
                        _ => {
                            return Err(self.err(
                                sym_start,
                                SmilesErrorKind::UnknownElement((c as char).to_string()),
                            ))
                        }
                    },
                };
                self.pos += len;
                (
                    atomic_number(symbol).expect("aromatic symbols are elements"),
                    true,
                )
            }
            Some(c) if c.is_ascii_uppercase() => {
                let two = self
                    .text
                    .get(sym_start..sym_start + 2)
                    .filter(|s| s.as_bytes()[1].is_ascii_lowercase())
                    .and_then(|s| atomic_number(s).map(|z| (z, 2)));
                let one = || {
                    self.text
                        .get(sym_start..sym_start + 1)
                        .and_then(|s| atomic_number(s).map(|z| (z, 1)))
                };
                match two.or_else(one) {
                    Some((z, len)) => {
                        self.pos += len;
                        (z, false)
                    }
                    None => {
                        let end = (sym_start + 2).min(self.bytes.len());
                        let shown = self.text.get(sym_start..end).unwrap_or("?");
                        return Err(self.err(
                            sym_start,
                            SmilesErrorKind::UnknownElement(shown.to_string()),
                        ));
                    }
                }
            }
            Some(_) => {
                return Err(self.err(
                    sym_start,
                    SmilesErrorKind::UnexpectedCharacter(self.char_at(sym_start)),
                ))
            }
            None => return Err(self.err(open, SmilesErrorKind::UnclosedBracket)),
        };

        if self.peek() == Some(b'@') {
            let chiral = self.pos;
            while self.peek() == Some(b'@') {
                self.pos += 1;
            }
            // @TH1, @AL2, @SP3, @TB12, @OH30
            if self
                .text
                .get(self.pos..self.pos + 2)
                .is_some_and(|s| matches!(s, "TH" | "AL" | "SP" | "TB" | "OH"))
            {
                self.pos += 2;
                self.read_number();
            }
            self.warnings.push(format!(
                "chirality '{}' at byte {chiral} dropped",
                &self.text[chiral..self.pos]
            ));
        }

        let mut explicit_h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            explicit_h = match self.read_number() {
                Some(n) => {
                    u8::try_from(n).map_err(|_| self.err(self.pos, SmilesErrorKind::BadNumber))?
                }
                None => 1,
            };
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }
        let formal_charge =
            i8::try_from(charge).map_err(|_| self.err(self.pos, SmilesErrorKind::BadNumber))?;

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.read_number().is_none() {
                return Err(self.err(self.pos, SmilesErrorKind::BadNumber));
            }
        }

        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(_) => {
                return Err(self.err(
                    self.pos,
                    SmilesErrorKind::UnexpectedCharacter(self.char_at(self.pos)),
                ))
            }
            None => return Err(self.err(open, SmilesErrorKind::UnclosedBracket)),
        }

        Ok(Atom {
            atomic_number: z,
            aromatic,
            formal_charge,
            explicit_h: Some(explicit_h),
        })
    }
}
