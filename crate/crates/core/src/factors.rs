//! Factor groups: the per-index building blocks of a free or topologist's product.
//!
//! A [`FactorDescriptor`] names one concrete countable group; a [`GroupElement`]
//! is an element of such a group with a canonical payload, so element equality
//! is structural equality. A [`FamilySpec`] assigns a descriptor to every index
//! `n >= 1`, either as a finite list or as a prefix plus repeating tail.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use num::integer::gcd;
use num::rational::Rational64;
use num::{One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::words::FiniteWord;

/// Number of generators of a free-style factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rank {
    Finite(u32),
    Countable,
}

impl Rank {
    fn admits(&self, generator: u32) -> bool {
        match self {
            Rank::Finite(r) => generator >= 1 && generator <= *r,
            Rank::Countable => generator >= 1,
        }
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank::Finite(r) => write!(f, "{r}"),
            Rank::Countable => write!(f, "countable"),
        }
    }
}

/// Multiplication table of a finite group. Row and column 0 are the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MulTable {
    size: u32,
    flat: Vec<u32>,
}

impl MulTable {
    /// Validates and adopts a square table: Latin square, identity row/column 0,
    /// two-sided inverses, and associativity.
    pub fn new(rows: Vec<Vec<u32>>) -> Result<Self> {
        let size = rows.len() as u32;
        if size == 0 {
            return Err(Error::InvalidDescriptor("empty multiplication table".into()));
        }
        let mut flat = Vec::with_capacity((size * size) as usize);
        for row in &rows {
            if row.len() as u32 != size {
                return Err(Error::InvalidDescriptor("table is not square".into()));
            }
            for &v in row {
                if v >= size {
                    return Err(Error::InvalidDescriptor(format!(
                        "table entry {v} out of range 0..{size}"
                    )));
                }
                flat.push(v);
            }
        }
        let table = MulTable { size, flat };
        for i in 0..size {
            if table.get(0, i) != i || table.get(i, 0) != i {
                return Err(Error::InvalidDescriptor(
                    "row/column 0 is not the identity".into(),
                ));
            }
            let mut row_seen = vec![false; size as usize];
            let mut col_seen = vec![false; size as usize];
            for j in 0..size {
                row_seen[table.get(i, j) as usize] = true;
                col_seen[table.get(j, i) as usize] = true;
            }
            if row_seen.iter().any(|s| !s) || col_seen.iter().any(|s| !s) {
                return Err(Error::InvalidDescriptor("table is not a Latin square".into()));
            }
            if !(0..size).any(|j| table.get(i, j) == 0 && table.get(j, i) == 0) {
                return Err(Error::InvalidDescriptor(format!(
                    "element {i} has no two-sided inverse"
                )));
            }
        }
        for a in 0..size {
            for b in 0..size {
                for c in 0..size {
                    if table.get(table.get(a, b), c) != table.get(a, table.get(b, c)) {
                        return Err(Error::InvalidDescriptor(format!(
                            "table is not associative at ({a}, {b}, {c})"
                        )));
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    fn get(&self, i: u32, j: u32) -> u32 {
        self.flat[(i * self.size + j) as usize]
    }

    fn inverse_of(&self, i: u32) -> u32 {
        (0..self.size)
            .find(|&j| self.get(i, j) == 0 && self.get(j, i) == 0)
            .expect("validated table has inverses")
    }

    fn rows(&self) -> Vec<Vec<u32>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// One factor group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FactorDescriptor {
    /// The additive integers.
    Integers,
    /// Cyclic group of order `k >= 2`, written additively on `0..k`.
    Cyclic(u32),
    /// The additive rationals.
    Rationals,
    /// Free group on the given number of generators.
    FreeGroup(Rank),
    /// Finite group given by an explicit multiplication table.
    TableGroup(Arc<MulTable>),
    /// Free product of copies of the order-2 group, one per generator.
    /// Arises as the pairing target when a source factor has involutions.
    FreeInvolutions(Rank),
    /// Finite free product of the listed factors, treated as a single factor.
    /// Elements are reduced words over the slots. Arises from regrouping.
    Block(Arc<Vec<FactorDescriptor>>),
}

impl FactorDescriptor {
    pub fn cyclic(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidDescriptor(format!(
                "cyclic order must be >= 2, got {k}"
            )));
        }
        Ok(FactorDescriptor::Cyclic(k))
    }

    pub fn table(rows: Vec<Vec<u32>>) -> Result<Self> {
        Ok(FactorDescriptor::TableGroup(Arc::new(MulTable::new(rows)?)))
    }

    /// The symmetric group on three points as a table group. Elements are the
    /// six permutations of `[0,1,2]` in lexicographic order (0 is the identity;
    /// 1, 2, 5 are the transpositions; 3, 4 the 3-cycles).
    pub fn symmetric3() -> Self {
        let perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let compose = |a: &[usize; 3], b: &[usize; 3]| {
            // apply a, then b
            [b[a[0]], b[a[1]], b[a[2]]]
        };
        let index_of = |p: [usize; 3]| perms.iter().position(|q| *q == p).unwrap() as u32;
        let rows = perms
            .iter()
            .map(|a| perms.iter().map(|b| index_of(compose(a, b))).collect())
            .collect();
        FactorDescriptor::table(rows).expect("S3 table is a group")
    }

    /// Identity element of this factor.
    pub fn identity(&self) -> GroupElement {
        let payload = match self {
            FactorDescriptor::Integers | FactorDescriptor::Cyclic(_) | FactorDescriptor::TableGroup(_) => {
                Payload::Int(0)
            }
            FactorDescriptor::Rationals => Payload::Rational(Rational64::zero()),
            FactorDescriptor::FreeGroup(_) => Payload::FreeWord(Vec::new()),
            FactorDescriptor::FreeInvolutions(_) => Payload::InvolWord(Vec::new()),
            FactorDescriptor::Block(_) => Payload::BlockWord(FiniteWord::empty()),
        };
        GroupElement {
            descriptor: self.clone(),
            payload,
        }
    }

    /// True when this factor contains an element of order 2.
    pub fn has_involution(&self) -> bool {
        match self {
            FactorDescriptor::Integers | FactorDescriptor::Rationals | FactorDescriptor::FreeGroup(_) => false,
            FactorDescriptor::Cyclic(k) => k % 2 == 0,
            FactorDescriptor::TableGroup(t) => (1..t.size()).any(|i| t.get(i, i) == 0),
            FactorDescriptor::FreeInvolutions(_) => true,
            FactorDescriptor::Block(slots) => slots.iter().any(|s| s.has_involution()),
        }
    }

    /// Cardinality of the factor group.
    pub fn cardinality(&self) -> Cardinality {
        match self {
            FactorDescriptor::Integers | FactorDescriptor::Rationals | FactorDescriptor::FreeGroup(_) => {
                Cardinality::CountablyInfinite
            }
            FactorDescriptor::Cyclic(k) => Cardinality::Finite(*k as u64),
            FactorDescriptor::TableGroup(t) => Cardinality::Finite(t.size() as u64),
            FactorDescriptor::FreeInvolutions(rank) => match rank {
                Rank::Finite(1) => Cardinality::Finite(2),
                _ => Cardinality::CountablyInfinite,
            },
            FactorDescriptor::Block(slots) => {
                let mut nontrivial = Vec::new();
                for s in slots.iter() {
                    if !s.is_trivial() {
                        nontrivial.push(s);
                    }
                }
                match nontrivial.as_slice() {
                    [] => Cardinality::Finite(1),
                    [one] => one.cardinality(),
                    _ => Cardinality::CountablyInfinite,
                }
            }
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.cardinality() == Cardinality::Finite(1)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.cardinality(), Cardinality::Finite(_))
    }

    /// Parses a descriptor-specific element literal.
    pub fn parse_literal(&self, literal: &str) -> Result<GroupElement> {
        let fail = |reason: &str| Error::InvalidLiteral {
            literal: literal.to_string(),
            descriptor: self.to_string(),
            reason: reason.to_string(),
        };
        let elem = match self {
            FactorDescriptor::Integers => {
                let v: i64 = literal.parse().map_err(|_| fail("expected an integer"))?;
                GroupElement::new(self.clone(), Payload::Int(v))?
            }
            FactorDescriptor::Cyclic(_) => {
                let v: i64 = literal.parse().map_err(|_| fail("expected an integer residue"))?;
                GroupElement::new(self.clone(), Payload::Int(v))?
            }
            FactorDescriptor::TableGroup(t) => {
                let v: u32 = literal.parse().map_err(|_| fail("expected an element index"))?;
                if v >= t.size() {
                    return Err(fail("element index out of range"));
                }
                GroupElement::new(self.clone(), Payload::Int(v as i64))?
            }
            FactorDescriptor::Rationals => {
                let (p, q) = match literal.split_once('/') {
                    Some((p, q)) => (
                        p.parse::<i64>().map_err(|_| fail("bad numerator"))?,
                        q.parse::<i64>().map_err(|_| fail("bad denominator"))?,
                    ),
                    None => (literal.parse::<i64>().map_err(|_| fail("expected p or p/q"))?, 1),
                };
                if q == 0 {
                    return Err(fail("zero denominator"));
                }
                GroupElement::new(self.clone(), Payload::Rational(Rational64::new(p, q)))?
            }
            FactorDescriptor::FreeGroup(_) => {
                let terms = parse_generator_tokens(literal).ok_or_else(|| fail("expected x<k> tokens"))?;
                GroupElement::new(
                    self.clone(),
                    Payload::FreeWord(terms.into_iter().map(|(g, inv)| (g, if inv { -1 } else { 1 })).collect()),
                )?
            }
            FactorDescriptor::FreeInvolutions(_) => {
                let terms = parse_generator_tokens(literal).ok_or_else(|| fail("expected x<k> tokens"))?;
                GroupElement::new(
                    self.clone(),
                    Payload::InvolWord(terms.into_iter().map(|(g, _)| g).collect()),
                )?
            }
            FactorDescriptor::Block(slots) => {
                let inner = literal
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| fail("expected a [..] block word"))?;
                let family = FamilySpec::finite(slots.as_ref().clone());
                let word = FiniteWord::parse_text(&family, inner)?;
                GroupElement::new(self.clone(), Payload::BlockWord(word))?
            }
        };
        Ok(elem)
    }
}

/// Parses "1" or a run of `x<k>` tokens, each optionally suffixed with `'`.
fn parse_generator_tokens(literal: &str) -> Option<Vec<(u32, bool)>> {
    if literal == "1" {
        return Some(Vec::new());
    }
    let mut out = Vec::new();
    let mut chars = literal.chars().peekable();
    while let Some(c) = chars.next() {
        if c != 'x' {
            return None;
        }
        let mut digits = String::new();
        while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
            digits.push(*d);
            chars.next();
        }
        let gen: u32 = digits.parse().ok()?;
        if gen == 0 {
            return None;
        }
        let inverse = if chars.peek() == Some(&'\'') {
            chars.next();
            true
        } else {
            false
        };
        out.push((gen, inverse));
    }
    Some(out)
}

impl fmt::Display for FactorDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorDescriptor::Integers => write!(f, "Z"),
            FactorDescriptor::Cyclic(k) => write!(f, "cyclic({k})"),
            FactorDescriptor::Rationals => write!(f, "Q"),
            FactorDescriptor::FreeGroup(r) => write!(f, "free({r})"),
            FactorDescriptor::TableGroup(t) => write!(f, "table({})", t.size()),
            FactorDescriptor::FreeInvolutions(r) => write!(f, "free2({r})"),
            FactorDescriptor::Block(slots) => {
                write!(f, "block(")?;
                for (i, s) in slots.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Group cardinality tag used by classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cardinality {
    #[serde(rename = "finite")]
    Finite(u64),
    #[serde(rename = "aleph_0")]
    CountablyInfinite,
    #[serde(rename = "uncountable")]
    Uncountable,
}

/// Canonical payload of a group element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Payload {
    /// Integer value, cyclic residue in `[0, k)`, or table element index.
    Int(i64),
    /// Rational in lowest terms with positive denominator.
    Rational(Rational64),
    /// Freely reduced word: (generator, nonzero exponent), adjacent generators distinct.
    FreeWord(Vec<(u32, i64)>),
    /// Reduced word over order-2 generators: adjacent generators distinct.
    InvolWord(Vec<u32>),
    /// Reduced word over the block's slots (slot indices are 1-based).
    BlockWord(FiniteWord),
}

/// An element of one factor group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupElement {
    descriptor: FactorDescriptor,
    payload: Payload,
}

impl GroupElement {
    /// Builds an element, canonicalizing the payload (residue range, lowest
    /// terms, free reduction) and rejecting payloads of the wrong shape.
    pub fn new(descriptor: FactorDescriptor, payload: Payload) -> Result<Self> {
        let mismatch = |what: &str| {
            Err(Error::DescriptorMismatch(format!(
                "payload {what} does not fit factor {descriptor}"
            )))
        };
        let payload = match (&descriptor, payload) {
            (FactorDescriptor::Integers, Payload::Int(v)) => Payload::Int(v),
            (FactorDescriptor::Cyclic(k), Payload::Int(v)) => {
                Payload::Int(v.rem_euclid(*k as i64))
            }
            (FactorDescriptor::TableGroup(t), Payload::Int(v)) => {
                if v < 0 || v >= t.size() as i64 {
                    return mismatch("table index");
                }
                Payload::Int(v)
            }
            (FactorDescriptor::Rationals, Payload::Rational(r)) => Payload::Rational(r),
            (FactorDescriptor::FreeGroup(rank), Payload::FreeWord(terms)) => {
                let mut reduced: Vec<(u32, i64)> = Vec::with_capacity(terms.len());
                for (g, e) in terms {
                    if !rank.admits(g) {
                        return mismatch("generator index");
                    }
                    push_free_term(&mut reduced, g, e);
                }
                Payload::FreeWord(reduced)
            }
            (FactorDescriptor::FreeInvolutions(rank), Payload::InvolWord(gens)) => {
                let mut reduced: Vec<u32> = Vec::with_capacity(gens.len());
                for g in gens {
                    if !rank.admits(g) {
                        return mismatch("generator index");
                    }
                    if reduced.last() == Some(&g) {
                        reduced.pop();
                    } else {
                        reduced.push(g);
                    }
                }
                Payload::InvolWord(reduced)
            }
            (FactorDescriptor::Block(slots), Payload::BlockWord(word)) => {
                let family = FamilySpec::finite(slots.as_ref().clone());
                let word = FiniteWord::reduce(
                    &family,
                    word.letters().iter().map(|l| (l.index(), l.element().clone())),
                )?;
                Payload::BlockWord(word)
            }
            _ => return mismatch("kind"),
        };
        Ok(GroupElement { descriptor, payload })
    }

    pub fn integer(v: i64) -> Self {
        GroupElement {
            descriptor: FactorDescriptor::Integers,
            payload: Payload::Int(v),
        }
    }

    pub fn descriptor(&self) -> &FactorDescriptor {
        &self.descriptor
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn is_identity(&self) -> bool {
        match &self.payload {
            Payload::Int(v) => *v == 0,
            Payload::Rational(r) => r.is_zero(),
            Payload::FreeWord(w) => w.is_empty(),
            Payload::InvolWord(w) => w.is_empty(),
            Payload::BlockWord(w) => w.is_empty(),
        }
    }

    /// Product in the factor group. Both operands must share the descriptor.
    pub fn op(&self, other: &GroupElement) -> Result<GroupElement> {
        if self.descriptor != other.descriptor {
            return Err(Error::DescriptorMismatch(format!(
                "cannot multiply {} element by {} element",
                self.descriptor, other.descriptor
            )));
        }
        let payload = match (&self.descriptor, &self.payload, &other.payload) {
            (FactorDescriptor::Integers, Payload::Int(a), Payload::Int(b)) => Payload::Int(a + b),
            (FactorDescriptor::Cyclic(k), Payload::Int(a), Payload::Int(b)) => {
                Payload::Int((a + b).rem_euclid(*k as i64))
            }
            (FactorDescriptor::TableGroup(t), Payload::Int(a), Payload::Int(b)) => {
                Payload::Int(t.get(*a as u32, *b as u32) as i64)
            }
            (FactorDescriptor::Rationals, Payload::Rational(a), Payload::Rational(b)) => {
                Payload::Rational(a + b)
            }
            (FactorDescriptor::FreeGroup(_), Payload::FreeWord(a), Payload::FreeWord(b)) => {
                let mut out = a.clone();
                for &(g, e) in b {
                    push_free_term(&mut out, g, e);
                }
                Payload::FreeWord(out)
            }
            (FactorDescriptor::FreeInvolutions(_), Payload::InvolWord(a), Payload::InvolWord(b)) => {
                let mut out = a.clone();
                for &g in b {
                    if out.last() == Some(&g) {
                        out.pop();
                    } else {
                        out.push(g);
                    }
                }
                Payload::InvolWord(out)
            }
            (FactorDescriptor::Block(_), Payload::BlockWord(a), Payload::BlockWord(b)) => {
                Payload::BlockWord(a.concat(b))
            }
            _ => unreachable!("payload shape is validated at construction"),
        };
        Ok(GroupElement {
            descriptor: self.descriptor.clone(),
            payload,
        })
    }

    pub fn inverse(&self) -> GroupElement {
        let payload = match (&self.descriptor, &self.payload) {
            (FactorDescriptor::Integers, Payload::Int(v)) => Payload::Int(-v),
            (FactorDescriptor::Cyclic(k), Payload::Int(v)) => {
                Payload::Int((-v).rem_euclid(*k as i64))
            }
            (FactorDescriptor::TableGroup(t), Payload::Int(v)) => {
                Payload::Int(t.inverse_of(*v as u32) as i64)
            }
            (FactorDescriptor::Rationals, Payload::Rational(r)) => Payload::Rational(-r),
            (FactorDescriptor::FreeGroup(_), Payload::FreeWord(w)) => {
                Payload::FreeWord(w.iter().rev().map(|&(g, e)| (g, -e)).collect())
            }
            (FactorDescriptor::FreeInvolutions(_), Payload::InvolWord(w)) => {
                Payload::InvolWord(w.iter().rev().copied().collect())
            }
            (FactorDescriptor::Block(_), Payload::BlockWord(w)) => Payload::BlockWord(w.invert()),
            _ => unreachable!("payload shape is validated at construction"),
        };
        GroupElement {
            descriptor: self.descriptor.clone(),
            payload,
        }
    }

    /// True iff the element has order exactly 2.
    pub fn is_involution(&self) -> bool {
        !self.is_identity() && *self == self.inverse()
    }

    /// Order of the element; `None` means infinite.
    pub fn order(&self) -> Option<u64> {
        if self.is_identity() {
            return Some(1);
        }
        match (&self.descriptor, &self.payload) {
            (FactorDescriptor::Cyclic(k), Payload::Int(v)) => {
                Some(*k as u64 / gcd(*v as u64, *k as u64))
            }
            (FactorDescriptor::TableGroup(t), Payload::Int(v)) => {
                let mut acc = *v as u32;
                let mut n = 1u64;
                while acc != 0 {
                    acc = t.get(acc, *v as u32);
                    n += 1;
                }
                Some(n)
            }
            (FactorDescriptor::FreeInvolutions(_), Payload::InvolWord(w)) => {
                let palindrome = w.iter().eq(w.iter().rev());
                palindrome.then_some(2)
            }
            (FactorDescriptor::Block(_), Payload::BlockWord(w)) => {
                let (core, _) = w.cyclic_reduce();
                match core.letters() {
                    [] => Some(1),
                    [single] => single.element().order(),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Canonical descriptor-specific literal, inverse to
    /// [`FactorDescriptor::parse_literal`].
    pub fn literal(&self) -> String {
        match &self.payload {
            Payload::Int(v) => v.to_string(),
            Payload::Rational(r) => {
                if r.denom().is_one() {
                    r.numer().to_string()
                } else {
                    format!("{}/{}", r.numer(), r.denom())
                }
            }
            Payload::FreeWord(w) => {
                if w.is_empty() {
                    return "1".to_string();
                }
                let mut out = String::new();
                for &(g, e) in w {
                    let token = if e > 0 { format!("x{g}") } else { format!("x{g}'") };
                    for _ in 0..e.unsigned_abs() {
                        out.push_str(&token);
                    }
                }
                out
            }
            Payload::InvolWord(w) => {
                if w.is_empty() {
                    return "1".to_string();
                }
                w.iter().map(|g| format!("x{g}")).collect()
            }
            Payload::BlockWord(w) => format!("[{w}]"),
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.literal())
    }
}

fn push_free_term(word: &mut Vec<(u32, i64)>, generator: u32, exponent: i64) {
    if exponent == 0 {
        return;
    }
    match word.last_mut() {
        Some(top) if top.0 == generator => {
            top.1 += exponent;
            if top.1 == 0 {
                word.pop();
            }
        }
        _ => word.push((generator, exponent)),
    }
}

/// Deterministic enumeration of a factor group starting at the identity.
///
/// Finite groups are exhausted when `limit` is at least the order. Integers
/// are listed 0, 1, -1, 2, -2, ...; rationals by a diagonal over lowest-terms
/// fractions; free-style factors by a diagonal over (length, max generator).
pub fn enumerate(descriptor: &FactorDescriptor, limit: usize) -> Vec<GroupElement> {
    let mut out = Vec::with_capacity(limit.min(1024));
    if limit == 0 {
        return out;
    }
    out.push(descriptor.identity());
    let mk = |payload| GroupElement {
        descriptor: descriptor.clone(),
        payload,
    };
    match descriptor {
        FactorDescriptor::Integers => {
            let mut v = 1i64;
            while out.len() < limit {
                out.push(mk(Payload::Int(v)));
                if out.len() < limit {
                    out.push(mk(Payload::Int(-v)));
                }
                v += 1;
            }
        }
        FactorDescriptor::Cyclic(k) => {
            for v in 1..(*k as i64) {
                if out.len() >= limit {
                    break;
                }
                out.push(mk(Payload::Int(v)));
            }
        }
        FactorDescriptor::TableGroup(t) => {
            for v in 1..t.size() as i64 {
                if out.len() >= limit {
                    break;
                }
                out.push(mk(Payload::Int(v)));
            }
        }
        FactorDescriptor::Rationals => {
            let mut height = 2i64;
            'outer: loop {
                for p in (1..height).rev() {
                    let q = height - p;
                    if gcd(p, q) != 1 {
                        continue;
                    }
                    for signed in [p, -p] {
                        if out.len() >= limit {
                            break 'outer;
                        }
                        out.push(mk(Payload::Rational(Rational64::new(signed, q))));
                    }
                }
                height += 1;
            }
        }
        FactorDescriptor::FreeGroup(rank) => {
            let mut stage = 2u32;
            while out.len() < limit {
                for len in 1..stage {
                    let max_gen = stage - len;
                    if let Rank::Finite(r) = rank {
                        if max_gen > *r {
                            continue;
                        }
                    }
                    free_words_of_length(len as usize, max_gen, &mut |word| {
                        if out.len() < limit {
                            out.push(mk(Payload::FreeWord(word.to_vec())));
                        }
                    });
                }
                stage += 1;
            }
            out.truncate(limit);
        }
        FactorDescriptor::FreeInvolutions(rank) => {
            let mut stage = 2u32;
            while out.len() < limit {
                for len in 1..stage {
                    let max_gen = stage - len;
                    if let Rank::Finite(r) = rank {
                        if max_gen > *r {
                            continue;
                        }
                    }
                    invol_words_of_length(len as usize, max_gen, &mut |word| {
                        if out.len() < limit {
                            out.push(mk(Payload::InvolWord(word.to_vec())));
                        }
                    });
                }
                stage += 1;
            }
            out.truncate(limit);
        }
        FactorDescriptor::Block(slots) => {
            let family = FamilySpec::finite(slots.as_ref().clone());
            let max_index = slots.len() as u32;
            let order = match descriptor.cardinality() {
                Cardinality::Finite(n) => Some(n),
                _ => None,
            };
            let mut seen: HashSet<FiniteWord> = HashSet::new();
            seen.insert(FiniteWord::empty());
            let mut stage = 1u32;
            // widen syllable count and per-slot pools together until enough words show up
            while out.len() < limit && order.map_or(true, |n| (out.len() as u64) < n) {
                let words =
                    crate::words::enumerate_words(&family, max_index, stage, stage as usize);
                for word in words {
                    if out.len() >= limit {
                        break;
                    }
                    if seen.insert(word.clone()) {
                        out.push(mk(Payload::BlockWord(word)));
                    }
                }
                stage += 1;
            }
        }
    }
    out
}

/// Freely reduced words of exactly `len` letters over generators `1..=max_gen`
/// that use generator `max_gen`, in lexicographic order with alphabet
/// x1 < x1' < x2 < x2' < ...
fn free_words_of_length(len: usize, max_gen: u32, emit: &mut impl FnMut(&[(u32, i64)])) {
    fn rec(
        word: &mut Vec<(u32, i64)>,
        atoms: usize,
        len: usize,
        max_gen: u32,
        used_max: bool,
        emit: &mut impl FnMut(&[(u32, i64)]),
    ) {
        if atoms == len {
            if used_max {
                emit(word);
            }
            return;
        }
        for gen in 1..=max_gen {
            for exp in [1i64, -1] {
                // skip immediate cancellation with the previous atom
                if let Some(&(g, e)) = word.last() {
                    if g == gen && (e > 0) != (exp > 0) {
                        continue;
                    }
                }
                let mut next = word.clone();
                push_free_term(&mut next, gen, exp);
                rec(&mut next, atoms + 1, len, max_gen, used_max || gen == max_gen, emit);
            }
        }
    }
    rec(&mut Vec::new(), 0, len, max_gen, false, emit);
}

/// Reduced words of exactly `len` order-2 generators over `1..=max_gen`
/// that use generator `max_gen`, adjacent generators distinct.
fn invol_words_of_length(len: usize, max_gen: u32, emit: &mut impl FnMut(&[u32])) {
    fn rec(word: &mut Vec<u32>, len: usize, max_gen: u32, used_max: bool, emit: &mut impl FnMut(&[u32])) {
        if word.len() == len {
            if used_max {
                emit(word);
            }
            return;
        }
        for gen in 1..=max_gen {
            if word.last() == Some(&gen) {
                continue;
            }
            word.push(gen);
            rec(word, len, max_gen, used_max || gen == max_gen, emit);
            word.pop();
        }
    }
    rec(&mut Vec::new(), len, max_gen, false, emit);
}

/// Assignment of a factor to every index `n >= 1`.
///
/// Indices resolve through `prefix` first, then cyclically through `tail`.
/// A spec without a tail is a finite family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilySpec {
    prefix: Vec<FactorDescriptor>,
    tail: Option<Vec<FactorDescriptor>>,
}

impl FamilySpec {
    pub fn new(prefix: Vec<FactorDescriptor>, tail: Option<Vec<FactorDescriptor>>) -> Result<Self> {
        if let Some(t) = &tail {
            if t.is_empty() {
                return Err(Error::InvalidDescriptor("family tail must be nonempty".into()));
            }
        }
        if prefix.is_empty() && tail.is_none() {
            return Err(Error::InvalidDescriptor("family has no factors".into()));
        }
        Ok(FamilySpec { prefix, tail })
    }

    /// Finite family with exactly the given factors.
    pub fn finite(factors: Vec<FactorDescriptor>) -> Self {
        FamilySpec {
            prefix: factors,
            tail: None,
        }
    }

    /// Every index gets the same factor.
    pub fn constant(descriptor: FactorDescriptor) -> Self {
        FamilySpec {
            prefix: Vec::new(),
            tail: Some(vec![descriptor]),
        }
    }

    pub fn descriptor_at(&self, index: u32) -> Result<&FactorDescriptor> {
        if index == 0 {
            return Err(Error::IndexOutsideFamily { index });
        }
        let i = (index - 1) as usize;
        if i < self.prefix.len() {
            return Ok(&self.prefix[i]);
        }
        match &self.tail {
            Some(tail) => Ok(&tail[(i - self.prefix.len()) % tail.len()]),
            None => Err(Error::IndexOutsideFamily { index }),
        }
    }

    /// Largest valid index for finite families; `None` when infinite.
    pub fn max_index(&self) -> Option<u32> {
        match self.tail {
            Some(_) => None,
            None => Some(self.prefix.len() as u32),
        }
    }

    pub fn prefix(&self) -> &[FactorDescriptor] {
        &self.prefix
    }

    pub fn tail(&self) -> Option<&[FactorDescriptor]> {
        self.tail.as_deref()
    }

    /// True when every index resolves to the same descriptor.
    pub fn is_constant(&self) -> bool {
        let mut all = self.prefix.iter().chain(self.tail.iter().flatten());
        match all.next() {
            Some(first) => all.all(|d| d == first),
            None => false,
        }
    }

    /// Number of distinct index slots in the pattern (prefix plus one tail cycle).
    pub fn pattern_len(&self) -> u32 {
        (self.prefix.len() + self.tail.as_ref().map_or(0, |t| t.len())) as u32
    }
}

// --- serde: the config-file formats ---

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RankRepr {
    Finite(u32),
    Keyword(String),
}

#[derive(Serialize, Deserialize)]
enum TaggedDescriptorRepr {
    #[serde(rename = "cyclic")]
    Cyclic(u32),
    #[serde(rename = "free")]
    Free(RankRepr),
    #[serde(rename = "free2")]
    Free2(RankRepr),
    #[serde(rename = "table")]
    Table(Vec<Vec<u32>>),
    #[serde(rename = "block")]
    Block(Vec<FactorDescriptor>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DescriptorRepr {
    Keyword(String),
    Tagged(TaggedDescriptorRepr),
}

fn rank_from_repr<E: serde::de::Error>(repr: RankRepr) -> std::result::Result<Rank, E> {
    match repr {
        RankRepr::Finite(r) if r >= 1 => Ok(Rank::Finite(r)),
        RankRepr::Finite(r) => Err(E::custom(format!("rank must be >= 1, got {r}"))),
        RankRepr::Keyword(s) if s == "countable" => Ok(Rank::Countable),
        RankRepr::Keyword(s) => Err(E::custom(format!("unknown rank {s:?}"))),
    }
}

fn rank_to_repr(rank: &Rank) -> RankRepr {
    match rank {
        Rank::Finite(r) => RankRepr::Finite(*r),
        Rank::Countable => RankRepr::Keyword("countable".into()),
    }
}

impl Serialize for FactorDescriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            FactorDescriptor::Integers => DescriptorRepr::Keyword("Z".into()),
            FactorDescriptor::Rationals => DescriptorRepr::Keyword("Q".into()),
            FactorDescriptor::Cyclic(k) => DescriptorRepr::Tagged(TaggedDescriptorRepr::Cyclic(*k)),
            FactorDescriptor::FreeGroup(r) => {
                DescriptorRepr::Tagged(TaggedDescriptorRepr::Free(rank_to_repr(r)))
            }
            FactorDescriptor::FreeInvolutions(r) => {
                DescriptorRepr::Tagged(TaggedDescriptorRepr::Free2(rank_to_repr(r)))
            }
            FactorDescriptor::TableGroup(t) => {
                DescriptorRepr::Tagged(TaggedDescriptorRepr::Table(t.rows()))
            }
            FactorDescriptor::Block(slots) => {
                DescriptorRepr::Tagged(TaggedDescriptorRepr::Block(slots.as_ref().clone()))
            }
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FactorDescriptor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = DescriptorRepr::deserialize(deserializer)?;
        match repr {
            DescriptorRepr::Keyword(s) => match s.as_str() {
                "Z" => Ok(FactorDescriptor::Integers),
                "Q" => Ok(FactorDescriptor::Rationals),
                other => Err(D::Error::custom(format!("unknown factor keyword {other:?}"))),
            },
            DescriptorRepr::Tagged(t) => match t {
                TaggedDescriptorRepr::Cyclic(k) => {
                    FactorDescriptor::cyclic(k).map_err(D::Error::custom)
                }
                TaggedDescriptorRepr::Free(r) => {
                    Ok(FactorDescriptor::FreeGroup(rank_from_repr::<D::Error>(r)?))
                }
                TaggedDescriptorRepr::Free2(r) => Ok(FactorDescriptor::FreeInvolutions(
                    rank_from_repr::<D::Error>(r)?,
                )),
                TaggedDescriptorRepr::Table(rows) => {
                    FactorDescriptor::table(rows).map_err(D::Error::custom)
                }
                TaggedDescriptorRepr::Block(slots) => {
                    Ok(FactorDescriptor::Block(Arc::new(slots)))
                }
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FamilySpecRepr {
    #[serde(default)]
    prefix: Vec<FactorDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail: Option<Vec<FactorDescriptor>>,
}

impl Serialize for FamilySpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        FamilySpecRepr {
            prefix: self.prefix.clone(),
            tail: self.tail.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FamilySpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = FamilySpecRepr::deserialize(deserializer)?;
        FamilySpec::new(repr.prefix, repr.tail).map_err(D::Error::custom)
    }
}
