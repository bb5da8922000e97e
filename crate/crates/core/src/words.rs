//! Finite reduced words in a free product of factor groups.
//!
//! A [`FiniteWord`] is the normal form of a free-product element: a sequence
//! of nonidentity letters in which no two consecutive letters come from the
//! same factor. Concatenation cancels the maximal inverse suffix/prefix pair
//! and then merges the exposed boundary letters, looping while the merge
//! keeps producing identities, so results are always in normal form.
//!
//! Words from different families must never be mixed in one operation; that
//! is a programming error and panics.

use std::collections::HashSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::factors::{enumerate, Cardinality, FamilySpec, GroupElement};

/// One letter of a word: a nonidentity element of the factor at `index`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Letter {
    index: u32,
    element: GroupElement,
}

impl Letter {
    pub fn new(index: u32, element: GroupElement) -> Result<Self> {
        if index == 0 {
            return Err(Error::ContractViolation("letter index must be >= 1".into()));
        }
        if element.is_identity() {
            return Err(Error::ContractViolation(
                "a letter cannot carry the identity".into(),
            ));
        }
        Ok(Letter { index, element })
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn element(&self) -> &GroupElement {
        &self.element
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}:{}", self.index, self.element.literal())
    }
}

/// Reduced word of a free product: alternating nonidentity letters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct FiniteWord {
    letters: Vec<Letter>,
}

/// Pushes a letter onto a reduced letter stack, keeping it reduced.
fn push_letter(letters: &mut Vec<Letter>, index: u32, element: GroupElement) {
    if element.is_identity() {
        return;
    }
    match letters.last() {
        Some(top) if top.index == index => {
            let merged = top
                .element
                .op(&element)
                .expect("letters at one index share a descriptor within a family");
            letters.pop();
            if !merged.is_identity() {
                letters.push(Letter {
                    index,
                    element: merged,
                });
            }
        }
        _ => letters.push(Letter { index, element }),
    }
}

impl FiniteWord {
    pub fn empty() -> Self {
        FiniteWord::default()
    }

    /// The unique reduced normal form of a raw letter sequence. Identity
    /// elements are permitted in the input and get dropped; each element is
    /// validated against the family descriptor at its index.
    pub fn reduce(
        spec: &FamilySpec,
        raw: impl IntoIterator<Item = (u32, GroupElement)>,
    ) -> Result<Self> {
        let mut letters = Vec::new();
        for (index, element) in raw {
            let expected = spec.descriptor_at(index)?;
            if element.descriptor() != expected {
                return Err(Error::DescriptorMismatch(format!(
                    "letter at index {index} carries a {} element, the family expects {}",
                    element.descriptor(),
                    expected
                )));
            }
            push_letter(&mut letters, index, element);
        }
        Ok(FiniteWord { letters })
    }

    /// Single-letter word (empty if the element is the identity).
    pub fn letter(spec: &FamilySpec, index: u32, element: GroupElement) -> Result<Self> {
        FiniteWord::reduce(spec, [(index, element)])
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Number of syllables (letters in normal form).
    pub fn syllables(&self) -> usize {
        self.letters.len()
    }

    /// Product in the free product: cancels the maximal inverse boundary pair
    /// letter by letter, then merges the exposed same-factor letters; a merge
    /// that yields the identity is itself a cancellation, so the loop keeps
    /// going until the boundary is inert.
    pub fn concat(&self, other: &FiniteWord) -> FiniteWord {
        let u = &self.letters;
        let v = &other.letters;
        let mut i = u.len();
        let mut j = 0usize;
        let mut merged = None;
        while i > 0 && j < v.len() {
            let a = &u[i - 1];
            let b = &v[j];
            if a.index != b.index {
                break;
            }
            let prod = a
                .element
                .op(&b.element)
                .expect("letters at one index share a descriptor within a family");
            i -= 1;
            j += 1;
            if prod.is_identity() {
                continue;
            }
            merged = Some(Letter {
                index: a.index,
                element: prod,
            });
            break;
        }
        let mut letters = Vec::with_capacity(i + (v.len() - j) + 1);
        letters.extend_from_slice(&u[..i]);
        letters.extend(merged);
        letters.extend_from_slice(&v[j..]);
        FiniteWord { letters }
    }

    pub fn invert(&self) -> FiniteWord {
        FiniteWord {
            letters: self
                .letters
                .iter()
                .rev()
                .map(|l| Letter {
                    index: l.index,
                    element: l.element.inverse(),
                })
                .collect(),
        }
    }

    /// `m`-fold concatenation; the inverse word for negative `m`.
    pub fn power(&self, m: i64) -> FiniteWord {
        let base = if m < 0 { self.invert() } else { self.clone() };
        let mut out = FiniteWord::empty();
        for _ in 0..m.unsigned_abs() {
            out = out.concat(&base);
        }
        out
    }

    /// `c * self * c^-1`.
    pub fn conjugate_by(&self, c: &FiniteWord) -> FiniteWord {
        c.concat(self).concat(&c.invert())
    }

    /// Deletes every letter whose index fails the predicate, then reduces.
    /// For a fixed predicate this is a retraction homomorphism onto the
    /// subproduct of the kept factors.
    pub fn project_keep(&self, keep: impl Fn(u32) -> bool) -> FiniteWord {
        let mut letters = Vec::new();
        for l in &self.letters {
            if keep(l.index) {
                push_letter(&mut letters, l.index, l.element.clone());
            }
        }
        FiniteWord { letters }
    }

    /// The projection onto factors `1..=n`.
    pub fn project_le(&self, n: u32) -> FiniteWord {
        self.project_keep(|i| i <= n)
    }

    /// The bonding-map image: keeps only factors `> j`.
    pub fn project_gt(&self, j: u32) -> FiniteWord {
        self.project_keep(|i| i > j)
    }

    /// Writes `self = conjugator * core * conjugator^-1` with a cyclically
    /// reduced core: either at most one letter, or first and last letters
    /// from distinct factors.
    pub fn cyclic_reduce(&self) -> (FiniteWord, FiniteWord) {
        let mut core = self.clone();
        let mut conjugator = FiniteWord::empty();
        loop {
            let n = core.letters.len();
            if n <= 1 || core.letters[0].index != core.letters[n - 1].index {
                return (core, conjugator);
            }
            // core = f * mid * l with f, l in one factor:
            // conjugating by f^-1 leaves mid * (l f).
            let f = core.letters[0].clone();
            let l = core.letters[n - 1].clone();
            let merged = l
                .element
                .op(&f.element)
                .expect("letters at one index share a descriptor within a family");
            let mut mid: Vec<Letter> = core.letters[1..n - 1].to_vec();
            if !merged.is_identity() {
                mid.push(Letter {
                    index: l.index,
                    element: merged,
                });
            }
            conjugator.letters.push(f);
            core = FiniteWord { letters: mid };
        }
    }

    /// Witness that this word has finite order `> 1`: a torsion element of a
    /// free product is conjugate into a single factor, so the word is torsion
    /// iff its cyclically reduced core is one letter of finite order.
    pub fn torsion_witness(&self) -> Option<TorsionWitness> {
        let (core, conjugator) = self.cyclic_reduce();
        match core.letters.as_slice() {
            [single] => {
                let order = single.element.order()?;
                Some(TorsionWitness {
                    conjugator,
                    core: single.clone(),
                    order,
                })
            }
            _ => None,
        }
    }

    /// Canonical pairs form: `[index, element literal]` per letter.
    pub fn to_pairs(&self) -> Vec<(u32, String)> {
        self.letters
            .iter()
            .map(|l| (l.index, l.element.literal()))
            .collect()
    }

    pub fn from_pairs(spec: &FamilySpec, pairs: &[(u32, String)]) -> Result<Self> {
        let mut raw = Vec::with_capacity(pairs.len());
        for (index, literal) in pairs {
            let element = spec.descriptor_at(*index)?.parse_literal(literal)?;
            raw.push((*index, element));
        }
        FiniteWord::reduce(spec, raw)
    }

    /// Parses the canonical text form: letters `g<i>:<lit>` separated by
    /// whitespace or `·`, with `1` for the empty word. Brackets delimit block
    /// literals, so separators inside them are kept.
    pub fn parse_text(spec: &FamilySpec, text: &str) -> Result<Self> {
        let bad = |reason: String| Error::TextParse {
            input: text.to_string(),
            reason,
        };
        let mut chunks: Vec<&str> = Vec::new();
        let mut depth = 0i32;
        let mut start: Option<usize> = None;
        for (pos, c) in text.char_indices() {
            let is_sep = (c.is_whitespace() || c == '·') && depth == 0;
            if is_sep {
                if let Some(s) = start.take() {
                    chunks.push(&text[s..pos]);
                }
                continue;
            }
            if start.is_none() {
                start = Some(pos);
            }
            match c {
                '[' => depth += 1,
                ']' => {
                    depth -= 1;
                    if depth < 0 {
                        return Err(bad("unbalanced ']'".into()));
                    }
                }
                _ => {}
            }
        }
        if depth != 0 {
            return Err(bad("unbalanced '['".into()));
        }
        if let Some(s) = start {
            chunks.push(&text[s..]);
        }
        let mut raw = Vec::new();
        for chunk in chunks {
            if chunk == "1" {
                continue;
            }
            let rest = chunk
                .strip_prefix('g')
                .ok_or_else(|| bad(format!("expected g<i>:<element>, got {chunk:?}")))?;
            let (index, literal) = rest
                .split_once(':')
                .ok_or_else(|| bad(format!("expected g<i>:<element>, got {chunk:?}")))?;
            let index: u32 = index
                .parse()
                .map_err(|_| bad(format!("bad factor index in {chunk:?}")))?;
            let element = spec.descriptor_at(index)?.parse_literal(literal)?;
            raw.push((index, element));
        }
        FiniteWord::reduce(spec, raw)
    }
}

impl fmt::Display for FiniteWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                write!(f, "·")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl Serialize for FiniteWord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_pairs().serialize(serializer)
    }
}

/// Proof that a word is torsion: it equals `conjugator * core * conjugator^-1`
/// for a single letter `core` of the stated finite order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TorsionWitness {
    pub conjugator: FiniteWord,
    pub core: Letter,
    pub order: u64,
}

impl Serialize for Letter {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        (self.index, self.element.literal()).serialize(serializer)
    }
}

impl TorsionWitness {
    /// Rebuilds the witnessed word.
    pub fn reassemble(&self) -> FiniteWord {
        FiniteWord {
            letters: vec![self.core.clone()],
        }
        .conjugate_by(&self.conjugator)
    }
}

/// Lazily enumerates every reduced word with at most `max_syllables` syllables
/// over factor indices `1..=max_index`, drawing letters from the first
/// `per_factor_limit` enumerated nonidentity elements of each factor.
///
/// Order is deterministic: by syllable count, then index-major with elements
/// in factor enumeration order. The empty word comes first.
pub fn enumerate_words(
    spec: &FamilySpec,
    max_index: u32,
    max_syllables: u32,
    per_factor_limit: usize,
) -> WordEnumerator {
    let top = match spec.max_index() {
        Some(m) => max_index.min(m),
        None => max_index,
    };
    let mut pools = Vec::new();
    for index in 1..=top {
        let descriptor = spec.descriptor_at(index).expect("index clamped to family");
        let pool: Vec<GroupElement> = enumerate(descriptor, per_factor_limit + 1)
            .into_iter()
            .filter(|e| !e.is_identity())
            .take(per_factor_limit)
            .collect();
        if !pool.is_empty() {
            pools.push((index, pool));
        }
    }
    let longest = match pools.len() {
        0 => 0,
        1 => 1.min(max_syllables),
        _ => max_syllables,
    };
    WordEnumerator {
        pools,
        target: 0,
        longest,
        state: Vec::new(),
        emitted_empty: false,
        done: false,
    }
}

/// Iterator behind [`enumerate_words`].
pub struct WordEnumerator {
    pools: Vec<(u32, Vec<GroupElement>)>,
    /// current syllable count being generated
    target: u32,
    /// largest syllable count that can be realized
    longest: u32,
    /// one (pool slot, element slot) per letter position
    state: Vec<(usize, usize)>,
    emitted_empty: bool,
    done: bool,
}

impl WordEnumerator {
    fn word_from_state(&self) -> FiniteWord {
        let letters = self
            .state
            .iter()
            .map(|&(p, e)| Letter {
                index: self.pools[p].0,
                element: self.pools[p].1[e].clone(),
            })
            .collect();
        FiniteWord { letters }
    }

    /// First pool slot >= `from` that differs from the previous position's pool.
    fn first_pool(&self, position: usize, from: usize) -> Option<usize> {
        let prev = position.checked_sub(1).map(|p| self.state[p].0);
        (from..self.pools.len()).find(|&p| Some(p) != prev)
    }

    /// Fills positions `position..target` with their first valid choices.
    fn fill_from(&mut self, position: usize) -> bool {
        for pos in position..self.target as usize {
            match self.first_pool(pos, 0) {
                Some(p) => self.state.push((p, 0)),
                None => return false,
            }
        }
        true
    }

    /// Advances to the next assignment of the current length.
    fn bump(&mut self) -> bool {
        while let Some((pool, elem)) = self.state.pop() {
            let position = self.state.len();
            if elem + 1 < self.pools[pool].1.len() {
                self.state.push((pool, elem + 1));
                return self.fill_from(position + 1);
            }
            if let Some(p) = self.first_pool(position, pool + 1) {
                self.state.push((p, 0));
                return self.fill_from(position + 1);
            }
        }
        false
    }
}

impl Iterator for WordEnumerator {
    type Item = FiniteWord;

    fn next(&mut self) -> Option<FiniteWord> {
        if self.done {
            return None;
        }
        if !self.emitted_empty {
            self.emitted_empty = true;
            if self.longest == 0 {
                self.done = true;
            } else {
                self.target = 1;
                self.state.clear();
                if !self.fill_from(0) {
                    self.done = true;
                }
            }
            return Some(FiniteWord::empty());
        }
        let word = self.word_from_state();
        if !self.bump() {
            self.target += 1;
            self.state.clear();
            if self.target > self.longest || !self.fill_from(0) {
                self.done = true;
            }
        }
        Some(word)
    }
}

/// Involution census over an exhaustively enumerable family.
#[derive(Debug, Clone, Serialize)]
pub struct CensusReport {
    /// Words `u != 1` with `u^2 = 1`, up to the syllable bound.
    pub involutions: u64,
    /// Words with `u^2 != 1`.
    pub non_involutions: u64,
    /// All words counted, including the empty word.
    pub total_words: u64,
    pub syllable_bound: u32,
    pub sample_families: Option<FamilyProbe>,
}

/// Checks on the two standard families `(gh)^n` and `a^((gh)^n)`.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyProbe {
    pub n: u32,
    pub powers_distinct: bool,
    pub powers_non_involutions: bool,
    pub conjugates_distinct: bool,
    pub conjugates_are_involutions: bool,
}

/// Counts involutions among all reduced words with at most `max_syllables`
/// syllables, and probes the families `(gh)^n` / `a^((gh)^n)` for the first
/// available nonidentity letters g, h and involution a.
///
/// Requires a finite family of finite factors.
pub fn involution_census(
    spec: &FamilySpec,
    max_syllables: u32,
    probe_n: u32,
) -> Result<CensusReport> {
    let max_index = spec.max_index().ok_or_else(|| {
        Error::Unsupported("involution census needs a finite family".into())
    })?;
    let mut largest = 0usize;
    for index in 1..=max_index {
        match spec.descriptor_at(index)?.cardinality() {
            Cardinality::Finite(n) => largest = largest.max(n as usize),
            _ => {
                return Err(Error::Unsupported(format!(
                    "involution census needs finite factors, index {index} is infinite"
                )))
            }
        }
    }
    let mut involutions = 0u64;
    let mut non_involutions = 0u64;
    let mut total = 0u64;
    for word in enumerate_words(spec, max_index, max_syllables, largest) {
        total += 1;
        if word.is_empty() {
            continue;
        }
        if word.concat(&word).is_empty() {
            involutions += 1;
        } else {
            non_involutions += 1;
        }
    }
    let sample_families = family_probe(spec, max_index, largest, probe_n)?;
    Ok(CensusReport {
        involutions,
        non_involutions,
        total_words: total,
        syllable_bound: max_syllables,
        sample_families,
    })
}

fn family_probe(
    spec: &FamilySpec,
    max_index: u32,
    pool: usize,
    probe_n: u32,
) -> Result<Option<FamilyProbe>> {
    if max_index < 2 || probe_n == 0 {
        return Ok(None);
    }
    let first_nonidentity = |index: u32| -> Result<Option<GroupElement>> {
        Ok(enumerate(spec.descriptor_at(index)?, pool + 1)
            .into_iter()
            .find(|e| !e.is_identity()))
    };
    let (Some(g), Some(h)) = (first_nonidentity(1)?, first_nonidentity(2)?) else {
        return Ok(None);
    };
    let mut involution = None;
    'search: for index in 1..=max_index {
        for e in enumerate(spec.descriptor_at(index)?, pool + 1) {
            if e.is_involution() {
                involution = Some((index, e));
                break 'search;
            }
        }
    }
    let Some((a_index, a)) = involution else {
        return Ok(None);
    };
    let gh = FiniteWord::reduce(spec, [(1, g), (2, h)])?;
    let a = FiniteWord::letter(spec, a_index, a)?;

    let mut powers = HashSet::new();
    let mut conjugates = HashSet::new();
    let mut powers_non_involutions = true;
    let mut conjugates_are_involutions = true;
    let mut power = FiniteWord::empty();
    for _ in 1..=probe_n {
        power = power.concat(&gh);
        if power.concat(&power).is_empty() {
            powers_non_involutions = false;
        }
        let conj = a.conjugate_by(&power);
        if !conj.concat(&conj).is_empty() {
            conjugates_are_involutions = false;
        }
        powers.insert(power.clone());
        conjugates.insert(conj);
    }
    Ok(Some(FamilyProbe {
        n: probe_n,
        powers_distinct: powers.len() == probe_n as usize,
        powers_non_involutions,
        conjugates_distinct: conjugates.len() == probe_n as usize,
        conjugates_are_involutions,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::FactorDescriptor;
    use crate::oracle;
    use proptest::prelude::*;

    fn zz() -> FamilySpec {
        FamilySpec::constant(FactorDescriptor::Integers)
    }

    fn c3c2() -> FamilySpec {
        FamilySpec::finite(vec![
            FactorDescriptor::cyclic(3).unwrap(),
            FactorDescriptor::cyclic(2).unwrap(),
        ])
    }

    fn word(spec: &FamilySpec, raw: &[(u32, i64)]) -> FiniteWord {
        FiniteWord::reduce(
            spec,
            raw.iter().map(|&(i, v)| {
                let d = spec.descriptor_at(i).unwrap();
                (i, d.parse_literal(&v.to_string()).unwrap())
            }),
        )
        .unwrap()
    }

    #[test]
    fn reduce_examples() {
        let spec = zz();
        assert_eq!(word(&spec, &[(1, 2), (1, -2), (2, 5)]), word(&spec, &[(2, 5)]));
        assert_eq!(
            word(&spec, &[(1, 1), (2, 3), (2, -1), (1, 4)]).to_pairs(),
            vec![(1, "1".into()), (2, "2".into()), (1, "4".into())]
        );
        assert!(word(&spec, &[]).is_empty());
    }

    #[test]
    fn reduce_is_idempotent() {
        let spec = zz();
        let u = word(&spec, &[(1, 1), (2, 3), (1, -2), (1, 2), (3, 1)]);
        let again = FiniteWord::reduce(
            &spec,
            u.letters().iter().map(|l| (l.index(), l.element().clone())),
        )
        .unwrap();
        assert_eq!(u, again);
    }

    #[test]
    fn concat_examples() {
        let spec = zz();
        let u = word(&spec, &[(1, 1), (2, 1)]);
        let v = word(&spec, &[(2, -1), (1, 1)]);
        assert_eq!(u.concat(&v), word(&spec, &[(1, 2)]));

        let u = word(&spec, &[(1, 1), (2, 3)]);
        let v = word(&spec, &[(2, -1), (3, 2)]);
        assert_eq!(u.concat(&v), word(&spec, &[(1, 1), (2, 2), (3, 2)]));

        let u = word(&spec, &[(1, 5), (2, -2), (3, 1)]);
        assert!(u.concat(&u.invert()).is_empty());
    }

    #[test]
    fn invert_examples() {
        let spec = zz();
        let u = word(&spec, &[(1, 1), (2, 3)]);
        assert_eq!(u.invert().to_pairs(), vec![(2, "-3".into()), (1, "-1".into())]);
        assert!(FiniteWord::empty().invert().is_empty());

        let c3 = FamilySpec::constant(FactorDescriptor::cyclic(3).unwrap());
        let single = word(&c3, &[(3, 1)]);
        assert_eq!(single.invert(), word(&c3, &[(3, 2)]));
    }

    #[test]
    fn power_examples() {
        let spec = zz();
        assert_eq!(word(&spec, &[(1, 1)]).power(3), word(&spec, &[(1, 3)]));
        let spec2 = c3c2();
        let xy = word(&spec2, &[(1, 1), (2, 1)]);
        assert_eq!(xy.power(2).syllables(), 4);
        let u = word(&spec, &[(1, 2), (2, 1)]);
        assert_eq!(u.power(-1), u.invert());
        assert!(u.power(0).is_empty());
    }

    #[test]
    fn projection_examples() {
        let spec = zz();
        let u = word(&spec, &[(1, 1), (2, 1), (1, 1)]);
        assert_eq!(u.project_le(1), word(&spec, &[(1, 2)]));
        assert!(word(&spec, &[(1, 5)]).project_gt(1).is_empty());
        assert_eq!(u.project_keep(|_| true), u);
    }

    #[test]
    fn cyclic_reduce_examples() {
        let spec = c3c2();
        // x^2 y x: conjugating by x^2 exposes the core y
        let u = word(&spec, &[(1, 2), (2, 1), (1, 1)]);
        let (core, conjugator) = u.cyclic_reduce();
        assert_eq!(core, word(&spec, &[(2, 1)]));
        assert_eq!(conjugator, word(&spec, &[(1, 2)]));
        assert_eq!(core.conjugate_by(&conjugator), u);

        let xy = word(&spec, &[(1, 1), (2, 1)]);
        let (core, conjugator) = xy.cyclic_reduce();
        assert_eq!(core, xy);
        assert!(conjugator.is_empty());

        let (core, conjugator) = FiniteWord::empty().cyclic_reduce();
        assert!(core.is_empty() && conjugator.is_empty());
    }

    #[test]
    fn torsion_examples() {
        let spec = c3c2();
        let u = word(&spec, &[(1, 2), (2, 1), (1, 1)]);
        let witness = u.torsion_witness().expect("x^2 y x is torsion");
        assert_eq!(witness.order, 2);
        assert_eq!(witness.reassemble(), u);
        // cross-check against the power oracle
        assert_eq!(oracle::smallest_vanishing_power(&u, 12), Some(2));

        let xy = word(&spec, &[(1, 1), (2, 1)]);
        assert!(xy.torsion_witness().is_none());
        assert_eq!(oracle::smallest_vanishing_power(&xy, 12), None);

        let z = word(&zz(), &[(1, 7)]);
        assert!(z.torsion_witness().is_none());
    }

    #[test]
    fn enumerate_words_examples() {
        let spec = FamilySpec::finite(vec![
            FactorDescriptor::cyclic(2).unwrap(),
            FactorDescriptor::cyclic(3).unwrap(),
        ]);
        let all: Vec<FiniteWord> = enumerate_words(&spec, 2, 1, 10).collect();
        // empty word first, then the three one-syllable words y; x; x^2
        assert_eq!(all.len(), 4);
        assert!(all[0].is_empty());
        let rendered: Vec<String> = all[1..].iter().map(|w| w.to_string()).collect();
        assert_eq!(rendered, ["g1:1", "g2:1", "g2:2"]);

        let only_empty: Vec<FiniteWord> = enumerate_words(&spec, 2, 0, 10).collect();
        assert_eq!(only_empty, vec![FiniteWord::empty()]);

        let two_syllables = enumerate_words(&zz(), 2, 2, 2)
            .filter(|w| w.syllables() == 2)
            .count();
        assert_eq!(two_syllables, 8);
    }

    #[test]
    fn enumerate_words_has_no_duplicates() {
        let spec = c3c2();
        let all: Vec<FiniteWord> = enumerate_words(&spec, 2, 5, 10).collect();
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(all.len(), distinct.len());
    }

    #[test]
    fn census_counts() {
        let spec = FamilySpec::finite(vec![
            FactorDescriptor::cyclic(2).unwrap(),
            FactorDescriptor::cyclic(3).unwrap(),
        ]);
        let report = involution_census(&spec, 1, 10).unwrap();
        assert_eq!(report.involutions, 1);
        let report = involution_census(&spec, 3, 50).unwrap();
        assert_eq!(report.involutions, 3);
        let probe = report.sample_families.expect("C2 provides an involution");
        assert!(probe.powers_distinct && probe.powers_non_involutions);
        assert!(probe.conjugates_distinct && probe.conjugates_are_involutions);
    }

    #[test]
    fn census_monotone_in_syllable_bound() {
        let spec = c3c2();
        let mut last = 0;
        for bound in 0..=5 {
            let report = involution_census(&spec, bound, 0).unwrap();
            assert!(report.involutions >= last);
            last = report.involutions;
        }
    }

    #[test]
    fn census_rejects_infinite_factors() {
        assert!(matches!(
            involution_census(&zz(), 2, 0),
            Err(Error::Unsupported(_))
        ));
        let infinite_factor = FamilySpec::finite(vec![FactorDescriptor::Integers]);
        assert!(matches!(
            involution_census(&infinite_factor, 2, 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn text_and_pairs_round_trip() {
        let spec = zz();
        let u = word(&spec, &[(1, 1), (2, 3), (1, 4)]);
        assert_eq!(u.to_string(), "g1:1·g2:3·g1:4");
        assert_eq!(FiniteWord::parse_text(&spec, "g1:1·g2:3·g1:4").unwrap(), u);
        assert_eq!(FiniteWord::parse_text(&spec, "g1:1 g2:3 g1:4").unwrap(), u);
        assert_eq!(FiniteWord::parse_text(&spec, "1").unwrap(), FiniteWord::empty());
        assert_eq!(FiniteWord::from_pairs(&spec, &u.to_pairs()).unwrap(), u);
        assert!(FiniteWord::parse_text(&spec, "h1:1").is_err());

        let json = serde_json::to_string(&u).unwrap();
        assert_eq!(json, r#"[[1,"1"],[2,"3"],[1,"4"]]"#);
    }

    #[test]
    fn reduce_validates_descriptors() {
        let spec = c3c2();
        let wrong = GroupElement::integer(1);
        assert!(matches!(
            FiniteWord::reduce(&spec, [(1, wrong)]),
            Err(Error::DescriptorMismatch(_))
        ));
    }

    // --- property tests ---

    fn mixed_family() -> FamilySpec {
        FamilySpec::finite(vec![
            FactorDescriptor::Integers,
            FactorDescriptor::cyclic(2).unwrap(),
            FactorDescriptor::cyclic(3).unwrap(),
            FactorDescriptor::cyclic(5).unwrap(),
            FactorDescriptor::symmetric3(),
            FactorDescriptor::Rationals,
        ])
    }

    fn arb_raw() -> impl Strategy<Value = Vec<(u32, usize)>> {
        proptest::collection::vec((1u32..=6, 0usize..8), 0..12)
    }

    fn realize(spec: &FamilySpec, raw: &[(u32, usize)]) -> Vec<(u32, GroupElement)> {
        raw.iter()
            .map(|&(i, e)| {
                let pool = enumerate(spec.descriptor_at(i).unwrap(), 8);
                (i, pool[e % pool.len()].clone())
            })
            .collect()
    }

    proptest! {
        #[test]
        fn reduce_matches_fixpoint_oracle(raw in arb_raw()) {
            let spec = mixed_family();
            let raw = realize(&spec, &raw);
            let reduced = FiniteWord::reduce(&spec, raw.clone()).unwrap();
            let expected = oracle::naive_reduce(&raw);
            prop_assert_eq!(reduced.to_pairs(),
                expected.iter().map(|(i, e)| (*i, e.literal())).collect::<Vec<_>>());
        }

        #[test]
        fn concat_equals_reduce_of_concatenation(a in arb_raw(), b in arb_raw()) {
            let spec = mixed_family();
            let (a, b) = (realize(&spec, &a), realize(&spec, &b));
            let u = FiniteWord::reduce(&spec, a.clone()).unwrap();
            let v = FiniteWord::reduce(&spec, b.clone()).unwrap();
            let joined = FiniteWord::reduce(&spec, a.into_iter().chain(b)).unwrap();
            prop_assert_eq!(u.concat(&v), joined);
        }

        #[test]
        fn concat_is_associative(a in arb_raw(), b in arb_raw(), c in arb_raw()) {
            let spec = mixed_family();
            let u = FiniteWord::reduce(&spec, realize(&spec, &a)).unwrap();
            let v = FiniteWord::reduce(&spec, realize(&spec, &b)).unwrap();
            let w = FiniteWord::reduce(&spec, realize(&spec, &c)).unwrap();
            prop_assert_eq!(u.concat(&v).concat(&w), u.concat(&v.concat(&w)));
        }

        #[test]
        fn projection_is_a_homomorphism(a in arb_raw(), b in arb_raw(), n in 0u32..7) {
            let spec = mixed_family();
            let u = FiniteWord::reduce(&spec, realize(&spec, &a)).unwrap();
            let v = FiniteWord::reduce(&spec, realize(&spec, &b)).unwrap();
            prop_assert_eq!(
                u.concat(&v).project_le(n),
                u.project_le(n).concat(&v.project_le(n))
            );
        }

        #[test]
        fn projections_are_compatible(a in arb_raw(), n in 0u32..7) {
            let spec = mixed_family();
            let u = FiniteWord::reduce(&spec, realize(&spec, &a)).unwrap();
            prop_assert_eq!(u.project_le(n + 1).project_le(n), u.project_le(n));
        }

        #[test]
        fn cyclic_reduce_reassembles(a in arb_raw()) {
            let spec = mixed_family();
            let u = FiniteWord::reduce(&spec, realize(&spec, &a)).unwrap();
            let (core, conjugator) = u.cyclic_reduce();
            prop_assert_eq!(core.conjugate_by(&conjugator), u);
            if core.syllables() >= 2 {
                let letters = core.letters();
                prop_assert_ne!(letters[0].index(), letters[letters.len() - 1].index());
            }
        }
    }

    #[test]
    fn torsion_agrees_with_power_oracle_exhaustively() {
        let spec = c3c2();
        for u in enumerate_words(&spec, 2, 6, 10) {
            let by_witness = u.torsion_witness().map(|w| w.order);
            let by_oracle = oracle::smallest_vanishing_power(&u, 12);
            assert_eq!(by_witness, by_oracle, "disagree on {u}");
            if let Some(w) = u.torsion_witness() {
                assert_eq!(w.reassemble(), u);
            }
        }
    }
}
