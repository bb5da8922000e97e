//! Words of the topologist's product, represented by their projections.
//!
//! A general element of the topologist's product is an infinite word over a
//! countable linear order; that is not finitely representable. What is
//! representable is a schema: a finite tree whose projections to every finite
//! free product are computable. The projection family of a schema word is
//! compatible (`project_le(n)` of the depth-`n+1` projection is the depth-`n`
//! projection), which makes projections a faithful proxy for equality:
//! differing projections certify inequality in the product, while equality of
//! all computed projections is only ever reported as "unknown up to depth" —
//! structural identity of schema normal forms is the one way to certify
//! equality outright.
//!
//! The bonding map [`ProjectiveWord::tau`] deletes the first `j` factors and
//! lands in the tail product over indices `> j`. Equality search under
//! iterated bonding maps ([`ProjectiveWord::eq_in_archipelago`]) is the
//! calculus of the archipelago quotient.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factors::{FamilySpec, GroupElement};
use crate::morphisms::{BlockPartition, LetterMap, Permutation};
use crate::words::FiniteWord;

/// Default cap on the letters any single projection may expand to.
pub const DEFAULT_WORD_BUDGET: u64 = 1_000_000;

/// Exponent rule of a nested-power schema, as a function of the level index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExponentRule {
    /// `e(k) = k + c`
    IndexPlus(u32),
    /// `e(k) = c`, `c >= 1`
    Const(u32),
}

impl ExponentRule {
    pub fn at(&self, level: u32) -> u64 {
        match self {
            ExponentRule::IndexPlus(c) => level as u64 + *c as u64,
            ExponentRule::Const(c) => *c as u64,
        }
    }
}

/// The word `w(s) = a_s (w(s+1))^{e(s)}`, one letter per level, with level `k`
/// placing a letter in factor `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedPowerSchema {
    /// Factor index of the outermost level.
    pub start: u32,
    /// Element literal of the letter placed at every level.
    pub element_literal: String,
    pub exponent: ExponentRule,
}

impl NestedPowerSchema {
    /// Letters the truncation at depth `n` expands to, before any cancellation.
    fn expanded_size(&self, n: u32) -> Option<u64> {
        if n < self.start {
            return Some(0);
        }
        let mut size: u64 = 1;
        for level in (self.start..n).rev() {
            size = self.exponent.at(level).checked_mul(size)?.checked_add(1)?;
        }
        Some(size)
    }

    fn letter_at(&self, spec: &FamilySpec, level: u32) -> Result<GroupElement> {
        let element = spec.descriptor_at(level)?.parse_literal(&self.element_literal)?;
        if element.is_identity() {
            return Err(Error::ContractViolation(format!(
                "nested schema letter at level {level} is the identity"
            )));
        }
        Ok(element)
    }

    /// Expands the truncation at depth `n`: `w(n) = a_n`, then
    /// `w(k) = a_k (w(k+1))^{e(k)}` upward to `start`.
    fn expand(&self, spec: &FamilySpec, n: u32, budget: u64) -> Result<FiniteWord> {
        if n < self.start {
            return Ok(FiniteWord::empty());
        }
        match self.expanded_size(n) {
            Some(size) if size <= budget => {}
            oversize => {
                return Err(Error::BudgetExceeded {
                    depth: n,
                    required: oversize.unwrap_or(u64::MAX),
                    budget,
                })
            }
        }
        let mut word = FiniteWord::letter(spec, n, self.letter_at(spec, n)?)?;
        for level in (self.start..n).rev() {
            let head = FiniteWord::letter(spec, level, self.letter_at(spec, level)?)?;
            word = head.concat(&word.power(self.exponent.at(level) as i64));
        }
        Ok(word)
    }
}

/// The triangular coordinate word: position `m` carries coordinate `r` where
/// `m` is the `r`-th entry of its triangular block. A finite coordinate list
/// is continued by repeating its last entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateWord {
    coords: Vec<GroupElement>,
}

impl CoordinateWord {
    fn new(mut coords: Vec<GroupElement>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::ContractViolation(
                "coordinate word needs at least one coordinate".into(),
            ));
        }
        if coords.iter().any(|c| c.descriptor() != coords[0].descriptor()) {
            return Err(Error::DescriptorMismatch(
                "coordinates must come from a single factor group".into(),
            ));
        }
        // trailing repeats of the last coordinate are the tail rule already
        while coords.len() >= 2 && coords[coords.len() - 1] == coords[coords.len() - 2] {
            coords.pop();
        }
        Ok(CoordinateWord { coords })
    }

    pub fn coords(&self) -> &[GroupElement] {
        &self.coords
    }

    fn coordinate(&self, j: u64) -> &GroupElement {
        let i = (j as usize).min(self.coords.len()) - 1;
        &self.coords[i]
    }

    /// Coordinate slot of absolute position `m >= 1`: with `T(t)` the `t`-th
    /// triangular number, position `m = T(t-1) + r` carries coordinate `r`.
    fn slot(m: u64) -> u64 {
        let mut t = ((((8 * m + 1) as f64).sqrt() - 1.0) / 2.0).ceil() as u64;
        while t * (t + 1) / 2 < m {
            t += 1;
        }
        while t > 1 && (t - 1) * t / 2 >= m {
            t -= 1;
        }
        m - (t - 1) * t / 2
    }

    fn project(&self, spec: &FamilySpec, base: u32, n: u32) -> Result<FiniteWord> {
        let mut raw = Vec::new();
        for m in base..=n {
            let g = self.coordinate(Self::slot(m as u64)).clone();
            if g.descriptor() != spec.descriptor_at(m)? {
                return Err(Error::DescriptorMismatch(format!(
                    "coordinate of {} cannot sit in factor {}",
                    g.descriptor(),
                    spec.descriptor_at(m)?
                )));
            }
            raw.push((m, g));
        }
        Ok(FiniteWord::from_raw_unchecked(raw))
    }
}

/// Schema tree of a projective word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schema {
    Finite(FiniteWord),
    Nested(NestedPowerSchema),
    Coordinates(CoordinateWord),
    Product(Vec<Schema>),
    Inverse(Box<Schema>),
    Power(Box<Schema>, i64),
    /// Letter indices relabeled through a finite-support permutation.
    /// `inner_spec` is the family the child schema lives over.
    Permuted {
        permutation: Permutation,
        inner_spec: Arc<FamilySpec>,
        child: Box<Schema>,
    },
    /// Consecutive index blocks collapsed into single block-group letters.
    Regrouped {
        partition: BlockPartition,
        inner_spec: Arc<FamilySpec>,
        child: Box<Schema>,
    },
}

/// An element of the topologist's product over the factors `>= base_index`,
/// given by a schema whose projections are computable at every depth.
#[derive(Debug, Clone)]
pub struct ProjectiveWord {
    spec: Arc<FamilySpec>,
    base_index: u32,
    budget: u64,
    schema: Schema,
}

impl PartialEq for ProjectiveWord {
    fn eq(&self, other: &Self) -> bool {
        // the budget is an evaluation knob, not part of the value
        self.spec == other.spec
            && self.base_index == other.base_index
            && self.schema == other.schema
    }
}

impl Eq for ProjectiveWord {}

impl ProjectiveWord {
    pub(crate) fn from_parts(
        spec: Arc<FamilySpec>,
        base_index: u32,
        budget: u64,
        schema: Schema,
    ) -> Self {
        ProjectiveWord {
            spec,
            base_index,
            budget,
            schema,
        }
    }

    /// The empty word.
    pub fn empty(spec: Arc<FamilySpec>) -> Self {
        ProjectiveWord {
            spec,
            base_index: 1,
            budget: DEFAULT_WORD_BUDGET,
            schema: Schema::Finite(FiniteWord::empty()),
        }
    }

    /// A finite word as a constant projection family.
    pub fn finite(spec: Arc<FamilySpec>, word: FiniteWord) -> Result<Self> {
        for l in word.letters() {
            let expected = spec.descriptor_at(l.index())?;
            if l.element().descriptor() != expected {
                return Err(Error::DescriptorMismatch(format!(
                    "letter at index {} carries a {} element, the family expects {}",
                    l.index(),
                    l.element().descriptor(),
                    expected
                )));
            }
        }
        Ok(ProjectiveWord {
            spec,
            base_index: 1,
            budget: DEFAULT_WORD_BUDGET,
            schema: Schema::Finite(word),
        })
    }

    /// The nested-power word `a_s (a_{s+1} (..)^{e(s+1)})^{e(s)}`.
    pub fn nested(
        spec: Arc<FamilySpec>,
        start: u32,
        element_literal: impl Into<String>,
        exponent: ExponentRule,
    ) -> Result<Self> {
        if start == 0 {
            return Err(Error::ContractViolation("levels start at index 1".into()));
        }
        if let ExponentRule::Const(0) = exponent {
            return Err(Error::ContractViolation("exponents must be >= 1".into()));
        }
        let schema = NestedPowerSchema {
            start,
            element_literal: element_literal.into(),
            exponent,
        };
        schema.letter_at(&spec, start)?;
        Ok(ProjectiveWord {
            spec,
            base_index: 1,
            budget: DEFAULT_WORD_BUDGET,
            schema: Schema::Nested(schema),
        })
    }

    /// The triangular coordinate word of the given coordinate sequence
    /// (continued by repeating its last entry). The family must be constant
    /// and match the coordinates' factor group.
    pub fn coordinates(spec: Arc<FamilySpec>, coords: Vec<GroupElement>) -> Result<Self> {
        let word = CoordinateWord::new(coords)?;
        if !spec.is_constant() {
            return Err(Error::Unsupported(
                "coordinate words need a constant family".into(),
            ));
        }
        if spec.descriptor_at(1)? != word.coords[0].descriptor() {
            return Err(Error::DescriptorMismatch(format!(
                "coordinates of {} over a family of {}",
                word.coords[0].descriptor(),
                spec.descriptor_at(1)?
            )));
        }
        Ok(ProjectiveWord {
            spec,
            base_index: 1,
            budget: DEFAULT_WORD_BUDGET,
            schema: Schema::Coordinates(word),
        })
    }

    pub fn spec(&self) -> &Arc<FamilySpec> {
        &self.spec
    }

    pub fn base_index(&self) -> u32 {
        self.base_index
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    fn check_compatible(&self, other: &ProjectiveWord) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::ContractViolation(
                "words live over different families".into(),
            ));
        }
        if self.base_index != other.base_index {
            return Err(Error::ContractViolation(format!(
                "base index mismatch: {} vs {}",
                self.base_index, other.base_index
            )));
        }
        Ok(())
    }

    /// Product in the topologist's product; projections concatenate.
    pub fn product(&self, other: &ProjectiveWord) -> Result<ProjectiveWord> {
        self.check_compatible(other)?;
        Ok(ProjectiveWord {
            spec: self.spec.clone(),
            base_index: self.base_index,
            budget: self.budget.min(other.budget),
            schema: Schema::Product(vec![self.schema.clone(), other.schema.clone()]),
        })
    }

    pub fn inverse(&self) -> ProjectiveWord {
        ProjectiveWord {
            spec: self.spec.clone(),
            base_index: self.base_index,
            budget: self.budget,
            schema: Schema::Inverse(Box::new(self.schema.clone())),
        }
    }

    pub fn power(&self, m: i64) -> ProjectiveWord {
        ProjectiveWord {
            spec: self.spec.clone(),
            base_index: self.base_index,
            budget: self.budget,
            schema: Schema::Power(Box::new(self.schema.clone()), m),
        }
    }

    /// The projection `p_n`: the reduced finite word over indices in
    /// `[base_index, n]`.
    pub fn projection(&self, n: u32) -> Result<FiniteWord> {
        if n + 1 < self.base_index {
            return Err(Error::ContractViolation(format!(
                "projection depth {n} below base index {}",
                self.base_index
            )));
        }
        project_schema(&self.schema, &self.spec, self.base_index, n, self.budget)
    }

    /// The bonding map to the tail product over indices `> j`: deletes every
    /// letter with index `<= j`. Requires `j >= base_index - 1`;
    /// `tau(base_index - 1)` is the identity.
    pub fn tau(&self, j: u32) -> Result<ProjectiveWord> {
        if j + 1 < self.base_index {
            return Err(Error::ContractViolation(format!(
                "bonding level {j} below base index {}",
                self.base_index
            )));
        }
        let schema = tau_schema(&self.schema, j)?;
        Ok(ProjectiveWord {
            spec: self.spec.clone(),
            base_index: j + 1,
            budget: self.budget,
            schema: normalize(schema),
        })
    }

    /// Schema normal form: base-filtered, products flattened, finite
    /// subtrees folded, adjacent finite leaves merged, powers combined.
    pub fn normal_form(&self) -> Result<Schema> {
        Ok(normalize(tau_schema(&self.schema, self.base_index - 1)?))
    }

    /// Structural equality of schema normal forms. Sound for equality in the
    /// topologist's product; never complete.
    pub fn structurally_equal(&self, other: &ProjectiveWord) -> Result<bool> {
        Ok(self.spec == other.spec
            && self.base_index == other.base_index
            && self.normal_form()? == other.normal_form()?)
    }

    /// Equality verdict in the topologist's product, scanning projections up
    /// to `max_depth`. Projection agreement alone is never reported as
    /// equality: only structural identity of schema normal forms certifies.
    pub fn eq_in_product(&self, other: &ProjectiveWord, max_depth: u32) -> Result<Verdict> {
        self.check_compatible(other)?;
        if self.normal_form()? == other.normal_form()? {
            return Ok(Verdict::EqualCertified {
                level: self.base_index - 1,
                proof: Proof::Structural,
            });
        }
        for n in self.base_index..=max_depth {
            if self.projection(n)? != other.projection(n)? {
                return Ok(Verdict::DistinctWitness { depth: n });
            }
        }
        Ok(Verdict::UnknownUpTo {
            max_level: self.base_index - 1,
            max_depth,
            separated_at_every_level: false,
        })
    }

    /// Equality verdict in the archipelago quotient: searches bonding levels
    /// `base_index - 1 ..= max_level` for a structural match of the images.
    /// Inequality in the quotient is never certified; exhausting the levels
    /// yields an unknown verdict that records whether every level separated.
    pub fn eq_in_archipelago(
        &self,
        other: &ProjectiveWord,
        max_level: u32,
        max_depth: u32,
    ) -> Result<Verdict> {
        self.check_compatible(other)?;
        let mut separated = 0u32;
        let mut levels = 0u32;
        for j in (self.base_index - 1)..=max_level {
            levels += 1;
            match self.tau(j)?.eq_in_product(&other.tau(j)?, max_depth)? {
                Verdict::EqualCertified { .. } => {
                    return Ok(Verdict::EqualCertified {
                        level: j,
                        proof: Proof::Structural,
                    })
                }
                Verdict::DistinctWitness { .. } => separated += 1,
                Verdict::UnknownUpTo { .. } => {}
            }
        }
        Ok(Verdict::UnknownUpTo {
            max_level,
            max_depth,
            separated_at_every_level: levels > 0 && separated == levels,
        })
    }

    /// Divisibility certificates for the standard nested word: for each
    /// `2 <= n <= n_max`, certifies structurally that `tau(n-1)` of this word
    /// is the `E(n)`-th power of the level-`n` tail word, where `E(n)` is the
    /// product of the exponents of the removed levels, and cross-checks the
    /// projections of both sides up to `check_depth` by direct expansion.
    pub fn divisible_chain(&self, n_max: u32, check_depth: u32) -> Result<Vec<DivisibilityStep>> {
        let Schema::Nested(nested) = &self.schema else {
            return Err(Error::Unsupported(
                "divisibility chain needs a nested-power schema".into(),
            ));
        };
        if nested.exponent != ExponentRule::IndexPlus(1) {
            return Err(Error::Unsupported(
                "divisibility chain needs the exponent rule e(k) = k + 1".into(),
            ));
        }
        let mut steps = Vec::new();
        let mut exponent: u64 = 1;
        for n in (nested.start + 1)..=(n_max.max(nested.start)) {
            // removing levels start..n multiplies the exponents e(start)..e(n-1)
            exponent = exponent
                .checked_mul(nested.exponent.at(n - 1))
                .ok_or(Error::BudgetExceeded {
                    depth: n,
                    required: u64::MAX,
                    budget: self.budget,
                })?;
            let lhs = self.tau(n - 1)?;
            let tail = ProjectiveWord::nested(
                self.spec.clone(),
                n,
                nested.element_literal.clone(),
                nested.exponent,
            )?
            .with_budget(self.budget);
            let rhs_word = tail.power(exponent as i64);
            let rhs = rhs_word.tau(n - 1)?;
            let structural = lhs.normal_form()? == rhs.normal_form()?;
            let mut projections_agree = true;
            for depth in n..=check_depth.max(n) {
                if lhs.projection(depth)? != tail.projection(depth)?.power(exponent as i64) {
                    projections_agree = false;
                    break;
                }
            }
            steps.push(DivisibilityStep {
                level: n - 1,
                root_start: n,
                exponent,
                structural,
                projections_agree,
                checked_to_depth: check_depth.max(n),
            });
        }
        Ok(steps)
    }
}

/// One certified step of the divisibility chain, at bonding level `level`:
/// the image is the `exponent`-th power of the nested tail word starting at
/// `root_start`.
#[derive(Debug, Clone, Serialize)]
pub struct DivisibilityStep {
    pub level: u32,
    pub root_start: u32,
    pub exponent: u64,
    pub structural: bool,
    pub projections_agree: bool,
    pub checked_to_depth: u32,
}

/// Three-valued equality certificate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    /// Equal, certified at the given bonding level.
    EqualCertified { level: u32, proof: Proof },
    /// The depth-`depth` projections differ, so the words differ in the
    /// topologist's product.
    DistinctWitness { depth: u32 },
    /// Neither certified equal nor witnessed distinct within the bounds.
    UnknownUpTo {
        max_level: u32,
        max_depth: u32,
        separated_at_every_level: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proof {
    /// Schema normal forms coincide.
    Structural,
    /// All projections agreed up to the given depth (families only).
    DepthChecked { depth: u32 },
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::EqualCertified { level, proof } => match proof {
                Proof::Structural => write!(f, "equal (structural certificate at level {level})"),
                Proof::DepthChecked { depth } => {
                    write!(f, "equal (checked to depth {depth} at level {level})")
                }
            },
            Verdict::DistinctWitness { depth } => {
                write!(f, "distinct (projections differ at depth {depth})")
            }
            Verdict::UnknownUpTo {
                max_level,
                max_depth,
                separated_at_every_level,
            } => {
                if *separated_at_every_level {
                    write!(
                        f,
                        "not equal up to bounds (every level <= {max_level} separated within depth {max_depth})"
                    )
                } else {
                    write!(f, "unknown up to level {max_level}, depth {max_depth}")
                }
            }
        }
    }
}

/// A per-depth family of finite words with no compatibility guarantee.
///
/// This is the image type of lifted letter maps: a letter replacement applied
/// to each projection separately. Boundary merges make the resulting family
/// genuinely incompatible in general, which is why this type carries no
/// compatibility invariant and is kept distinct from [`ProjectiveWord`].
#[derive(Debug, Clone)]
pub struct DepthFamily {
    base_index: u32,
    source: DepthFamilySource,
}

#[derive(Debug, Clone)]
enum DepthFamilySource {
    Constant(FiniteWord),
    Lift {
        map: Arc<LetterMap>,
        word: ProjectiveWord,
    },
    Concat(Vec<DepthFamily>),
}

impl DepthFamily {
    pub fn constant(base_index: u32, word: FiniteWord) -> Self {
        DepthFamily {
            base_index,
            source: DepthFamilySource::Constant(word),
        }
    }

    pub(crate) fn lift(map: Arc<LetterMap>, word: ProjectiveWord) -> Self {
        DepthFamily {
            base_index: word.base_index(),
            source: DepthFamilySource::Lift { map, word },
        }
    }

    /// Depth-wise concatenation of families.
    pub fn concat(children: Vec<DepthFamily>) -> Result<Self> {
        let base_index = children.first().map(|c| c.base_index).ok_or_else(|| {
            Error::ContractViolation("concatenation of zero families".into())
        })?;
        if children.iter().any(|c| c.base_index != base_index) {
            return Err(Error::ContractViolation(
                "families with different base indices".into(),
            ));
        }
        Ok(DepthFamily {
            base_index,
            source: DepthFamilySource::Concat(children),
        })
    }

    pub fn base_index(&self) -> u32 {
        self.base_index
    }

    /// The finite word this family assigns to depth `n`.
    pub fn at_depth(&self, n: u32) -> Result<FiniteWord> {
        match &self.source {
            DepthFamilySource::Constant(w) => Ok(w.project_le(n)),
            DepthFamilySource::Lift { map, word } => map.apply(&word.projection(n)?),
            DepthFamilySource::Concat(children) => {
                let mut out = FiniteWord::empty();
                for child in children {
                    out = out.concat(&child.at_depth(n)?);
                }
                Ok(out)
            }
        }
    }
}

// --- projection ---

fn project_schema(
    schema: &Schema,
    spec: &FamilySpec,
    base: u32,
    n: u32,
    budget: u64,
) -> Result<FiniteWord> {
    let word = match schema {
        Schema::Finite(w) => w.project_keep(|i| i >= base && i <= n),
        Schema::Nested(nested) => nested.expand(spec, n, budget)?.project_keep(|i| i >= base),
        Schema::Coordinates(cw) => {
            if n < base {
                FiniteWord::empty()
            } else {
                cw.project(spec, base, n)?
            }
        }
        Schema::Product(children) => {
            let mut out = FiniteWord::empty();
            for child in children {
                out = out.concat(&project_schema(child, spec, base, n, budget)?);
            }
            out
        }
        Schema::Inverse(child) => project_schema(child, spec, base, n, budget)?.invert(),
        Schema::Power(child, m) => project_schema(child, spec, base, n, budget)?.power(*m),
        Schema::Permuted {
            permutation,
            inner_spec,
            child,
        } => {
            // a letter at old index i survives iff its new index lies in [base, n]
            let inner_depth = permutation.max_source_with_image_at_most(n);
            let inner = project_schema(child, inner_spec, 1, inner_depth, budget)?;
            let relabeled = inner.letters().iter().filter_map(|l| {
                let new_index = permutation.apply(l.index());
                (new_index >= base && new_index <= n).then(|| (new_index, l.element().clone()))
            });
            FiniteWord::from_raw_unchecked(relabeled)
        }
        Schema::Regrouped {
            partition,
            inner_spec,
            child,
        } => {
            if n < 1 {
                FiniteWord::empty()
            } else {
                let (_, inner_depth) = partition.old_range(n)?;
                let inner = project_schema(child, inner_spec, 1, inner_depth, budget)?;
                regroup_word(&inner, partition, inner_spec)?.project_keep(|b| b >= base && b <= n)
            }
        }
    };
    Ok(word)
}

/// Folds a finite word into block letters under a consecutive partition.
pub(crate) fn regroup_word(
    word: &FiniteWord,
    partition: &BlockPartition,
    old_spec: &FamilySpec,
) -> Result<FiniteWord> {
    let mut raw: Vec<(u32, GroupElement)> = Vec::with_capacity(word.letters().len());
    for l in word.letters() {
        let block = partition.block_of(l.index())?;
        let (start, end) = partition.old_range(block)?;
        let descriptor = crate::morphisms::block_descriptor(old_spec, start, end)?;
        let slot = l.index() - start + 1;
        let slots_family = FamilySpec::finite(match descriptor {
            crate::factors::FactorDescriptor::Block(ref slots) => slots.as_ref().clone(),
            _ => unreachable!("block_descriptor returns blocks"),
        });
        let inner = FiniteWord::letter(&slots_family, slot, l.element().clone())?;
        let element = GroupElement::new(descriptor, crate::factors::Payload::BlockWord(inner))?;
        raw.push((block, element));
    }
    Ok(FiniteWord::from_raw_unchecked(raw))
}

// --- bonding-map rewriting and normal form ---

fn tau_schema(schema: &Schema, j: u32) -> Result<Schema> {
    let out = match schema {
        Schema::Finite(w) => Schema::Finite(w.project_gt(j)),
        Schema::Nested(nested) => {
            if nested.start > j {
                Schema::Nested(nested.clone())
            } else {
                // levels start..=j vanish; their exponents pile up on the tail
                let mut exponent: u64 = 1;
                for level in nested.start..=j {
                    exponent =
                        exponent
                            .checked_mul(nested.exponent.at(level))
                            .ok_or(Error::Unsupported(
                                "bonding level too deep: accumulated exponent overflows".into(),
                            ))?;
                }
                let tail = NestedPowerSchema {
                    start: j + 1,
                    element_literal: nested.element_literal.clone(),
                    exponent: nested.exponent,
                };
                Schema::Power(Box::new(Schema::Nested(tail)), exponent as i64)
            }
        }
        Schema::Coordinates(cw) => Schema::Coordinates(cw.clone()),
        Schema::Product(children) => Schema::Product(
            children
                .iter()
                .map(|c| tau_schema(c, j))
                .collect::<Result<_>>()?,
        ),
        Schema::Inverse(child) => Schema::Inverse(Box::new(tau_schema(child, j)?)),
        Schema::Power(child, m) => Schema::Power(Box::new(tau_schema(child, j)?), *m),
        // projections handle the base filter; the node stays put
        Schema::Permuted { .. } | Schema::Regrouped { .. } => schema.clone(),
    };
    Ok(out)
}

/// Rewrites a schema to its normal form: flattens products, folds finite
/// subtrees, merges adjacent finite leaves, combines nested powers, and
/// pushes inverses inward (an inverse of an atomic node becomes its -1 power).
pub(crate) fn normalize(schema: Schema) -> Schema {
    match schema {
        Schema::Finite(w) => Schema::Finite(w),
        Schema::Nested(n) => Schema::Nested(n),
        Schema::Coordinates(c) => Schema::Coordinates(c),
        Schema::Product(children) => {
            let mut flat: Vec<Schema> = Vec::with_capacity(children.len());
            for child in children {
                match normalize(child) {
                    Schema::Product(inner) => flat.extend(inner),
                    Schema::Finite(w) if w.is_empty() => {}
                    other => flat.push(other),
                }
            }
            let mut merged: Vec<Schema> = Vec::with_capacity(flat.len());
            for node in flat {
                match (merged.last_mut(), node) {
                    (Some(Schema::Finite(prev)), Schema::Finite(next)) => {
                        let joined = prev.concat(&next);
                        if joined.is_empty() {
                            merged.pop();
                        } else {
                            *prev = joined;
                        }
                    }
                    (_, node) => merged.push(node),
                }
            }
            match merged.len() {
                0 => Schema::Finite(FiniteWord::empty()),
                1 => merged.pop().unwrap(),
                _ => Schema::Product(merged),
            }
        }
        Schema::Inverse(child) => match normalize(*child) {
            Schema::Finite(w) => Schema::Finite(w.invert()),
            Schema::Product(children) => normalize(Schema::Product(
                children
                    .into_iter()
                    .rev()
                    .map(|c| Schema::Inverse(Box::new(c)))
                    .collect(),
            )),
            Schema::Power(inner, m) => normalize(Schema::Power(inner, -m)),
            atomic => Schema::Power(Box::new(atomic), -1),
        },
        Schema::Power(child, m) => {
            if m == 0 {
                return Schema::Finite(FiniteWord::empty());
            }
            match normalize(*child) {
                Schema::Finite(w) => Schema::Finite(w.power(m)),
                Schema::Power(inner, k) => normalize(Schema::Power(inner, k * m)),
                other if m == 1 => other,
                other => Schema::Power(Box::new(other), m),
            }
        }
        Schema::Permuted {
            permutation,
            inner_spec,
            child,
        } => Schema::Permuted {
            permutation,
            inner_spec,
            child: Box::new(normalize(*child)),
        },
        Schema::Regrouped {
            partition,
            inner_spec,
            child,
        } => Schema::Regrouped {
            partition,
            inner_spec,
            child: Box::new(normalize(*child)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::FactorDescriptor;

    fn all_z() -> Arc<FamilySpec> {
        Arc::new(FamilySpec::constant(FactorDescriptor::Integers))
    }

    fn standard_divisible(spec: &Arc<FamilySpec>) -> ProjectiveWord {
        ProjectiveWord::nested(spec.clone(), 1, "1", ExponentRule::IndexPlus(1)).unwrap()
    }

    fn pairs(word: &FiniteWord) -> Vec<(u32, String)> {
        word.to_pairs()
    }

    #[test]
    fn nested_projection_matches_hand_expansion() {
        let spec = all_z();
        let w = standard_divisible(&spec);
        assert_eq!(pairs(&w.projection(1).unwrap()), [(1, "1".into())]);
        // depth 3: a1 a2 a3^3 a2 a3^3
        assert_eq!(
            pairs(&w.projection(3).unwrap()),
            [
                (1, "1".into()),
                (2, "1".into()),
                (3, "3".into()),
                (2, "1".into()),
                (3, "3".into())
            ]
        );
    }

    #[test]
    fn finite_leaf_projects_to_itself() {
        let spec = all_z();
        let u = FiniteWord::parse_text(&spec, "g1:1·g2:3").unwrap();
        let w = ProjectiveWord::finite(spec.clone(), u.clone()).unwrap();
        assert_eq!(w.projection(2).unwrap(), u);
        assert_eq!(w.projection(40).unwrap(), u);
        assert_eq!(pairs(&w.projection(1).unwrap()), [(1, "1".into())]);
    }

    #[test]
    fn coordinate_word_triangular_pattern() {
        let spec = all_z();
        let coords = vec![
            GroupElement::integer(10),
            GroupElement::integer(20),
            GroupElement::integer(30),
        ];
        let w = ProjectiveWord::coordinates(spec, coords).unwrap();
        // positions: 1->c1, 2->c1, 3->c2, 4->c1, 5->c2, 6->c3
        assert_eq!(
            pairs(&w.projection(6).unwrap()),
            [
                (1, "10".into()),
                (2, "10".into()),
                (3, "20".into()),
                (4, "10".into()),
                (5, "20".into()),
                (6, "30".into())
            ]
        );
    }

    #[test]
    fn coordinate_identity_entries_leave_gaps() {
        let spec = all_z();
        let coords = vec![GroupElement::integer(0), GroupElement::integer(7)];
        let w = ProjectiveWord::coordinates(spec, coords).unwrap();
        // coordinate 1 is the identity: positions 1, 2, 4 are empty
        assert_eq!(
            pairs(&w.projection(5).unwrap()),
            [(3, "7".into()), (5, "7".into())]
        );
    }

    #[test]
    fn products_project_homomorphically() {
        let spec = all_z();
        let a = ProjectiveWord::finite(
            spec.clone(),
            FiniteWord::parse_text(&spec, "g1:1").unwrap(),
        )
        .unwrap();
        let b = ProjectiveWord::finite(
            spec.clone(),
            FiniteWord::parse_text(&spec, "g2:1").unwrap(),
        )
        .unwrap();
        let ab = a.product(&b).unwrap();
        assert_eq!(ab.projection(2).unwrap().to_string(), "g1:1·g2:1");
        let cancel = a.product(&a.inverse()).unwrap();
        for n in 1..10 {
            assert!(cancel.projection(n).unwrap().is_empty());
        }
    }

    #[test]
    fn compatibility_of_projections() {
        let spec = all_z();
        let w = standard_divisible(&spec);
        for n in 1..8 {
            assert_eq!(
                w.projection(n + 1).unwrap().project_le(n),
                w.projection(n).unwrap()
            );
        }
        let eps = ProjectiveWord::coordinates(
            spec.clone(),
            vec![GroupElement::integer(1), GroupElement::integer(2)],
        )
        .unwrap();
        for n in 1..40 {
            assert_eq!(
                eps.projection(n + 1).unwrap().project_le(n),
                eps.projection(n).unwrap()
            );
        }
    }

    #[test]
    fn tau_collapses_nested_levels() {
        let spec = all_z();
        let w = standard_divisible(&spec);
        let t1 = w.tau(1).unwrap();
        assert_eq!(t1.base_index(), 2);
        // tau_1(w) = (w_2)^2; at depth 3 that is (a2 a3^3)^2
        assert_eq!(
            pairs(&t1.projection(3).unwrap()),
            [
                (2, "1".into()),
                (3, "3".into()),
                (2, "1".into()),
                (3, "3".into())
            ]
        );
        let w2 = ProjectiveWord::nested(spec.clone(), 2, "1", ExponentRule::IndexPlus(1)).unwrap();
        assert_eq!(
            t1.projection(3).unwrap(),
            w2.projection(3).unwrap().power(2)
        );
        // structural: tau_1(w) and (w_2)^2 coincide as schemas
        let squared = w2.power(2).tau(1).unwrap();
        assert_eq!(t1.normal_form().unwrap(), squared.normal_form().unwrap());
    }

    #[test]
    fn tau_composes_and_fixes_base() {
        let spec = all_z();
        let w = standard_divisible(&spec);
        assert_eq!(w.tau(0).unwrap(), w);
        let t2_direct = w.tau(2).unwrap();
        let t2_stepped = w.tau(1).unwrap().tau(2).unwrap();
        assert_eq!(t2_direct, t2_stepped);
        for n in 3..7 {
            assert_eq!(
                t2_direct.projection(n).unwrap(),
                w.projection(n).unwrap().project_gt(2)
            );
        }
    }

    #[test]
    fn tau_is_a_homomorphism_on_projections() {
        let spec = all_z();
        let u = standard_divisible(&spec);
        let v = ProjectiveWord::coordinates(
            spec.clone(),
            vec![GroupElement::integer(1), GroupElement::integer(-1)],
        )
        .unwrap();
        let uv = u.product(&v).unwrap();
        for j in 0..4 {
            let lhs = uv.tau(j).unwrap();
            let rhs = u.tau(j).unwrap().product(&v.tau(j).unwrap()).unwrap();
            for n in (j + 1)..8 {
                assert_eq!(lhs.projection(n).unwrap(), rhs.projection(n).unwrap());
            }
        }
    }

    #[test]
    fn eq_in_product_verdicts() {
        let spec = all_z();
        let w = standard_divisible(&spec);
        let empty = ProjectiveWord::empty(spec.clone());
        assert_eq!(
            w.eq_in_product(&empty, 8).unwrap(),
            Verdict::DistinctWitness { depth: 1 }
        );
        assert_eq!(
            w.eq_in_product(&w.clone(), 8).unwrap(),
            Verdict::EqualCertified {
                level: 0,
                proof: Proof::Structural
            }
        );
        // coordinate words first differing at coordinate 3 separate at depth 6
        let a = ProjectiveWord::coordinates(
            spec.clone(),
            vec![
                GroupElement::integer(1),
                GroupElement::integer(1),
                GroupElement::integer(1),
            ],
        )
        .unwrap();
        let b = ProjectiveWord::coordinates(
            spec.clone(),
            vec![
                GroupElement::integer(1),
                GroupElement::integer(1),
                GroupElement::integer(2),
            ],
        )
        .unwrap();
        assert_eq!(
            a.eq_in_product(&b, 40).unwrap(),
            Verdict::DistinctWitness { depth: 6 }
        );
    }

    #[test]
    fn equal_projections_stay_unknown_without_structure() {
        let spec = all_z();
        // same word, built along two schema routes that normalize differently
        let w = standard_divisible(&spec);
        let as_product = w.tau(1).unwrap();
        let reassembled = ProjectiveWord::nested(spec.clone(), 2, "1", ExponentRule::IndexPlus(1))
            .unwrap()
            .power(2)
            .product(&ProjectiveWord::coordinates(spec.clone(), vec![GroupElement::integer(0)]).unwrap())
            .unwrap()
            .tau(1)
            .unwrap();
        let verdict = as_product.eq_in_product(&reassembled, 7).unwrap();
        assert!(
            matches!(verdict, Verdict::UnknownUpTo { separated_at_every_level: false, .. }),
            "projection agreement must not certify equality, got {verdict}"
        );
    }

    #[test]
    fn eq_in_archipelago_examples() {
        let spec = all_z();
        // any finite word is equivalent to the empty word
        let u = ProjectiveWord::finite(
            spec.clone(),
            FiniteWord::parse_text(&spec, "g1:1·g3:2").unwrap(),
        )
        .unwrap();
        let empty = ProjectiveWord::empty(spec.clone());
        assert_eq!(
            u.eq_in_archipelago(&empty, 6, 8).unwrap(),
            Verdict::EqualCertified {
                level: 3,
                proof: Proof::Structural
            }
        );
        // the divisible word is a square modulo the first factor
        let w = standard_divisible(&spec);
        let w2_squared =
            ProjectiveWord::nested(spec.clone(), 2, "1", ExponentRule::IndexPlus(1))
                .unwrap()
                .power(2);
        assert_eq!(
            w.eq_in_archipelago(&w2_squared, 6, 8).unwrap(),
            Verdict::EqualCertified {
                level: 1,
                proof: Proof::Structural
            }
        );
        // coordinate words with different constant coordinates never merge
        let a = ProjectiveWord::coordinates(spec.clone(), vec![GroupElement::integer(1)]).unwrap();
        let b = ProjectiveWord::coordinates(spec.clone(), vec![GroupElement::integer(2)]).unwrap();
        assert_eq!(
            a.eq_in_archipelago(&b, 4, 40).unwrap(),
            Verdict::UnknownUpTo {
                max_level: 4,
                max_depth: 40,
                separated_at_every_level: true
            }
        );
    }

    #[test]
    fn divisible_chain_certificates() {
        let spec = all_z();
        let w = standard_divisible(&spec);
        let steps = w.divisible_chain(4, 8).unwrap();
        assert_eq!(steps.len(), 3);
        let exponents: Vec<u64> = steps.iter().map(|s| s.exponent).collect();
        assert_eq!(exponents, [2, 6, 24]);
        for step in &steps {
            assert!(step.structural, "level {} not structural", step.level);
            assert!(step.projections_agree);
        }
        // consecutive certificates compose: tau(n-1) of the level-(n-1) right
        // side equals the level-n right side
        for pair in steps.windows(2) {
            let prev = ProjectiveWord::nested(spec.clone(), pair[0].root_start, "1", ExponentRule::IndexPlus(1))
                .unwrap()
                .power(pair[0].exponent as i64);
            let next = ProjectiveWord::nested(spec.clone(), pair[1].root_start, "1", ExponentRule::IndexPlus(1))
                .unwrap()
                .power(pair[1].exponent as i64)
                .tau(pair[1].level)
                .unwrap();
            assert_eq!(
                prev.tau(pair[1].level).unwrap().normal_form().unwrap(),
                next.normal_form().unwrap()
            );
        }
    }

    #[test]
    fn budget_is_enforced_with_the_offending_depth() {
        let spec = all_z();
        let w = standard_divisible(&spec).with_budget(100);
        let err = w.projection(6).unwrap_err();
        match err {
            Error::BudgetExceeded { depth, budget, .. } => {
                assert_eq!(depth, 6);
                assert_eq!(budget, 100);
            }
            other => panic!("expected budget error, got {other}"),
        }
        // generous budget computes the same word as the default
        let fine = standard_divisible(&spec);
        assert_eq!(fine.projection(6).unwrap().syllables() > 0, true);
    }

    #[test]
    fn base_index_is_respected() {
        let spec = all_z();
        let w = standard_divisible(&spec);
        let t = w.tau(2).unwrap();
        assert!(t.projection(1).is_err());
        assert!(t.tau(1).is_err());
        let p = t.projection(4).unwrap();
        assert!(p.letters().iter().all(|l| l.index() >= 3));
    }

    #[test]
    fn depth_family_constant_and_concat() {
        let spec = all_z();
        let u = FiniteWord::parse_text(&spec, "g1:1·g2:1").unwrap();
        let fam = DepthFamily::constant(1, u.clone());
        assert_eq!(fam.at_depth(1).unwrap().to_string(), "g1:1");
        assert_eq!(fam.at_depth(5).unwrap(), u);
        let double = DepthFamily::concat(vec![fam.clone(), fam]).unwrap();
        assert_eq!(double.at_depth(5).unwrap(), u.concat(&u));
    }
}
