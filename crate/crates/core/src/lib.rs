//! Word calculus for free products, the topologist's product, and
//! archipelago quotients.
//!
//! The crate computes with three layers of words over a family of factor
//! groups:
//!
//! * [`words`]: finite reduced words, the normal forms of free-product
//!   elements, with concatenation, cyclic reduction, and torsion witnesses;
//! * [`projective`]: schema words of the topologist's product, represented
//!   as compatible families of finite projections, with bonding maps and
//!   equality verdicts in both the product and its archipelago quotient;
//! * [`morphisms`]: letter-replacement maps, lazy pairing bijections, index
//!   permutation/regrouping, and the classification decision procedure.
//!
//! [`constructions`] packages the standard witness computations (the
//! divisible word, coordinate-word separation, conjugate involution
//! families) behind reproducible reports, and [`oracle`] holds slow
//! reference implementations the tests check against.

pub mod constructions;
pub mod error;
pub mod factors;
pub mod morphisms;
pub mod oracle;
pub mod projective;
pub mod words;

pub use error::{Error, Result};
pub use factors::{Cardinality, FactorDescriptor, FamilySpec, GroupElement, Payload, Rank};
pub use projective::{ProjectiveWord, Verdict};
pub use words::{FiniteWord, Letter};
