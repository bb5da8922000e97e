use thiserror::Error;

/// Errors produced by the word calculus.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Two elements (or an element and a family slot) disagree on their factor group.
    #[error("descriptor mismatch: {0}")]
    DescriptorMismatch(String),

    /// A descriptor failed its structural validation (bad table, zero modulus, ...).
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    /// A factor index has no descriptor in the family (finite family, index too large).
    #[error("index {index} is outside the family")]
    IndexOutsideFamily { index: u32 },

    /// An element literal did not parse under the descriptor it was given for.
    #[error("invalid element literal {literal:?} for {descriptor}: {reason}")]
    InvalidLiteral {
        literal: String,
        descriptor: String,
        reason: String,
    },

    /// A word or expression text failed to parse.
    #[error("cannot parse {input:?}: {reason}")]
    TextParse { input: String, reason: String },

    /// An operation precondition was violated.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Expanding a schema word at some depth would exceed the letter budget.
    #[error("word budget exceeded at depth {depth}: needs {required} letters, budget is {budget}")]
    BudgetExceeded {
        depth: u32,
        required: u64,
        budget: u64,
    },

    /// The requested computation is not supported for these inputs.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A letter map has no image for some element.
    #[error("mapping undefined: {0}")]
    MappingUndefined(String),
}

pub type Result<T> = std::result::Result<T, Error>;
