use thiserror::Error;

/// Errors produced by the library.
///
/// Unmet premises of a bound are not errors; calculators report them as
/// absent constants.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("input error: {0}")]
    Input(String),

    /// The request is well-formed but mathematically undefined, e.g. an
    /// infeasible pinning or a zero partition function.
    #[error("domain error: {0}")]
    Domain(String),

    /// An enumeration or state-space cap was exceeded.
    #[error("resource error: {what} exceeds cap {cap}")]
    Resource { what: String, cap: u64 },

    /// Numerical routine failed or a randomized search ran out of retries.
    #[error("computational error: {0}")]
    Computational(String),

    /// No balanced separator within budget was found for `component`.
    #[error("no balanced separator of size <= {budget} for vertex set {component:?}")]
    SeparatorNotFound { component: Vec<usize>, budget: usize },

    /// Every strategy was inapplicable at a decomposition-tree node.
    #[error("composition failed at node {node} (U = {u:?}, S = {s:?}): {reason}")]
    Composition {
        node: usize,
        u: Vec<usize>,
        s: Vec<usize>,
        reason: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
