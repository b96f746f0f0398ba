use thiserror::Error;

/// Errors raised by instance construction, the subproblem solvers and the
/// slot loops.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} is out of range (graph has {n_nodes} nodes)")]
    UnknownNode { node: usize, n_nodes: usize },

    #[error("link {link} is a self-loop at node {node}")]
    SelfLoop { link: usize, node: usize },

    #[error("flows {first} and {second} share source node {node}")]
    DuplicateSource {
        first: usize,
        second: usize,
        node: usize,
    },

    #[error("flow {flow} has identical source and destination {node}")]
    SourceIsDestination { flow: usize, node: usize },

    #[error("destination of flow {flow} is unreachable from its source")]
    UnreachableDestination { flow: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("atom enumeration refused: {links} links exceeds the limit of {limit}")]
    EnumerationTooLarge { links: usize, limit: usize },

    #[error("convex combination does not reconstruct its target (error {error:.3e})")]
    BadDecomposition { error: f64 },

    #[error(
        "scheduling solve did not reach gap {tol:.3e} in {iterations} iterations (gap {gap:.3e})"
    )]
    SchedulingNotConverged {
        tol: f64,
        gap: f64,
        iterations: usize,
    },

    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("diverged at slot {slot}: dual norm {norm:.3e}")]
    Diverged { slot: usize, norm: f64 },

    #[error("not converged within {slots} slots (last KKT residual {residual:.3e})")]
    NotConverged { slots: usize, residual: f64 },

    #[error("proximal term is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("failed to generate instance after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
