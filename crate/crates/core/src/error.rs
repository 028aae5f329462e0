use thiserror::Error;

/// Errors produced by tree construction, the solvers and the estimate harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("reveal time {time} is not a grid instant in (0, T]")]
    OffGridReveal { time: f64 },

    #[error("tree needs {required} nodes, above the configured cap of {cap} nodes")]
    NodeCap { cap: usize, required: String },

    #[error("tree invariant violated at node {node}: {reason}")]
    InvalidTree { node: usize, reason: String },

    #[error("unsupported tree format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("step {step} out of range for a tree with {n_steps} steps")]
    StepOutOfRange { step: usize, n_steps: usize },

    #[error("process length {found} does not match the {expected} slots of the tree")]
    LengthMismatch { expected: usize, found: usize },

    #[error("process is not a martingale: defect {defect:.3e} at node {node}")]
    NotMartingale { node: usize, defect: f64 },

    #[error("process is not a supermartingale: drift {drift:.3e} at node {node}")]
    NotSupermartingale { node: usize, drift: f64 },

    #[error("strong supermartingale check failed at node {node} ({slot}): defect {defect:.3e}")]
    NotStrongSupermartingale {
        node: usize,
        slot: &'static str,
        defect: f64,
    },

    #[error("step-size condition dt * L_y < 1 violated: dt = {dt}, L_y = {l_y}")]
    StepSize { dt: f64, l_y: f64 },

    #[error("implicit step did not converge at node {node} after {iterations} iterations (last defect {defect:.3e})")]
    InnerNonConvergence {
        node: usize,
        iterations: usize,
        defect: f64,
    },

    #[error("declared Lipschitz constants violated: |g - g'| = {gap:.6e} exceeds bound {bound:.6e} at node {node}")]
    Lipschitz { node: usize, gap: f64, bound: f64 },

    #[error("measure change not positive: max |eta|_1 = {max_eta_l1:.6e} but dt = {dt} requires |eta|_1 < {limit:.6e}")]
    Girsanov {
        max_eta_l1: f64,
        dt: f64,
        limit: f64,
    },

    #[error("Picard iteration did not reach tolerance after {} iterations", .0.iterations())]
    PicardNonConvergence(Box<crate::reflected::PicardTrace>),

    #[error("tree depth {depth} exceeds the cap of {cap} steps for this operation")]
    DepthCap { depth: usize, cap: usize },

    #[error("operands live on different trees")]
    TreeMismatch,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
