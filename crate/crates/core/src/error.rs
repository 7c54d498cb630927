use thiserror::Error;

/// Errors raised anywhere in the aggregation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("occupancy polytope is empty; transition data is malformed")]
    InfeasibleModel,

    #[error("stationary distribution system is numerically singular")]
    SingularChain,

    #[error("every agent is indifferent between all policies")]
    AllAgentsIndifferent,

    #[error("LP pivot budget exhausted")]
    IterationLimit,

    #[error("lower bounds on agent returns are infeasible")]
    InfeasibleBounds,

    #[error("polytope is degenerate: {0}")]
    DegeneratePolytope(String),

    #[error("cut region became empty")]
    EmptyRegion,

    #[error("branch-and-bound node budget of {nodes} exhausted")]
    MilpBudgetExhausted { nodes: usize },

    #[error("no policy reaches the mode of every agent's return density")]
    ConcaveRegionEmpty,

    #[error("instance too large: {what} = {size} exceeds limit {limit}")]
    SizeLimit {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("total welfare is zero")]
    ZeroWelfare,

    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleModel
            | Error::InfeasibleBounds
            | Error::DegeneratePolytope(_)
            | Error::EmptyRegion
            | Error::ConcaveRegionEmpty
            | Error::AllAgentsIndifferent
            | Error::SingularChain
            | Error::InvalidModel(_)
            | Error::Parse(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::IterationLimit | Error::MilpBudgetExhausted { .. } | Error::SizeLimit { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
