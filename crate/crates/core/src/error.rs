use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VpmError {
    #[error("singular kernel evaluated at its own source point")]
    CoincidentPoints,
    #[error("boundary system is singular (pivot {pivot:.3e} in column {column})")]
    SingularSystem { column: usize, pivot: f64 },
    #[error("boundary system contains non-finite entries")]
    NonFinite,
    #[error("a disturbance ring is already active")]
    RingAlreadyActive,
    #[error("invalid vortex configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Vpm(#[from] VpmError),
    #[error("state became non-finite")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("every sampled trajectory failed (all costs infinite)")]
    AllCostsInfinite,
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("only {survivors} perturbed rollouts survived, need at least {needed}")]
    TooFewSamples { survivors: usize, needed: usize },
    #[error("regression matrix is rank deficient; degenerate columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },
    #[error("Riccati recursion produced a non-finite cost-to-go at step {step}")]
    NonFiniteRiccati { step: usize },
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SynthesisError>,
    },
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplanError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("nothing left to plan: {remaining} steps remain after projection")]
    HorizonExhausted { remaining: usize },
}
