pub mod config;
pub mod error;
pub mod experiment;
pub mod glider;
pub mod mppi;
pub mod nmpc;
pub mod rollout;
pub mod synthesis;
pub mod vpm;
