//! Simulator and decision engine for sensor-driven maize irrigation:
//! field ground truth, lossy telemetry, channel ingestion, FAO crop water
//! requirements, farmer alerts and the season metrics.

pub mod alerting;
pub mod decision;
pub mod field;
pub mod ingest;
pub mod metrics;
pub mod output;
pub mod rng;
pub mod scenario;
pub mod season;
pub mod transport;

pub use scenario::Scenario;
pub use season::{run_season, SeasonRun};

/// Any failure, tagged with the module it came from.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("field-sim: {0}")]
    Field(#[from] field::FieldError),
    #[error("transport: {0}")]
    Transport(#[from] transport::TransportError),
    #[error("ingest: {0}")]
    Ingest(#[from] ingest::IngestError),
    #[error("decision: {0}")]
    Decision(#[from] decision::DecisionError),
    #[error("alerting: {0}")]
    Alerting(#[from] alerting::AlertingError),
    #[error("metrics: {0}")]
    Metrics(#[from] metrics::MetricsError),
    #[error("scenario: {0}")]
    Scenario(#[from] scenario::ScenarioError),
    #[error("output: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, Error>;
