use std::path::PathBuf;

use thiserror::Error;

use crate::bgp::RoutingError;
use crate::deployment::DeploymentError;
use crate::economics::EconError;
use crate::poisoning::PoisonError;
use crate::scenario::ScenarioError;
use crate::strategies::ConfigError;
use crate::topology::TopologyError;
use crate::traffic::TrafficError;

/// Any failure of the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("routing: {0}")]
    Routing(#[from] RoutingError),
    #[error("traffic: {0}")]
    Traffic(#[from] TrafficError),
    #[error("resistor: {0}")]
    Config(#[from] ConfigError),
    #[error("deployment: {0}")]
    Deployment(#[from] DeploymentError),
    #[error("economics: {0}")]
    Economics(#[from] EconError),
    #[error("poisoning: {0}")]
    Poisoning(#[from] PoisonError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Module tag for structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Topology(_) => "topology",
            Error::Routing(RoutingError::NonConvergence { .. }) => "non_convergence",
            Error::Routing(_) => "routing",
            Error::Traffic(_) => "traffic",
            Error::Config(_) => "resistor",
            Error::Deployment(_) => "deployment",
            Error::Economics(_) => "economics",
            Error::Poisoning(_) => "poisoning",
            Error::Scenario(_) => "scenario",
            Error::Io { .. } => "io",
        }
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::Routing(RoutingError::NonConvergence { .. }))
    }
}
