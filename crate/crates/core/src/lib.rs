//! Deterministic AS-level routing simulator for resistor coalitions that
//! route around ASes hosting traffic-manipulating boxes, and for the transit
//! revenue those deployers lose as a result.
//!
//! The pipeline is: [`topology`] ingestion, baseline [`bgp`] convergence,
//! [`traffic`] accounting, [`deployment`] selection, the attack under one of
//! the [`strategies`] (optionally with [`poisoning`] of inbound routes), and
//! finally [`economics`]. [`scenario`] ties it together.

pub mod bgp;
pub mod deployment;
pub mod economics;
mod error;
pub mod poisoning;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod strategies;
pub mod topology;
pub mod traffic;

pub use error::Error;
pub use bgp::{AsPath, BlockKey, Route, Specificity};
pub use scalar::Scalar;
pub use strategies::{Deployment, ResistorConfig, StrategyKind};
pub use topology::{AsGraph, Asn, Relationship};

/// Traffic units in the working precision.
pub type Units = f64;
/// Exact traffic units.
pub type ExactUnits = num_rational::BigRational;

pub type Matrix = traffic::TrafficMatrix<Units>;
pub type ExactMatrix = traffic::TrafficMatrix<ExactUnits>;
pub type Ledger = traffic::FlowLedger<Units>;
pub type ExactLedger = traffic::FlowLedger<ExactUnits>;
pub type Report = economics::CostReport<Units>;
pub type ExactReport = economics::CostReport<ExactUnits>;
pub type Run = scenario::RunOutput<Units>;
