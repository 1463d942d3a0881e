//! Component-based CSE workflows: typed components with redundant
//! realizations, DAG composition, a Cahn-Hilliard phase-field solver, data
//! surrogates and SHA-256 provenance records.

pub mod cahn_hilliard;
pub mod cli;
pub mod config;
pub mod data;
pub mod description;
pub mod engine;
pub mod model;
pub mod provenance;

pub use config::{Config, ConfigError};
pub use engine::{compose, execute, ComponentRegistry, ComposeError, Executor, WorkflowPlan};
pub use model::{
    AbstractionLevel, Binding, ComponentManifest, InputValue, InputsObject, PortSpec, Realization, RealizationKind,
    WorkflowDefinition,
};
pub use provenance::{hash_artifact, Digest, RunRecord, RunStatus};
