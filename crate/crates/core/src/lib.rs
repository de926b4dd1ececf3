//! Fibrillar adhesive arrays: exact detachment simulation, surrogate
//! models of array strength, and gradient-based compliance design.
//!
//! The crate models a rigid array of fibrils bonded to a common elastic
//! backing layer and loaded normally by a rigid surface. Elastic coupling
//! through the backing makes the load distribution non-uniform; fibrils
//! detach one by one as their load reaches the critical value, and the
//! peak total force defines the adhesive strength. Everything is
//! dimensionless: lengths in units of the mean fibril radius, loads in
//! units of the single-fibril critical load.
//!
//! Modules follow the pipeline order: [`array_geometry`] builds layouts,
//! [`contact_mechanics`] assembles the coupled system and simulates
//! detachment, [`dataset`] generates labeled designs, [`surrogate`] fits
//! strength predictors, [`inverse_design`] runs projected gradient ascent
//! against a frozen predictor, and [`pipeline`] ties the stages together
//! for the command-line tool.

pub mod array_geometry;
pub mod config;
pub mod contact_mechanics;
pub mod dataset;
pub mod error;
pub mod inverse_design;
pub mod pipeline;
pub mod seeding;
pub mod surrogate;

pub use array_geometry::{ElasticContext, FibrilArray, FibrilMaterial, FibrilSpec, LayoutKind};
pub use contact_mechanics::{
    simulate_detachment, ComplianceSystem, DesignVector, DetachmentTrace, LoadCase,
};
pub use error::{Error, Result};
