//! Deterministic simulator for comparing how monolithic and microservice
//! deployments of a recommendation-serving pipeline scale with user count.
//!
//! * [`analytic`] evaluates the closed-form latency models and runs trial sweeps.
//! * [`desim`] is a discrete-event engine that reproduces those models with
//!   explicit queues and network hops.
//! * [`topology`] builds the monolith, sharded microservice and three-layer
//!   (offline / nearline / online) scenarios on top of the engine.
//! * [`recsys`] is the inner-product scoring payload; [`control_plane`] holds the
//!   model registry and event bus.
//! * [`harness`] parses run configurations and emits CSV, SVG and reports.

pub mod analytic;
pub mod control_plane;
pub mod desim;
pub mod domain;
pub mod harness;
pub mod recsys;
pub mod rng;
pub mod stats;
pub mod topology;
