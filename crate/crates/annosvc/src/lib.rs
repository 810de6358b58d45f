//! Annotation study service.
//!
//! [`study`] holds the assignment and validation logic as plain synchronous
//! code; [`server`] exposes it over HTTP behind a single mutex; [`config`]
//! reads the service settings from a file and environment overrides.

pub mod config;
pub mod server;
pub mod study;

pub use config::ServiceConfig;
pub use server::{router, serve, AppState};
pub use study::{
    CompletenessReport, ExportBundle, InstanceKind, NextTask, Progress, StudyConfig, StudyError,
    StudyInstance, Study, SubmitRequest, SubmitResponse, Task,
};
