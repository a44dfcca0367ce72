//! Joint location-scale mixed model and illness-death model for
//! interval-censored semi-competing events.
//!
//! The marker follows a linear mixed model whose between-visit and
//! within-visit residual standard deviations carry subject-specific random
//! effects. Transition intensities between health, illness and death depend
//! on the current marker value, its slope and both variabilities. Illness
//! onset is interval-censored between visits and entry is delayed.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod qmc;
pub mod quadrature;
pub mod simulation;
pub mod study;
pub mod time;

pub use data::{Dataset, EventRecord, SubjectData, VisitBlock};
pub use error::{Error, Result};
pub use estimation::{fit_pipeline, run_pipeline, FitResult, PipelineConfig};
pub use likelihood::LikelihoodEngine;
pub use model::{ModelSpec, ParameterLayout, ParameterSet, Transition};
pub use qmc::QmcConfig;
pub use simulation::{scenario_preset, GeneratorConfig, ScenarioPreset};
pub use time::TimeScale;
