//! Adaptive estimation of model-noise and observation-noise covariances
//! inside Kalman and ensemble Kalman filters.
//!
//! The crate provides the truth models, a Kalman filter, an ensemble
//! transform Kalman filter and its localized variant, three innovation-based
//! covariance estimators, evaluation metrics, and the experiment harness used
//! by the command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covest;
pub mod error;
pub mod etkf;
pub mod experiment;
pub mod harness;
pub mod kalman;
pub mod letkf;
pub mod linalg;
pub mod matrix_io;
pub mod metrics;
pub mod models;
pub mod rng;

pub use covest::{
    BsEstimator, CovParameterization, CovarianceEstimator, MblEstimator, OblEstimator, StepRecord, UpdateStatus,
};
pub use error::{Error, Result};
pub use etkf::{Ensemble, EtkfStepRecord, Regeneration};
pub use kalman::KalmanState;
pub use models::{Dynamics, L96Model, LinearModel, ObservationScheme, TriadModel};
pub use nalgebra::{DMatrix, DVector};
