use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root finder did not converge at phi_ext = {phi_ext} rad after {iterations} iterations")]
    NoConvergence { phi_ext: f64, iterations: usize },

    #[error("unstable branch at phi_ext = {phi_ext} rad: c2 = {c2} <= 0")]
    UnstableBranch { phi_ext: f64, c2: f64 },

    #[error("angular frequency {omega} rad/s outside (0, {ceiling}]")]
    OmegaOutOfRange { omega: f64, ceiling: f64 },

    #[error("pump phase amplitude {amplitude:.4} rad exceeds the quartic truncation limit of 1 rad")]
    PumpTooStrong { amplitude: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("coupled-mode integration failed at x = {x} cells: {reason}")]
    Integration { x: f64, reason: String },

    #[error("time-domain simulation unstable at t = {t:e} s (node {node})")]
    Unstable { t: f64, node: usize },

    #[error("incommensurate tone set: {0}")]
    Incommensurate(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),
}
