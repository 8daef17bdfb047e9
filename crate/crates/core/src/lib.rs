//! Parkinson's disease detection from online handwriting sequences.
//!
//! The pipeline reads raw pen signals ([`signal_io`]), derives per-time-step
//! kinematic and pressure features ([`features`]), fixes sequence length and
//! scale ([`preprocess`]), classifies with a strided 1D-convolution plus
//! bidirectional recurrent network ([`nn`]), and evaluates with stratified
//! cross-validation or repeated holdout ([`eval`]).

pub mod eval;
pub mod features;
pub mod nn;
pub mod preprocess;
pub mod signal_io;
