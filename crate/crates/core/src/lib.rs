//! Joint training of an elaboration generator and an answer predictor for
//! multiple-choice question answering.
//!
//! A teacher model supplies candidate elaborations for each question. The
//! trainer alternates between fitting a small generator to the teacher
//! elaborations the predictor finds most useful and fitting the predictor to
//! answer from elaborations the generator samples. At inference the
//! generator's samples are scored by the predictor and pooled.

pub mod data;
pub mod decoding;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod models;
pub mod teacher;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
