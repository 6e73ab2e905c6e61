//! Knowledge-graph grounded scoring of multiple-choice commonsense questions.
//!
//! The pipeline turns every question into five question/choice statements, grounds each
//! side against a ConceptNet-style graph, enumerates bounded-length paths between the
//! grounded concepts into a schema graph, optionally attaches one `IsA` neighbour per
//! grounded concept, encodes the graph (path-LSTM attention or multi-hop message
//! passing) and scores the statement with a sigmoid classifier.

pub mod dataset;
pub mod encoder;
pub mod error;
pub mod grounding;
pub mod kg;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod random;
pub mod schema;
pub mod selftest;
pub mod synthetic;
pub mod text;
pub mod util;

pub use error::{Error, Result};
