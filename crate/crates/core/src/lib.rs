//! Node classification on graphs by fusing three structural views: a learned
//! multi-measure feature graph, the raw topology, and a random-walk PPMI
//! semantic graph, each embedded by a two-layer graph convolution and combined
//! by per-node attention.

pub mod attention;
pub mod cache;
pub mod dataset;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub mod training;
pub mod measures;
pub mod pipeline;
pub mod semantic;
pub mod synthetic;

pub use error::{Error, Result};
