//! Cellular sheaf diffusion on graphs, treated as representations of the
//! graph's incidence quiver.
//!
//! The crate builds sheaf Laplacians from restriction maps, computes global
//! sections, evaluates moment-map regularizers and King-stability weights,
//! runs sheaf diffusion, and trains small sheaf-diffusion node classifiers.

pub mod data;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod harmonic;
pub mod linalg;
pub mod model;
pub mod quiver;
pub mod samplers;
pub mod sheaf;
pub mod stability;
pub mod verify;

pub use error::{Error, Result};
pub use quiver::{DimensionVector, GaugeElement, Graph, IncidenceQuiver};
pub use sheaf::{CellularSheaf, Subrepresentation};
