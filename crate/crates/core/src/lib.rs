//! Hardware-free tactile sensing toolkit.
//!
//! * [`sim`]: phantom and tactile-imaging-probe forward model.
//! * [`agent`]: discrete-action soft actor-critic that learns to press the
//!   probe into the recording force window.
//! * [`interrogation`]: coarse raster scan, centroid recentering and
//!   duplicate merging to localize inclusions.
//! * [`mechprops`]: size surface, deformation index and risk score.
//! * [`harness`]: configuration, pipelines and reports used by the CLI.

pub mod agent;
pub mod geom;
pub mod harness;
pub mod interrogation;
pub mod mechprops;
pub mod sim;

pub use geom::{Vec3, Xy};
