//! Open billiards outside two strictly convex obstacles in ℝ³ and the
//! geometric-optics parametrix built on top of them.
//!
//! The modules follow the data flow of the construction:
//!
//! * [`geometry`]: obstacles, ray/surface queries, the two-body [`Scene`].
//! * [`billiard`]: the reflected flow, the modified backward flow and stories.
//! * [`trapped`]: escape times, trapped-set grids and the divergence probes.
//! * [`wavefront`]: reflected phases, curvature transport and Λ products.
//! * [`spectral`]: the periodic ray and its linearised return map.
//! * [`parametrix`]: symbol surrogate, amplitudes, phases and `S_K`.
//! * [`config`]: JSON scene and symbol descriptions.

pub mod acceptance;
pub mod billiard;
pub mod config;
pub mod connect;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod parametrix;
pub mod quadrature;
pub mod sampling;
pub mod spectral;
pub mod trapped;
pub mod wavefront;

pub use billiard::{PhasePoint, ReflectionEvent, Story, Trajectory};
pub use error::{Error, Result};
pub use geometry::{Obstacle, Scene, Shape, SurfaceHit, Vec3};
pub use parametrix::SymbolSurrogate;
pub use spectral::{PeriodicRay, PoincareData};
pub use wavefront::{PhaseField, WavefrontState};
