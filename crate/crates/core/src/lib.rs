//! Product integrals, adiabatic connections and holonomies for
//! parameter-dependent quantum systems.
//!
//! The [`pi_engine`] module evaluates ordered exponentials of matrix-valued
//! generator fields; the remaining modules build physical generators on top
//! of it: eigenframe connections ([`spectral_geometry`]), loop holonomies and
//! the surface-ordered Stokes identity ([`holonomy`]), the superadiabatic
//! basis hierarchy ([`superadiabatic`]), complex-time transition amplitudes
//! ([`contour_dykhne`]), the truncated oscillator coupled to a slow
//! coordinate ([`oscillator_model`]) and moment-cumulant conversion
//! ([`cumulant`]).

mod cheb;
pub mod error;
pub mod linalg;
pub mod path;
pub mod pi_engine;
pub mod spectral_geometry;
pub mod holonomy;
pub mod superadiabatic;
pub mod contour_dykhne;
pub mod oscillator_model;
pub mod cumulant;

pub use error::{PiError, Result};
pub use linalg::CMat;
pub use path::{PathDiscretization, Point};
pub use pi_engine::{GeneratorField, MagnusSeries, MagnusVariant, PIResult};
