//! Numerical laboratory for the normalized Kähler-Ricci flow on torus
//! fibrations whose canonical class is pulled back from the base.
//!
//! The crate provides spectral Kähler calculus on periodic grids
//! ([`geometry`]), exactly computable model fibrations ([`models`]), a
//! Newton-Krylov solver for the generalized Kähler-Einstein Monge-Ampère
//! equation ([`gke`]), and the flow integrator with its monitors ([`krf`]).

pub mod error;
pub mod geometry;
pub mod gke;
pub mod grid;
pub mod integrate;
pub mod krf;
pub mod krylov;
pub mod linalg;
pub mod models;
pub mod rates;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{GridSpec, HermitianField, ScalarField};
