//! Quasiregular maps on finite metric measure spaces: pullback metrics and
//! factorizations, pullback measures, discrete p-modulus, dilatation
//! certificates and the bi-Lipschitz embedding of branched covers.

pub mod certificate;
pub mod covering;
pub mod dilatation;
pub mod embedding;
pub mod error;
pub mod generators;
pub mod io;
pub mod measure;
pub mod modulus;
pub mod par;
pub mod pullback;
pub mod space;

pub use certificate::{Certificate, Witness};
pub use covering::VertexMap;
pub use error::{Error, Result};
pub use space::{Continuum, Curve, DistMatrix, Edge, Space, TOL};
