//! Data-driven spectral expansions of stochastic fields.

pub mod cmd;
pub mod dataset;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod nnet;
pub mod pce;
pub mod problems;
pub mod rngdist;
pub mod ssdl;

pub use dataset::{Dataset, DatasetMeta, Split};
pub use error::{Error, Result};
pub use model::{Algorithm, EvalForm, MeanTerm, Provenance, SpectralModel, SpectralTerm, Support};

// Book chapters compiled as doc-tests so their snippets stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/expansion.md")]
    mod expansion {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/pce.md")]
    mod pce {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
