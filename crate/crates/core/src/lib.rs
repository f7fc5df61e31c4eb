pub mod cm;
pub mod config;
pub mod corpus;
pub mod distance;
pub mod dsp;
pub mod error;
pub mod fixtures;
pub mod gmm;
pub mod metrics;
pub mod pipeline;
pub mod quality;
pub mod regression;
pub mod report;
pub mod rng;
pub mod scores;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/protocols.md")]
    mod protocols {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/countermeasures.md")]
    mod countermeasures {}
    #[doc = include_str!("../../../book/src/distances.md")]
    mod distances {}
    #[doc = include_str!("../../../book/src/regression.md")]
    mod regression {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
}
