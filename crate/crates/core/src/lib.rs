pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod explain;
pub mod garch;
pub mod kv;
pub mod neural;
pub mod optim;
pub mod pipeline;
pub mod timeseries;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/garch.md")]
    mod garch {}
    #[doc = include_str!("../../../book/src/lstm.md")]
    mod lstm {}
    #[doc = include_str!("../../../book/src/walk_forward.md")]
    mod walk_forward {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/explain.md")]
    mod explain {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
