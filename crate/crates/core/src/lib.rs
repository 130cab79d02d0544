pub mod bench;
mod block;
pub mod cli;
pub mod config;
pub mod controls;
pub mod dynamics;
pub mod error;
pub mod fockspace;
pub mod io;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod resonance;
pub mod sweep;
pub mod targets;
pub mod units;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/systems.md")]
    struct Systems;
    #[doc = include_str!("../../../book/src/resonances.md")]
    struct Resonances;
    #[doc = include_str!("../../../book/src/targets.md")]
    struct Targets;
    #[doc = include_str!("../../../book/src/pulses.md")]
    struct Pulses;
    #[doc = include_str!("../../../book/src/dynamics.md")]
    struct Dynamics;
    #[doc = include_str!("../../../book/src/objective.md")]
    struct ObjectiveChapter;
    #[doc = include_str!("../../../book/src/optimizer.md")]
    struct Optimizer;
    #[doc = include_str!("../../../book/src/campaigns.md")]
    struct Campaigns;
    #[doc = include_str!("../../../book/src/bench.md")]
    struct Bench;
}
