//! The guide under `book/src`, compiled so its code blocks run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}

#[doc = include_str!("../../../book/src/laguerre.md")]
pub mod laguerre {}

#[doc = include_str!("../../../book/src/feasible_set.md")]
pub mod feasible_set {}

#[doc = include_str!("../../../book/src/samplers.md")]
pub mod samplers {}

#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/receding_horizon.md")]
pub mod receding_horizon {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
