//! Minimal reverse-mode differentiation and the AdamW optimizer.

mod adamw;
mod check;
mod params;
mod tape;

pub use adamw::{AdamWConfig, AdamWState};
pub use check::gradient_check;
pub use params::{collect_grads, Bindings, Param, ParamSet};
pub use tape::{Tape, Var};
