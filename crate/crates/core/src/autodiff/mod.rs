//! Minimal reverse-mode differentiation with the primitives the SETR block
//! and its losses need, plus the AdamW optimizer.

mod adamw;
mod tape;

pub use adamw::{adamw_step, AdamWConfig, OptState};
pub use tape::{gelu, softmax_slice, softmax_with_temperature, Tape, Value};

#[cfg(test)]
mod tests;
