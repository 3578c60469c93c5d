//! Recurrent and feed-forward building blocks.

mod gru;
pub mod init;
mod mlp;
mod params;

pub use gru::Gru;
pub use mlp::{Linear, Mlp};
pub use params::{Bound, ParamId, ParamRecord, ParamStore};

/// Hidden width of an MLP block with `input` features.
pub fn mlp_hidden_width(input: usize) -> usize {
    input.max(50)
}
