pub mod association;
pub mod cli;
pub mod evaluate;
pub mod geometry;
pub mod optimize;
pub mod pipeline;
pub mod proposal;
pub mod scene;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;
