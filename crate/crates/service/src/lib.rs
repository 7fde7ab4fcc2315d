//! Command-line tools and the live session server.

pub mod cli;
pub mod live;
pub mod pacing;
pub mod server;
pub mod wire;
