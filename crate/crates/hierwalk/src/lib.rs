pub use hierwalk_core as core;

pub mod cli;
pub mod format;
pub mod oracle;
