//! Command-line experiments on the semiquantum models: configuration, output
//! formats and one driver per subcommand.

pub mod breaks;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod parallel;
