//! Command-line front end for `conic-flow`: configuration files, run
//! directories and the acceptance suite.

pub mod config;
pub mod rundir;
pub mod suite;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
