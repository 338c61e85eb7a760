//! CSV input, output formats and the parallel experiment runner behind the
//! `atomkde` command. The estimators themselves live in [`atomkde_core`].

pub use atomkde_core;

pub mod formats;
pub mod io;
pub mod runner;
