//! Compiler toolchain for a constraint object-oriented logic language subset.

pub mod frontend;
pub mod ir;
pub mod bddb;
pub mod grounder;
pub mod executor;
pub mod driver;
pub mod agent;
pub mod config;
pub mod corpus;
pub mod experiment;
