//! Scenario-driven command line front end for the Knight-Walras solver
//! library: `solve`, `verify`, `sweep`, and `sample` pipelines reading
//! strict JSON scenarios and writing JSON reports plus CSV tables.

pub mod commands;
pub mod report;
pub mod scenario;
