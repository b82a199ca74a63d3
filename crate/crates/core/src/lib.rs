//! Context-sensitive cockpit procedure system: the iBlock model, the
//! procedure definition language, the execution engine, performance
//! corrections and the scripted scenario runner.

pub mod color;
pub mod condition;
pub mod dsl;
pub mod engine;
pub mod model;
pub mod perf;
pub mod scenario;
