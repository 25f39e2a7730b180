//! Quantum-walk claw detection and search, simulated exactly on small
//! instances and through a query-cost model on large ones.

pub mod detect;
pub mod error;
pub mod harness;
pub mod instances;
pub mod johnson;
pub mod search;
pub mod walk;

pub use detect::{
    choose_params, claw_detect, subset_detect, Backend, BackendKind, CostModel, DetectOutcome,
    DetectParams, ExactBackend, MarkRule, Restriction,
};
pub use error::{Error, Result};
pub use instances::{
    deserialize_instance, make_planted_instance, serialize_instance, ClawTuple, OracleMode,
    OracleSession, Point, ProblemInstance,
};
pub use johnson::{JohnsonGraph, ProductChain, Spectrum};
pub use search::{claw_search, k_claw_search, SearchConfig, SearchResult, TraceRecord};
pub use walk::{MarkedSet, SzegedyWalk};
