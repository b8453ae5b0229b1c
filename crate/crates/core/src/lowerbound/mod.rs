//! Query lower-bound construction: a hard Brouwer instance in `n = 40k`
//! dimensions whose approximate fixed points encode the end of an
//! End-of-A-Line path over `{0,1}^k`.

pub mod gv;
pub mod harness;
pub mod instance;
pub mod oracle;

pub use harness::{query_harness, HarnessReport, Strategy};
pub use gv::{build_gv_code, Construction, GvCode};
pub use instance::{
    Evaluation, HardInstance, InstanceSpec, LatticePoint, Region, RegionKind, DEFAULT_EPS, DEFAULT_GAMMA,
};
pub use oracle::{
    certified_solutions, complete_instance, Completion, EndOfLineOracle, OracleMode, QueryKind, QueryRecord,
};
