//! Differentially private process discovery.
//!
//! The crate mines process trees from event logs under pure ε-differential
//! privacy. The miner is a rejection-sampled approximation of the Inductive
//! Miner: it selects a noisy directly-follows relation with Report Noisy Max,
//! detects sequence/xor/parallel/loop cuts on it, and only releases trees
//! whose (noised) replay fitness clears a threshold. A non-private baseline
//! miner and the usual four conformance metrics (fitness, precision,
//! simplicity, generalization) are included for measuring the utility cost
//! of privacy.
//!
//! Pipeline overview:
//!
//! ```text
//! XES/CSV > EventLog > DfrTable (raw) > DP selection > cut detection > ProcessTree
//!                                     \
//!                                      > baseline miner (no noise) > conformance
//! ```

pub mod conformance;
pub mod cut_detection;
pub mod dfr;
pub mod dp_mech;
pub mod event_log;
pub mod miner;
pub mod process_tree;

pub use conformance::QualityReport;
pub use dfr::{build_dfr, ActivityPair, DfrTable, Endpoint};
pub use dp_mech::{BudgetLedger, LaplaceScale, RandomSource};
pub use event_log::{Activity, EventLog, LogStatistics, Trace};
pub use miner::{mine_baseline, mine_dp, DpimConfig, MiningOutcome};
pub use process_tree::{PetriNet, ProcessTree};
