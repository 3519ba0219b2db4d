//! Estimators and inequality ledgers that replay the endpoint argument on
//! discretized inputs.

pub mod distribution;
pub mod ledger;
pub mod lemma1;
pub mod theorem1;
pub mod theorem2;

pub use distribution::{distribution_function, log_grid, t_grid_for, weak_quasinorm};
pub use ledger::{InequalityLedger, LedgerEntry, Provenance};
pub use lemma1::{lemma1_sum, Collection, LemmaConfig, LemmaReport, LemmaSlot};
pub use theorem1::{theorem1_ledger, Theorem1Config};
pub use theorem2::{theorem2_ledger, Theorem2Config};
