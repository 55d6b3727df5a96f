//! Exact and classical hypothesis tests built from first principles.

pub mod calibration;
pub mod fisher;
pub mod special;
pub mod ttest;

pub use calibration::{calibrate, CalibrationReport, ComparisonKind, Convention, TableEntry};
pub use fisher::{fisher_exact, hypergeom_pmf, ContingencyTable, Margins, TailMode, TestResult};
pub use special::{beta_inc, ln_gamma, log_choose};
pub use ttest::{student_t_sf, welch_t_from_summary, SummaryStats};
