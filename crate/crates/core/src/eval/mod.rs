//! Leave-one-flight-out evaluation, metrics and reports.

pub mod lofo;
pub mod metrics;
pub mod report;

pub use lofo::{check_leakage, run_lofo, FoldResult, LofoConfig, Method, MethodOutcome};
pub use metrics::{auc, bootstrap_ci, far_at_tpr, roc_curve, tpr_at_far, BootstrapCi, FarAtTpr, RocPoint};
pub use report::{build_report, emit_report, pooled_auc, EvalReport, ReportOptions, REPORT_SCHEMA};

/// Order-preserving parallel map.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
