//! Parameter/FLOP accounting and latency measurement.

mod bench;
mod count;
mod verify;

pub use bench::{bench_fn, bench_neck, bench_neck_pair, BenchOptions, BenchResult, MIN_ITERS};
pub use count::{
    count_config, count_flops, count_params, delta_report, CountReport, CountRow, DeltaReport, DeltaRow,
    FLOP_CONVENTION, REFERENCE_FLOPS_DELTA, REFERENCE_PARAMS_DELTA,
};
pub use verify::{gradcheck_suite, SuiteEntry};
