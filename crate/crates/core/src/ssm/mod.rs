//! Selective state-space scans and the quadratic attention baseline they are
//! benchmarked against.

mod attention;
mod op;
mod scan;

pub use attention::attention_reference;
pub use scan::{
    discretize, hidden_state_bound, linear_recurrence_parallel, scan_with_state,
    selective_scan_parallel, selective_scan_sequential, ScanState, SsmParams,
};

/// State dimension per channel.
pub const DEFAULT_N_STATE: usize = 16;
