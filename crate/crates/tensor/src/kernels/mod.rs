//! Slice-level forward/backward kernels used by the graph operators.

pub(crate) mod conv;
pub(crate) mod norm;
pub(crate) mod resample;
