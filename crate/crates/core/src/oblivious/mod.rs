//! Data-oblivious kernels.
//!
//! Each kernel's control flow and memory accesses depend only on operand
//! shapes and configuration. Comparisons are turned into 0/1 integers and
//! consumed through bit masks ([`oselect`]), never through `if` or indexing.
//! Every kernel also has a `_traced` form that reports its steps to a
//! [`Tracer`], which the tests use to check trace invariance.

mod pool;
mod primitives;
mod scrub;
mod trace;

pub use pool::{omaxpool2d, omaxpool2d_backward, omaxpool2d_traced, MaxPool2d, PoolGeometry};
pub use primitives::{
    oargmax, oargmax_traced, omax, omax_traced, oonehot, oonehot_traced, oselect, oselect_traced, ArgMax, Max,
    OneHot, Select,
};
pub(crate) use primitives::oonehot_into;
pub use scrub::{scrub_subnormals, scrub_subnormals_traced, Scrub, ScrubConfig};
pub use trace::{with_trace, AccessTrace, NoTrace, OpKind, Recorder, TraceEvent, TraceableKernel, Tracer};
