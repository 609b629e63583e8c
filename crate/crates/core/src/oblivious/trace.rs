//! Access-trace recording for oblivious kernels.
//!
//! Kernels report every primitive step to a [`Tracer`]. Events carry the
//! operation kind, the operand shape and the element offset touched; they
//! never carry a data value. A kernel is oblivious when its trace depends
//! only on shapes and configuration.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Load,
    Store,
    Compare,
    Equal,
    Select,
    Perturb,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub op: OpKind,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub step: usize,
}

/// Ordered list of events recorded during one kernel invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AccessTrace {
    events: Vec<TraceEvent>,
}

impl AccessTrace {
    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

impl fmt::Display for AccessTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            writeln!(f, "{:>6} {:?} {:?} @{}", e.step, e.op, e.shape, e.offset)?;
        }
        Ok(())
    }
}

pub trait Tracer {
    fn record(&mut self, op: OpKind, shape: &[usize], offset: usize);
}

/// Tracer that discards everything; used on the production path.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTrace;

impl Tracer for NoTrace {
    #[inline(always)]
    fn record(&mut self, _op: OpKind, _shape: &[usize], _offset: usize) {}
}

#[derive(Debug, Default)]
pub struct Recorder {
    trace: AccessTrace,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> AccessTrace {
        self.trace
    }
}

impl Tracer for Recorder {
    fn record(&mut self, op: OpKind, shape: &[usize], offset: usize) {
        let step = self.trace.events.len();
        self.trace.events.push(TraceEvent {
            op,
            shape: shape.to_vec(),
            offset,
            step,
        });
    }
}

/// A kernel that can run under a recording tracer.
///
/// Only types implementing this trait can be passed to [`with_trace`], so an
/// untraceable kernel is rejected at compile time.
pub trait TraceableKernel {
    type Input: ?Sized;
    type Output;

    const NAME: &'static str;

    fn run<R: Tracer>(&self, input: &Self::Input, tracer: &mut R) -> Self::Output;
}

/// Runs `kernel` on `input` and returns its result with the recorded trace.
/// Recording does not alter the result.
pub fn with_trace<K: TraceableKernel>(kernel: &K, input: &K::Input) -> (K::Output, AccessTrace) {
    let mut rec = Recorder::new();
    let out = kernel.run(input, &mut rec);
    (out, rec.finish())
}
