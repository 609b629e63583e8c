//! Feed-forward models: layer specs, parameters, forward and backward passes.

mod gradcheck;
mod layers;
mod model;
mod params;
mod spec;

pub use gradcheck::{max_relative_error, numeric_gradient};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward,
    ConvGeometry, ConvGrads,
};
pub use model::{
    argmax_rows, backward_aggregate, backward_per_example, model_forward, predict, ForwardPass, KernelMode,
    PerExampleGrads, Targets,
};
pub use params::{param_shapes, ParamSet};
pub use spec::{Layer, ModelSpec};
