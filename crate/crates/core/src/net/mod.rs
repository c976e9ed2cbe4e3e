//! The gait classifier: one LSTM layer, FC1 with ReLU, FC2 and argmax.

mod fixture;
mod forward;
mod model;
mod window;

pub use fixture::{gen_fixture_model, random_window, FixtureSpec};
pub use forward::{
    argmax, check_window, classify, Classification, ExecMode, FloatNet, Intermediates, LayerState, NetError,
    OverflowStats, Probe, QuantizedNet, RealActivations,
};
pub use model::{
    Dims, Gate, GateParams, Model, ModelError, ModelParams, Neuron, ParamCounts, QuantizedModel, FC1_NEURONS,
    FC2_NEURONS, MAX_CELLS, MAX_CHANNELS,
};
pub use window::{make_windows, GaitStep, GaitWindow, Label, DEFAULT_STRIDE, WINDOW_LEN};
