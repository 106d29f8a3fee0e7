//! Layers and composite blocks built from tensor ops.
//!
//! A block registers its parameters in a [`ParamStore`] at construction and
//! keeps only [`ParamId`] handles. Values live in the store, so the same
//! block definition can be costed at full scale without allocating weights
//! ([`Tracer`]) or run on a materialized store ([`Forward`]).

mod attention;
mod bottleneck;
mod conv2plus1d;
mod forward;
mod layers;
mod lstm;
mod params;
mod trace;

pub use attention::{AttentionConfig, MultiHeadAttention, TransformerBlock};
pub use bottleneck::Bottleneck;
pub use conv2plus1d::{intermediate_width, Conv2Plus1d, ResidualConv2Plus1d};
pub use forward::{apply_bn_updates, BnUpdate, Forward};
pub use layers::{BatchNorm, Conv, LayerNorm, Linear, BN_EPS, BN_MOMENTUM, LN_EPS};
pub use lstm::{BiLstm, LstmCell};
pub use params::{Init, ParamId, ParamSpec, ParamStore, Scope};
pub use trace::{LayerCost, Tracer};
