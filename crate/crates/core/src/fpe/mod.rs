//! Fault prototype encoder: graph attention and GRU encodings of the host
//! window, fused by schedule-keyed attention and decoded per host into
//! detection scores and prototype embeddings.

mod model;
mod prototypes;
mod train;

pub use model::{
    build_fault_embedding, neighbourhood_mask, schedule_view, FaultDetectionOutput, Fpe, FpeConfig, FpeVars, VIEW_DIM,
};
pub use prototypes::{fpe_losses, PrototypeSet, TripletNegatives};
pub use train::{detect_sequence, sequence_loss, train_fpe, FpeSample, FpeTrainConfig, FpeTrainReport};

use std::fmt::Write;

/// Tab-separated attention scores of one window.
///
/// One line per (matrix, host) with columns `interval`, `source`, `host`
/// and then the weights. `source` is `gat` (last column is the global node)
/// or `head<i>` for the fusion heads.
pub fn attention_table(interval: u64, det: &FaultDetectionOutput) -> String {
    let mut out = String::new();
    let mut emit = |name: &str, t: &crate::tensor::Tensor| {
        for i in 0..t.rows() {
            let _ = write!(out, "{interval}\t{name}\t{i}");
            for v in t.row_slice(i) {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
    };
    emit("gat", &det.gat_attention);
    for (h, t) in det.fusion_attention.iter().enumerate() {
        emit(&format!("head{h}"), t);
    }
    out
}
