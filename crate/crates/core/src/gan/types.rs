use serde::{Deserialize, Serialize};

/// Outcome of one pass through the discriminator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub interval: u64,
    /// `[score for S, score for N]`.
    pub d: [f64; 2],
    /// `d[1] ≥ d[0]`.
    pub chose_new: bool,
    /// Whether the encoder flagged any host, i.e. a candidate was produced
    /// in response to a predicted fault.
    pub fault_predicted: bool,
    /// Migrations in the candidate schedule.
    pub candidate_migrations: usize,
    /// Co-simulated scores, recorded during training only.
    pub sim_s: Option<f64>,
    pub sim_n: Option<f64>,
}

impl DecisionRecord {
    pub fn new(interval: u64, d: [f64; 2], fault_predicted: bool, candidate_migrations: usize) -> Self {
        Self {
            interval,
            d,
            chose_new: d[1] >= d[0],
            fault_predicted,
            candidate_migrations,
            sim_s: None,
            sim_n: None,
        }
    }
}
