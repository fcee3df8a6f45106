use serde::{Deserialize, Serialize};

use super::types::HostSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Host feature order.
pub const FEATURE_NAMES: [&str; 8] = [
    "cpu_util",
    "ram_util",
    "disk_read_util",
    "disk_write_util",
    "net_tx_util",
    "net_rx_util",
    "container_count_norm",
    "power_norm",
];

pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

/// Upper bound of each raw feature on `host`.
pub fn feature_bounds(host: &HostSpec, max_containers: f64) -> [f64; NUM_FEATURES] {
    [
        host.cpu_capacity,
        host.ram_capacity,
        host.disk_bandwidth,
        host.disk_bandwidth,
        host.net_bandwidth,
        host.net_bandwidth,
        max_containers,
        host.power_max,
    ]
}

/// `k × m × n` host features scaled to [0, 1], oldest interval first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsWindow {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl MetricsWindow {
    pub fn zeros(k: usize, m: usize, n: usize) -> Self {
        Self { k, m, n, data: vec![0.0; k * m * n] }
    }

    pub fn from_data(k: usize, m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * m * n {
            return Err(Error::shape(format!("window {k}x{m}x{n} needs {} values, got {}", k * m * n, data.len())));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::data(format!("window value {v} outside [0, 1]")));
        }
        Ok(Self { k, m, n, data })
    }

    pub fn at(&self, t: usize, host: usize, feature: usize) -> f64 {
        self.data[(t * self.m + host) * self.n + feature]
    }

    /// Host `i`'s features for all `k` intervals, time-major.
    pub fn host_sequence(&self, host: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k * self.n);
        for t in 0..self.k {
            let start = (t * self.m + host) * self.n;
            out.extend_from_slice(&self.data[start..start + self.n]);
        }
        out
    }

    /// `m × (k·n)` matrix of [`Self::host_sequence`] rows.
    pub fn host_matrix(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.m {
            data.extend(self.host_sequence(i));
        }
        Tensor::matrix(self.m, self.k * self.n, data).expect("window dims")
    }

    /// Window with hosts reordered so that new host `i` is old host `order[i]`.
    pub fn permute_hosts(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for t in 0..self.k {
            for &h in order {
                let start = (t * self.m + h) * self.n;
                data.extend_from_slice(&self.data[start..start + self.n]);
            }
        }
        Self { m: order.len(), data, ..*self }
    }
}

/// Scales raw features by their per-host bounds and clamps to [0, 1].
///
/// `raw` is indexed `[t][host][feature]`.
pub fn normalize_window(raw: &[Vec<Vec<f64>>], hosts: &[HostSpec], max_containers: f64) -> Result<MetricsWindow> {
    let k = raw.len();
    let m = hosts.len();
    let mut data = Vec::with_capacity(k * m * NUM_FEATURES);
    for (t, frame) in raw.iter().enumerate() {
        if frame.len() != m {
            return Err(Error::shape(format!("interval {t} has {} hosts, expected {m}", frame.len())));
        }
        for (i, row) in frame.iter().enumerate() {
            if row.len() != NUM_FEATURES {
                return Err(Error::shape(format!("host row has {} features, expected {NUM_FEATURES}", row.len())));
            }
            let bounds = feature_bounds(&hosts[i], max_containers);
            for (v, b) in row.iter().zip(bounds) {
                if v.is_nan() {
                    return Err(Error::data(format!("NaN feature at interval {t}, host {i}")));
                }
                if *v < 0.0 {
                    return Err(Error::data(format!("negative feature {v} at interval {t}, host {i}")));
                }
                data.push((v / b).clamp(0.0, 1.0));
            }
        }
    }
    Ok(MetricsWindow { k, m, n: NUM_FEATURES, data })
}
