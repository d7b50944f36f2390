use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::reports::{BufferEvent, DeliveryRecord, RelayRecord};
use crate::sim::SimOutput;

/// Summary of one run. Values that would divide by zero are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub created: u64,
    pub delivered: u64,
    pub relayed: u64,
    pub delivery_probability: f64,
    pub overhead_ratio: Option<f64>,
    /// Seconds.
    pub latency_avg: Option<f64>,
    /// Mean replica residency, seconds.
    pub buffertime_avg: Option<f64>,
    pub hopcount_avg: Option<f64>,
}

/// Metrics from the raw logs. Delivered counts unique message ids; relays
/// count every completed transfer, including the final hop.
pub fn compute_metrics(
    deliveries: &[DeliveryRecord],
    relays: &[RelayRecord],
    buffer: &[BufferEvent],
    created: u64,
) -> RunMetrics {
    let mut seen = HashSet::new();
    let mut latency = 0.0;
    let mut hops = 0.0;
    for d in deliveries {
        if seen.insert(d.id.as_str()) {
            latency += d.delivery_time;
            hops += f64::from(d.hopcount);
        }
    }
    let delivered = seen.len() as u64;
    let relayed = relays.len() as u64;
    let stays: Vec<f64> = buffer.iter().filter(|e| e.kind.ends_residency()).map(|e| e.residency).collect();
    let per_delivery = |v: f64| (delivered > 0).then(|| v / delivered as f64);
    RunMetrics {
        created,
        delivered,
        relayed,
        delivery_probability: if created > 0 { delivered as f64 / created as f64 } else { 0.0 },
        overhead_ratio: per_delivery(relayed as f64 - delivered as f64),
        latency_avg: per_delivery(latency),
        buffertime_avg: (!stays.is_empty()).then(|| stays.iter().sum::<f64>() / stays.len() as f64),
        hopcount_avg: per_delivery(hops),
    }
}

impl RunMetrics {
    pub fn from_output(out: &SimOutput) -> Self {
        compute_metrics(&out.delivery_log, &out.relay_log, &out.buffer_log, out.stats.generated)
    }
}
