//! Plain-text and CSV renderings: metrics down the side, protocols across.

use std::fmt::Write as _;

use dtnlab_core::mobility::Regime;

use crate::sweep::{Aggregate, CellRecord, MeanStd, PROTOCOL_ORDER};

type Pick = fn(&Aggregate) -> Option<MeanStd>;

const METRICS: [(&str, Pick, usize); 4] = [
    ("Delivery Probability", |a| a.delivery_probability, 3),
    ("Overhead Ratio", |a| a.overhead_ratio, 3),
    ("Latency Avg (s)", |a| a.latency_avg, 0),
    ("Buffertime Avg (s)", |a| a.buffertime_avg, 0),
];

fn ordered<'a>(rows: &[&'a Aggregate]) -> Vec<&'a Aggregate> {
    PROTOCOL_ORDER.iter().filter_map(|p| rows.iter().find(|a| a.protocol == *p).copied()).collect()
}

fn fmt_cell(v: Option<MeanStd>, digits: usize) -> String {
    match v {
        Some(m) => format!("{:.*} ± {:.*}", digits, m.mean, digits, m.std),
        None => "n/a".into(),
    }
}

pub fn summary_text(regime: Regime, scenario: &str, rows: &[&Aggregate]) -> String {
    let cols = ordered(rows);
    let seeds = cols.first().and_then(|a| a.delivery_probability).map_or(0, |m| m.n);
    let mut out = format!("{} / {} (n = {seeds})\n", regime.as_str(), scenario);
    let mut table: Vec<Vec<String>> = vec![std::iter::once("Metric".to_string())
        .chain(cols.iter().map(|a| a.protocol.label().to_string()))
        .collect()];
    for (name, pick, digits) in METRICS {
        table.push(
            std::iter::once(name.to_string()).chain(cols.iter().map(|a| fmt_cell(pick(a), digits))).collect(),
        );
    }
    let widths: Vec<usize> =
        (0..table[0].len()).map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    for row in &table {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                let _ = write!(line, "{cell}{}", " ".repeat(pad));
            } else {
                let _ = write!(line, "  {}{cell}", " ".repeat(pad));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[&Aggregate]) -> String {
    let cols = ordered(rows);
    let mut out = String::from("metric");
    for a in &cols {
        let _ = write!(out, ",{0} mean,{0} std", a.protocol.label());
    }
    out.push('\n');
    for (name, pick, _) in METRICS {
        out.push_str(name);
        for a in &cols {
            match pick(a) {
                Some(m) => {
                    let _ = write!(out, ",{},{}", m.mean, m.std);
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn records_csv(records: &[CellRecord]) -> String {
    let mut out = String::from(
        "protocol,scenario,regime,seed,created,delivered,relayed,delivery_probability,overhead_ratio,latency_avg,buffertime_avg,hopcount_avg,gate_decisions,gate_relayed,fallbacks\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in records {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.protocol.label(),
            r.scenario,
            r.regime.as_str(),
            r.seed,
            m.created,
            m.delivered,
            m.relayed,
            m.delivery_probability,
            opt(m.overhead_ratio),
            opt(m.latency_avg),
            opt(m.buffertime_avg),
            opt(m.hopcount_avg),
            r.gate.decisions,
            r.gate.relayed,
            r.gate.fallbacks
        );
    }
    out
}
