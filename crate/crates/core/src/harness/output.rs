//! CSV emission. Every file starts with a `#` comment row carrying the
//! configuration and seed; numbers are written with 17 significant digits so
//! they round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::Ensemble;
use crate::error::Result;
use crate::metrics::MetricsSeries;

use super::aggregate::{metric_names, AggregateRow};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn metrics_csv(comment: &str, series: &MetricsSeries) -> String {
    let mut s = String::new();
    writeln!(s, "{comment}").unwrap();
    writeln!(s, "{}", MetricsSeries::header(series.d).join(",")).unwrap();
    for r in &series.rows {
        let mut fields = vec![num(r.t), num(r.ssd_v), num(r.ssd_x), num(r.d_x), num(r.d_v)];
        fields.extend(r.momentum.iter().map(|&m| num(m)));
        fields.push(num(r.energy));
        fields.push(opt(r.l2_error));
        writeln!(s, "{}", fields.join(",")).unwrap();
    }
    s
}

pub fn aggregate_csv(comment: &str, d: usize, rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{comment}").unwrap();
    let mut header = vec!["t".to_string()];
    for m in metric_names(d) {
        for q in ["mean", "q10", "q50", "q90"] {
            header.push(format!("{m}_{q}"));
        }
    }
    header.push("replications".into());
    writeln!(s, "{}", header.join(",")).unwrap();
    for r in rows {
        let mut fields = vec![num(r.t)];
        for st in &r.stats {
            match st {
                Some(st) => fields.extend([st.mean, st.q10, st.q50, st.q90].map(num)),
                None => fields.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        fields.push(r.count.to_string());
        writeln!(s, "{}", fields.join(",")).unwrap();
    }
    s
}

/// Rows `(t, particle_id, x_0.., v_0..)` for every snapshot.
pub fn snapshot_csv(comment: &str, snapshots: &[Ensemble]) -> String {
    let mut s = String::new();
    writeln!(s, "{comment}").unwrap();
    let d = snapshots.first().map_or(1, Ensemble::d);
    let mut header = vec!["t".to_string(), "particle_id".to_string()];
    header.extend((0..d).map(|c| format!("x_{c}")));
    header.extend((0..d).map(|c| format!("v_{c}")));
    writeln!(s, "{}", header.join(",")).unwrap();
    for e in snapshots {
        for i in 0..e.n() {
            let mut fields = vec![num(e.t), i.to_string()];
            fields.extend(e.pos(i).iter().map(|&x| num(x)));
            fields.extend(e.vel(i).iter().map(|&v| num(v)));
            writeln!(s, "{}", fields.join(",")).unwrap();
        }
    }
    s
}

/// Generic table: header plus preformatted rows.
pub fn table_csv(comment: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    writeln!(s, "{comment}").unwrap();
    writeln!(s, "{}", header.join(",")).unwrap();
    for r in rows {
        writeln!(s, "{}", r.join(",")).unwrap();
    }
    s
}

pub fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

/// Order-sensitive FNV-1a hash of an ensemble's bit patterns, used to show
/// that runs started from the same initial data.
pub fn state_hash(e: &Ensemble) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &x in e.x().iter().chain(e.v()) {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}
