//! Per-(scheme, site, budget, seed) statistics, CSV output and gnuplot scripts.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const CSV_HEADER: &str = "scheme,site,budget,seed,mean_eta,p10,p50,p90,mean_rate,n_ues,wall_ms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scheme: String,
    pub site: u32,
    pub budget: usize,
    pub seed: u64,
    pub mean_eta: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub mean_rate: f64,
    pub n_ues: usize,
    pub wall_ms: u64,
}

impl MetricsRecord {
    /// Summary of per-UE capture efficiencies and rates.
    pub fn from_samples(scheme: &str, site: u32, budget: usize, seed: u64, etas: &[f64], rates: &[f64]) -> Self {
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let mut sorted = etas.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            scheme: scheme.into(),
            site,
            budget,
            seed,
            mean_eta: mean(etas).clamp(0.0, 1.0),
            p10: percentile(&sorted, 0.10),
            p50: percentile(&sorted, 0.50),
            p90: percentile(&sorted, 0.90),
            mean_rate: mean(rates),
            n_ues: etas.len(),
            wall_ms: 0,
        }
    }

    fn sort_key(&self) -> (String, u32, usize, u64) {
        (self.scheme.clone(), self.site, self.budget, self.seed)
    }
}

/// Linear interpolation between order statistics of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let x = p * (n - 1) as f64;
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (x - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn sort_records(records: &mut [MetricsRecord]) {
    records.sort_by_key(MetricsRecord::sort_key);
}

pub fn write_csv<W: Write>(records: &[MetricsRecord], out: W) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Config("no records to write".into()));
    }
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(out);
    for r in &sorted {
        w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    write_csv(records, std::io::BufWriter::new(file))
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Io(e.to_string()))?;
    let header = r.headers().map_err(|e| HarnessError::Io(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(HarnessError::Config(format!("unexpected CSV header {header}")));
    }
    r.deserialize().map(|row| row.map_err(|e| HarnessError::Io(e.to_string()))).collect()
}

/// Gnuplot script plotting mean capture efficiency and rate against budget,
/// one curve per scheme.
pub fn emit_plot_script(records: &[MetricsRecord], csv_name: &str, path: &Path) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Config("no records to plot".into()));
    }
    let mut schemes: Vec<&str> = records.iter().map(|r| r.scheme.as_str()).collect();
    schemes.sort_unstable();
    schemes.dedup();
    let stem = csv_name.trim_end_matches(".csv");
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str("set xlabel 'target-site budget'\n");
    for (col, label, suffix) in [(5, "mean capture efficiency", "eta"), (9, "mean effective rate (bit/s/Hz)", "rate")] {
        s.push_str(&format!("set output '{stem}_{suffix}.png'\nset ylabel '{label}'\nplot \\\n"));
        let lines: Vec<String> = schemes
            .iter()
            .map(|name| {
                format!(
                    "  '{csv_name}' using (strcol(1) eq '{name}' ? $3 : 1/0):(strcol(1) eq '{name}' ? ${col} : 1/0) \
                     with linespoints title '{name}'"
                )
            })
            .collect();
        s.push_str(&lines.join(", \\\n"));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Mean of `mean_eta` (or rate) over seeds for one scheme and site.
pub fn seed_average(records: &[MetricsRecord], scheme: &str, site: Option<u32>, budget: usize, rate: bool) -> Option<f64> {
    let hits: Vec<f64> = records
        .iter()
        .filter(|r| r.scheme == scheme && r.budget == budget && site.is_none_or(|s| r.site == s))
        .map(|r| if rate { r.mean_rate } else { r.mean_eta })
        .collect();
    (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64)
}
