//! Dataset statistics: resource and latency against bit operations.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::arch::Family;
use crate::dataset::Dataset;
use crate::featurize::bops;
use crate::targets::{Target, TargetVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BopsPoint {
    pub id: String,
    pub family: Family,
    pub reuse_factor: u64,
    pub bops: u64,
    #[serde(flatten)]
    pub targets: TargetVector,
}

pub fn bops_scatter(ds: &Dataset) -> Vec<BopsPoint> {
    ds.iter()
        .map(|s| BopsPoint {
            id: s.meta.id.clone(),
            family: s.architecture.family(),
            reuse_factor: s.hls_config.reuse_factor,
            bops: bops(&s.architecture, &s.hls_config),
            targets: s.targets(),
        })
        .collect()
}

pub fn write_scatter_csv<W: Write>(points: &[BopsPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "family", "reuse_factor", "bops", "bram", "dsp", "ff", "lut", "cycles", "ii"])?;
    for p in points {
        let mut row = vec![p.id.clone(), p.family.as_str().to_string(), p.reuse_factor.to_string(), p.bops.to_string()];
        row.extend(p.targets.to_array().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Pearson correlation, `None` when either side is constant or n < 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCorrelation {
    pub family: Family,
    pub n: usize,
    /// Correlation of log1p(BOPs) with log1p(target), per target.
    pub log_pearson: BTreeMap<Target, Option<f64>>,
}

pub fn bops_correlation(points: &[BopsPoint]) -> Vec<FamilyCorrelation> {
    let mut out = Vec::new();
    for family in Family::ALL {
        let pts: Vec<&BopsPoint> = points.iter().filter(|p| p.family == family).collect();
        if pts.is_empty() {
            continue;
        }
        let x: Vec<f64> = pts.iter().map(|p| (p.bops as f64).ln_1p()).collect();
        let log_pearson = Target::ALL
            .iter()
            .map(|&t| {
                let y: Vec<f64> = pts.iter().map(|p| p.targets.get(t).ln_1p()).collect();
                (t, pearson(&x, &y))
            })
            .collect();
        out.push(FamilyCorrelation { family, n: pts.len(), log_pearson });
    }
    out
}
