use std::path::Path;

use serde::Serialize;

use super::{Estimator, Message, Pipeline, PipelineError};
use crate::mma::ScenePayload;
use crate::semeval::accuracy_from_scores;

pub const REPORT_HEADER: &str = "snr_db,estimator,accuracy,mean_cosine,mean_nmse,mean_ser,n";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    #[serde(serialize_with = "super::snr_json")]
    pub snr_db: f64,
    pub estimator: Estimator,
    pub accuracy: f64,
    pub mean_cosine: f64,
    pub mean_nmse: f64,
    pub mean_ser: f64,
    pub n: usize,
    /// Records with at least one stage error.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<ReportRow>,
    pub fingerprint: String,
    pub seed: u64,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    pub fn row(&self, snr_db: f64, estimator: Estimator) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.snr_db == snr_db && r.estimator == estimator)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let reals = [r.snr_db, r.accuracy, r.mean_cosine, r.mean_nmse, r.mean_ser].map(format_sig6);
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                reals[0],
                r.estimator.name(),
                reals[1],
                reals[2],
                reals[3],
                reals[4],
                r.n
            ));
        }
        out
    }
}

/// C-style `%g`: six significant digits, trailing zeros removed, exponent
/// form outside `[1e-4, 1e6)`.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{v:.*}", (5 - exp) as usize))
    }
}

/// Runs every message at every `(snr, estimator)` pair of the config.
pub fn sweep(pipeline: &Pipeline, corpus: &[ScenePayload]) -> Result<SweepReport, PipelineError> {
    if corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let cfg = &pipeline.config;
    let mut snrs = cfg.snr_db.clone();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let mut estimators = cfg.estimators.clone();
    estimators.sort_by_key(|e| e.name());
    estimators.dedup();

    let mut rows = Vec::with_capacity(snrs.len() * estimators.len());
    for &snr in &snrs {
        for &estimator in &estimators {
            let (mut cos, mut nmse, mut ser, mut failures) = (Vec::new(), 0.0, 0.0, 0);
            for (i, scene) in corpus.iter().enumerate() {
                let rec = pipeline.run(&Message::Scene(scene.clone()), snr, estimator, i as u64);
                cos.push(rec.cosine);
                nmse += rec.mean_nmse();
                ser += rec.mean_ser();
                failures += usize::from(!rec.errors.is_empty());
            }
            let n = corpus.len();
            rows.push(ReportRow {
                snr_db: snr,
                estimator,
                accuracy: accuracy_from_scores(&cos, cfg.threshold)?,
                mean_cosine: cos.iter().sum::<f64>() / n as f64,
                mean_nmse: nmse / n as f64,
                mean_ser: ser / n as f64,
                n,
                failures,
            });
        }
    }
    Ok(SweepReport {
        rows,
        fingerprint: cfg.fingerprint(),
        seed: cfg.master_seed,
    })
}

pub fn write_report(report: &SweepReport, path: &Path) -> Result<(), PipelineError> {
    std::fs::write(path, report.to_csv()).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}
