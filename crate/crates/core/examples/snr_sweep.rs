//! Accuracy against SNR for the perfect, least-squares and no-estimate
//! receivers, written as the CSV report.
//!
//! `cargo run --release --example snr_sweep -- [messages] [out.csv]`

use lam_msc::pipeline::{config_corpus, sweep, write_report, Estimator, Pipeline, PipelineConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let messages: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(40);
    let config = PipelineConfig {
        estimators: vec![Estimator::Perfect, Estimator::Ls, Estimator::None],
        corpus_size: messages,
        ..PipelineConfig::default()
    };
    let corpus = config_corpus(&config)?;
    let report = sweep(&Pipeline::with_model(config, None)?, &corpus)?;
    print!("{}", report.to_csv());
    if let Some(out) = args.next() {
        write_report(&report, out.as_ref())?;
    }
    Ok(())
}
