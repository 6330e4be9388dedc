//! Trains the conditional-GAN estimator on synthetic 10 dB data and compares
//! it with the least-squares baseline on held-out channels.
//!
//! `cargo run --release --example train_cge -- [pairs] [epochs]`

use std::time::Instant;

use lam_msc::cge::{compare_with_ls, train_cgan_with, CganHyper, TaskConfig, TrainingSet};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let pairs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1024);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50);

    let task = TaskConfig::default();
    let samples = task.samples(pairs, 1)?;
    let set = TrainingSet::from_samples(&samples, task.rows, task.cols, task.pilots)?;
    let hyper = CganHyper { epochs, ..CganHyper::default() };

    let start = Instant::now();
    let model = train_cgan_with(&set, &hyper, 1, |s| {
        println!(
            "epoch {:>3}  d {:.4}  g_adv {:.4}  g_l1 {:.4}  val_nmse {:.4}  ({:.0?})",
            s.epoch,
            s.d_loss,
            s.g_adv_loss,
            s.g_l1_loss,
            s.val_nmse,
            start.elapsed()
        );
    })?;
    println!("initial val nmse {:.4}", model.history.initial_val_nmse);

    for snr in [0.0, 5.0, 10.0, 15.0, 20.0] {
        let held_out = TaskConfig { snr_db: snr, ..task }.samples(100, 1_000_000)?;
        let cmp = compare_with_ls(&model, &held_out)?;
        println!("{snr:>4} dB  cge {:.4}  ls {:.4}", cmp.cge, cmp.ls);
    }
    Ok(())
}
