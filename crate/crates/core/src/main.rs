use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use lam_msc::cge::{compare_with_ls, load_model, save_model, train_cgan_with, CganHyper, TrainingSet};
use lam_msc::channel::{gen_channel, write_dataset, ChannelDataset};
use lam_msc::mma::ScenePayload;
use lam_msc::phy::Equalizer;
use lam_msc::pipeline::{
    config_corpus, sweep, write_report, Backend, Estimator, Message, Pipeline, PipelineConfig, PipelineError,
};
use lam_msc::remote::Endpoint;
use lam_msc::server::{MockConfig, MockServer};

#[derive(Parser)]
#[command(name = "lam-msc", version, about = "Multimodal semantic communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an LMCH dataset of fading channel draws.
    GenChannels {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the conditional-GAN estimator and save it.
    TrainCge {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1024)]
        pairs: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        /// SNR of the training data.
        #[arg(long, default_value_t = 10.0)]
        train_snr: f64,
        #[arg(long, default_value_t = 1)]
        data_seed: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Held-out NMSE of a saved model against least squares, per SNR.
    EvalCge {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1_000_000)]
        seed: u64,
    },
    /// Send one message and print its transmission record as JSON.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Caption text to send.
        #[arg(long, conflicts_with = "scene")]
        text: Option<String>,
        /// Scene as one corpus-format JSON line.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Sweep the corpus over every SNR and estimator and write the CSV report.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the mock transform, personalize and embed endpoints.
    MockServe {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

/// A config file plus per-field overrides.
#[derive(Args)]
struct ConfigArgs {
    /// TOML file with `PipelineConfig` keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    pilot_spacing_f: Option<usize>,
    #[arg(long)]
    pilot_spacing_t: Option<usize>,
    #[arg(long)]
    pilot_seed: Option<u64>,
    #[arg(long)]
    sigma_f: Option<f64>,
    #[arg(long)]
    sigma_t: Option<f64>,
    #[arg(long)]
    fading: Option<bool>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long)]
    repetition: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator)]
    estimators: Option<Vec<Estimator>>,
    #[arg(long, value_parser = parse_equalizer)]
    equalizer: Option<Equalizer>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    lkb_enabled: Option<bool>,
    /// Remote MMA endpoint base URL; switches that stage to remote.
    #[arg(long)]
    mma_endpoint: Option<String>,
    #[arg(long)]
    lkb_endpoint: Option<String>,
    #[arg(long)]
    embed_endpoint: Option<String>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    sender: Option<String>,
    #[arg(long)]
    receiver: Option<String>,
    #[arg(long)]
    prompt_base: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    corpus_size: Option<usize>,
    #[arg(long)]
    corpus_seed: Option<u64>,
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    Estimator::parse(s).ok_or_else(|| format!("unknown estimator {s:?} (perfect, cge, ls, none)"))
}

fn parse_equalizer(s: &str) -> Result<Equalizer, String> {
    match s {
        "zf" => Ok(Equalizer::Zf),
        "mmse" => Ok(Equalizer::Mmse),
        _ => Err(format!("unknown equalizer {s:?} (zf, mmse)")),
    }
}

impl ConfigArgs {
    fn resolve(self) -> Result<PipelineConfig, PipelineError> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            )*};
        }
        set!(
            rows, cols, pilot_spacing_f, pilot_spacing_t, pilot_seed, sigma_f, sigma_t, fading, snr_db,
            repetition, estimators, equalizer, threshold, lkb_enabled, master_seed, sender, receiver,
            corpus_size, corpus_seed
        );
        if self.prompt_base.is_some() {
            c.prompt_base = self.prompt_base;
        }
        if self.model.is_some() {
            c.model = self.model;
        }
        if self.corpus.is_some() {
            c.corpus = self.corpus;
        }
        for (url, backend, endpoint) in [
            (self.mma_endpoint, &mut c.backends.mma, &mut c.endpoints.mma),
            (self.lkb_endpoint, &mut c.backends.lkb, &mut c.endpoints.lkb),
            (self.embed_endpoint, &mut c.backends.embed, &mut c.endpoints.embed),
        ] {
            if let Some(url) = url {
                *backend = Backend::Remote;
                *endpoint = Some(Endpoint::new(&url));
            }
        }
        Ok(c)
    }
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenChannels { cfg, count, seed, out } => {
            let c = cfg.resolve()?;
            let seeds: Vec<u64> = (0..count as u64).map(|i| seed.wrapping_add(i)).collect();
            let grids = seeds
                .iter()
                .map(|&s| gen_channel(s, c.rows, c.cols, c.sigma_f, c.sigma_t).map(|h| h.gains))
                .collect::<Result<Vec<_>, _>>()
                .map_err(config)?;
            let dataset = ChannelDataset {
                rows: c.rows,
                cols: c.cols,
                sigma_f: c.sigma_f,
                sigma_t: c.sigma_t,
                seeds,
                grids,
            };
            write_dataset(&dataset, &out).map_err(runtime)?;
            println!("wrote {count} channels to {}", out.display());
        }
        Command::TrainCge {
            cfg,
            pairs,
            epochs,
            train_snr,
            data_seed,
            seed,
            out,
        } => {
            let c = cfg.resolve()?;
            let task = c.task(train_snr);
            let samples = task.samples(pairs, data_seed).map_err(config)?;
            let set = TrainingSet::from_samples(&samples, c.rows, c.cols, c.pilots()).map_err(config)?;
            let hyper = CganHyper {
                epochs,
                ..CganHyper::default()
            };
            let model = train_cgan_with(&set, &hyper, seed, |s| {
                eprintln!(
                    "epoch {:>3}  d {:.4}  g_adv {:.4}  g_l1 {:.4}  val_nmse {:.4}",
                    s.epoch, s.d_loss, s.g_adv_loss, s.g_l1_loss, s.val_nmse
                )
            })
            .map_err(runtime)?;
            save_model(&model, &out).map_err(runtime)?;
            println!("saved model to {}", out.display());
        }
        Command::EvalCge { cfg, samples, seed } => {
            let c = cfg.resolve()?;
            let path = c.model.clone().ok_or_else(|| config(anyhow::anyhow!("--model is required")))?;
            let model = load_model(&path).map_err(config)?;
            println!("snr_db,cge_nmse,ls_nmse,n");
            for &snr in &c.snr_db {
                let task = lam_msc::cge::TaskConfig {
                    rows: model.rows,
                    cols: model.cols,
                    pilots: model.pilots,
                    ..c.task(snr)
                };
                let held_out = task.samples(samples, seed).map_err(runtime)?;
                let cmp = compare_with_ls(&model, &held_out).map_err(runtime)?;
                println!("{snr},{:.6},{:.6},{}", cmp.cge, cmp.ls, cmp.samples);
            }
        }
        Command::Run { cfg, text, scene } => {
            let c = cfg.resolve()?;
            let message = match (text, scene) {
                (Some(t), _) => Message::Text(t),
                (None, Some(line)) => {
                    let scene: ScenePayload = serde_json::from_str(&line).context("--scene").map_err(config)?;
                    Message::Scene(scene.canonical().map_err(config)?)
                }
                (None, None) => return Err(config(anyhow::anyhow!("pass --text or --scene"))),
            };
            let pipeline = Pipeline::from_config(c)?;
            let record = pipeline.run(&message, pipeline.config.snr_db[0], pipeline.config.estimators[0], 0);
            println!("{}", serde_json::to_string_pretty(&record).map_err(runtime)?);
        }
        Command::Sweep { cfg, out } => {
            let c = cfg.resolve()?;
            let corpus = config_corpus(&c)?;
            let pipeline = Pipeline::from_config(c)?;
            let report = sweep(&pipeline, &corpus)?;
            write_report(&report, &out).map_err(runtime)?;
            print!("{}", report.to_csv());
            eprintln!(
                "fingerprint {}  seed {}  records with stage errors {}",
                report.fingerprint,
                report.seed,
                report.failures()
            );
        }
        Command::MockServe { addr } => {
            let server = MockServer::start(&addr, MockConfig::default()).map_err(config)?;
            eprintln!("serving /transform, /personalize, /embed on {}", server.base_url());
            server.join();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
