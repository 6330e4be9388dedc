//! End-to-end orchestration: modal transformation, semantic extraction,
//! transmission, semantic recovery and modal recovery, plus sweeps.

mod config;
mod corpus;
mod report;

pub use config::{Backend, Backends, Endpoints, Estimator, PipelineConfig};
pub use corpus::{config_corpus, load_corpus, parse_corpus, write_corpus};
pub use report::{format_sig6, sweep, write_report, ReportRow, SweepReport, REPORT_HEADER};

use std::time::{Duration, Instant};

use num_complex::Complex32;
use serde::Serialize;

use crate::cge::{estimate, load_model, make_condition, CganModel, CgeError};
use crate::channel::{
    apply_channel, gen_channel, ls_estimate, nmse, noise_variance, ChannelError, ChannelRealization, ComplexGrid,
    PilotPattern,
};
use crate::lkb::{LkbError, PassThrough, Personalizer, Profile, PromptBase, RemotePersonalizer, RulePersonalizer};
use crate::mma::{Aligner, MockAligner, Modality, RemoteAligner, ScenePayload};
use crate::phy::{decide, equalize, map_to_grid, ser, PhyError, RepetitionQpsk, SymbolCodec};
use crate::semeval::{cosine, Embedder, RemoteEmbedder, SemevalError, TrigramEmbedder};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Cge(#[from] CgeError),
    #[error(transparent)]
    Lkb(#[from] LkbError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Semeval(#[from] SemevalError),
}

impl PipelineError {
    /// True for errors caused by the configuration or its referenced files.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Io { .. }
                | PipelineError::Corpus { .. }
                | PipelineError::EmptyCorpus
                | PipelineError::Lkb(_)
        ) || matches!(self, PipelineError::Cge(CgeError::Io { .. } | CgeError::Format(_) | CgeError::Version { .. }))
    }
}

/// One of the five workflow steps, plus scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    ModalTransformation,
    SemanticExtraction,
    Transmission,
    SemanticRecovery,
    ModalRecovery,
    Scoring,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

/// A message to send: a scene or ready-made text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Message {
    Scene(ScenePayload),
    Text(String),
}

impl Message {
    fn modality(&self) -> Modality {
        match self {
            Message::Scene(s) => s.modality,
            Message::Text(_) => Modality::Text,
        }
    }
}

fn as_millis<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}

/// JSON has no infinity; the noiseless sentinel is written as `"inf"`.
pub(crate) fn snr_json<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&report::format_sig6(*v))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    #[serde(serialize_with = "as_millis")]
    pub modal_transformation: Duration,
    #[serde(serialize_with = "as_millis")]
    pub semantic_extraction: Duration,
    #[serde(serialize_with = "as_millis")]
    pub transmission: Duration,
    #[serde(serialize_with = "as_millis")]
    pub semantic_recovery: Duration,
    #[serde(serialize_with = "as_millis")]
    pub modal_recovery: Duration,
    #[serde(serialize_with = "as_millis")]
    pub scoring: Duration,
}

/// Every intermediate of one transmission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmissionRecord {
    pub input: Message,
    #[serde(serialize_with = "snr_json")]
    pub snr_db: f64,
    pub estimator: Estimator,
    pub caption: String,
    pub extracted: String,
    /// Extraction kept nothing, so the full caption was sent.
    pub extract_fallback: bool,
    pub received: String,
    pub recovered: String,
    pub recovered_payload: Option<ScenePayload>,
    /// What the receiver would obtain over an ideal link.
    pub reference: String,
    pub cosine: f64,
    pub correct: bool,
    pub frame_ser: Vec<f64>,
    pub frame_nmse: Vec<f64>,
    pub invalid_tokens: usize,
    pub missing_terminator: bool,
    pub errors: Vec<StageError>,
    pub timings: Timings,
}

impl TransmissionRecord {
    pub fn mean_ser(&self) -> f64 {
        mean(&self.frame_ser)
    }

    pub fn mean_nmse(&self) -> f64 {
        mean(&self.frame_nmse)
    }

    pub fn failed_stage(&self) -> Option<Stage> {
        self.errors.first().map(|e| e.stage)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// SplitMix64 finalizer over `(master, index, stream)`.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A configured pipeline with its resources loaded.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub model: Option<CganModel>,
    pub prompt_base: PromptBase,
    pattern: PilotPattern,
    aligner: Box<dyn Aligner + Send + Sync>,
    personalizer: Box<dyn Personalizer + Send + Sync>,
    embedder: Box<dyn Embedder + Send + Sync>,
}

impl Pipeline {
    /// Loads the model and prompt base named by the config.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate(false)?;
        let model = match &config.model {
            Some(path) if config.estimators.contains(&Estimator::Cge) => Some(load_model(path)?),
            _ => None,
        };
        Self::with_model(config, model)
    }

    /// Uses an in-memory model instead of the config's model path.
    pub fn with_model(config: PipelineConfig, model: Option<CganModel>) -> Result<Self, PipelineError> {
        config.validate(model.is_some())?;
        if config.estimators.contains(&Estimator::Cge) {
            let m = model
                .as_ref()
                .ok_or_else(|| PipelineError::Config("estimator cge requires a model".into()))?;
            if (m.rows, m.cols, m.pilots) != (config.rows, config.cols, config.pilots()) {
                return Err(PipelineError::Config(format!(
                    "model was trained for a {}x{} grid with pilots {:?}, config asks for {}x{} with {:?}",
                    m.rows,
                    m.cols,
                    m.pilots,
                    config.rows,
                    config.cols,
                    config.pilots()
                )));
            }
        }
        let prompt_base = match &config.prompt_base {
            Some(path) => PromptBase::load(path)?,
            None => PromptBase::example(),
        };
        prompt_base.get(&config.sender)?;
        prompt_base.get(&config.receiver)?;
        let pattern = config.pilots().pattern(config.rows, config.cols)?;
        let endpoint = |ep: &Option<crate::remote::Endpoint>| ep.clone().expect("validated");
        let aligner: Box<dyn Aligner + Send + Sync> = match config.backends.mma {
            Backend::Mock => Box::new(MockAligner),
            Backend::Remote => Box::new(RemoteAligner {
                endpoint: endpoint(&config.endpoints.mma),
            }),
        };
        let personalizer: Box<dyn Personalizer + Send + Sync> = match (config.lkb_enabled, config.backends.lkb) {
            (false, _) => Box::new(PassThrough),
            (true, Backend::Mock) => Box::new(RulePersonalizer),
            (true, Backend::Remote) => Box::new(RemotePersonalizer {
                endpoint: endpoint(&config.endpoints.lkb),
            }),
        };
        let embedder: Box<dyn Embedder + Send + Sync> = match config.backends.embed {
            Backend::Mock => Box::new(TrigramEmbedder),
            Backend::Remote => Box::new(RemoteEmbedder {
                endpoint: endpoint(&config.endpoints.embed),
            }),
        };
        Ok(Pipeline {
            config,
            model,
            prompt_base,
            pattern,
            aligner,
            personalizer,
            embedder,
        })
    }

    pub fn sender(&self) -> &Profile {
        self.prompt_base.get(&self.config.sender).expect("checked at construction")
    }

    pub fn receiver(&self) -> &Profile {
        self.prompt_base.get(&self.config.receiver).expect("checked at construction")
    }

    fn channel(&self, seed: u64) -> Result<ChannelRealization, ChannelError> {
        if self.config.fading {
            gen_channel(seed, self.config.rows, self.config.cols, self.config.sigma_f, self.config.sigma_t)
        } else {
            Ok(ChannelRealization {
                gains: ComplexGrid::filled(self.config.rows, self.config.cols, Complex32::new(1.0, 0.0)),
                sigma_f: 0.0,
                sigma_t: 0.0,
                seed,
            })
        }
    }

    fn estimate_gains(&self, estimator: Estimator, y: &ComplexGrid, h: &ComplexGrid) -> Result<ComplexGrid, String> {
        match estimator {
            Estimator::Perfect => Ok(h.clone()),
            Estimator::None => Ok(ComplexGrid::filled(y.rows(), y.cols(), Complex32::new(1.0, 0.0))),
            Estimator::Ls => ls_estimate(y, &self.pattern).map_err(|e| e.to_string()),
            Estimator::Cge => {
                let model = self.model.as_ref().ok_or("no model loaded")?;
                let c = make_condition(y, &self.pattern).map_err(|e| e.to_string())?;
                estimate(model, &c).map_err(|e| e.to_string())
            }
        }
    }

    /// Sends `text` over the simulated link. Channel and noise draws depend
    /// only on `(master seed, index, frame)`, so every SNR and estimator sees
    /// the same fading and the same noise shape.
    fn transmit(&self, text: &str, snr_db: f64, estimator: Estimator, index: u64, rec: &mut TransmissionRecord) -> Result<String, PhyError> {
        let codec = RepetitionQpsk {
            repetition: self.config.repetition,
        };
        let symbols = codec.encode(text)?;
        let frames = map_to_grid(&symbols, &self.pattern)?;
        let noise_var = noise_variance(snr_db);
        let mut received = Vec::with_capacity(symbols.len());
        let mut offset = 0;
        for (k, frame) in frames.iter().enumerate() {
            let k = k as u64;
            let h = self.channel(derive_seed(self.config.master_seed, index, 2 * k))?;
            let y = apply_channel(&frame.grid, &h, snr_db, derive_seed(self.config.master_seed, index, 2 * k + 1))?;
            let h_hat = match self.estimate_gains(estimator, &y, &h.gains) {
                Ok(g) => g,
                Err(message) => {
                    rec.errors.push(StageError {
                        stage: Stage::Transmission,
                        message,
                    });
                    ComplexGrid::filled(y.rows(), y.cols(), Complex32::new(1.0, 0.0))
                }
            };
            rec.frame_nmse.push(nmse(&h_hat, &h.gains)?);
            let eq = equalize(&y, &h_hat, noise_var, self.config.equalizer)?;
            let payload = frame.payload(&eq);
            let sent = &symbols[offset..offset + frame.occupancy];
            offset += frame.occupancy;
            let decided: Vec<Complex32> = payload.iter().map(|&s| decide(s)).collect();
            rec.frame_ser.push(ser(sent, &decided)?);
            received.extend(payload);
        }
        let (text, demod) = codec.decode(&received)?;
        rec.invalid_tokens = text.invalid_tokens;
        rec.missing_terminator = demod.missing_terminator;
        Ok(text.text)
    }

    /// Runs the five steps on one message and scores the result. Stage
    /// failures are recorded and the run continues with the best text so far.
    pub fn run(&self, message: &Message, snr_db: f64, estimator: Estimator, index: u64) -> TransmissionRecord {
        let (sender, receiver) = (self.sender(), self.receiver());
        let mut rec = TransmissionRecord {
            input: message.clone(),
            snr_db,
            estimator,
            caption: String::new(),
            extracted: String::new(),
            extract_fallback: false,
            received: String::new(),
            recovered: String::new(),
            recovered_payload: None,
            reference: String::new(),
            cosine: 0.0,
            correct: false,
            frame_ser: Vec::new(),
            frame_nmse: Vec::new(),
            invalid_tokens: 0,
            missing_terminator: false,
            errors: Vec::new(),
            timings: Timings::default(),
        };
        let fail = |rec: &mut TransmissionRecord, stage, message: String| rec.errors.push(StageError { stage, message });

        let t = Instant::now();
        rec.caption = match message {
            Message::Scene(scene) => self.aligner.to_text(scene).unwrap_or_else(|e| {
                fail(&mut rec, Stage::ModalTransformation, e.to_string());
                String::new()
            }),
            Message::Text(text) => text.clone(),
        };
        rec.timings.modal_transformation = t.elapsed();

        let t = Instant::now();
        rec.extracted = match self.personalizer.extract(&rec.caption, sender, receiver) {
            Ok(p) if p.empty => {
                rec.extract_fallback = true;
                rec.caption.clone()
            }
            Ok(p) => p.text,
            Err(e) => {
                fail(&mut rec, Stage::SemanticExtraction, e.to_string());
                rec.caption.clone()
            }
        };
        rec.timings.semantic_extraction = t.elapsed();

        let t = Instant::now();
        let extracted = rec.extracted.clone();
        rec.received = match self.transmit(&extracted, snr_db, estimator, index, &mut rec) {
            Ok(text) => text,
            Err(e) => {
                fail(&mut rec, Stage::Transmission, e.to_string());
                String::new()
            }
        };
        rec.timings.transmission = t.elapsed();

        let t = Instant::now();
        let recover = |text: &str| self.personalizer.recover(text, receiver, sender).map(|p| p.text);
        rec.recovered = recover(&rec.received).unwrap_or_else(|e| {
            fail(&mut rec, Stage::SemanticRecovery, e.to_string());
            rec.received.clone()
        });
        rec.timings.semantic_recovery = t.elapsed();

        let t = Instant::now();
        let modality = match message.modality() {
            Modality::Text => Modality::Image,
            m => m,
        };
        match self.aligner.to_scene(&rec.recovered, modality) {
            Ok(scene) => rec.recovered_payload = Some(scene),
            Err(e) => fail(&mut rec, Stage::ModalRecovery, e.to_string()),
        }
        rec.timings.modal_recovery = t.elapsed();

        let t = Instant::now();
        rec.reference = recover(&rec.extracted).unwrap_or_else(|e| {
            fail(&mut rec, Stage::Scoring, e.to_string());
            rec.extracted.clone()
        });
        let score = self
            .embedder
            .embed(&rec.reference)
            .and_then(|a| cosine(&a, &self.embedder.embed(&rec.recovered)?));
        match score {
            Ok(c) => rec.cosine = c,
            Err(e) => fail(&mut rec, Stage::Scoring, e.to_string()),
        }
        rec.correct = rec.cosine > self.config.threshold;
        rec.timings.scoring = t.elapsed();
        rec
    }
}

/// Single-message convenience wrapper over [`Pipeline::run`].
pub fn run_pipeline(
    message: &Message,
    config: &PipelineConfig,
    model: Option<CganModel>,
) -> Result<TransmissionRecord, PipelineError> {
    let pipeline = Pipeline::with_model(config.clone(), model)?;
    let snr = config.snr_db[0];
    let estimator = config.estimators[0];
    Ok(pipeline.run(message, snr, estimator, 0))
}
