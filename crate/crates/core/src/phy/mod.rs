//! Byte tokens, QPSK with repetition, frame mapping and equalization.

use num_complex::Complex32;

use crate::channel::{insert_pilots, ChannelError, ComplexGrid, PilotPattern};

/// Token value marking the end of a stream.
pub const TERMINATOR: u16 = 256;
/// Bits carried per token.
pub const TOKEN_BITS: usize = 10;
/// QPSK symbols per token.
pub const SYMBOLS_PER_TOKEN: usize = TOKEN_BITS / 2;
/// Regularizer added to `|Ĥ|²` by the zero-forcing equalizer.
pub const ZF_REGULARIZER: f32 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum PhyError {
    #[error("repetition factor must be at least 1")]
    ZeroRepetition,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("noise variance {0} is negative or not finite")]
    BadNoiseVariance(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Byte values followed by one [`TERMINATOR`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<u16>,
    pub origin_len: usize,
}

pub fn tokenize(text: &str) -> TokenStream {
    let mut tokens: Vec<u16> = text.bytes().map(u16::from).collect();
    tokens.push(TERMINATOR);
    TokenStream {
        tokens,
        origin_len: text.len(),
    }
}

/// Text recovered from a token stream plus damage counters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Detokenized {
    pub text: String,
    /// Tokens above [`TERMINATOR`] (only reachable after bit errors).
    pub invalid_tokens: usize,
    /// Byte sequences that were not valid UTF-8.
    pub lossy: bool,
}

/// Bytes up to the first terminator, decoded lossily; out-of-alphabet tokens
/// become U+FFFD.
pub fn detokenize(ts: &TokenStream) -> Detokenized {
    let mut bytes = Vec::with_capacity(ts.tokens.len());
    let mut invalid = 0;
    for &t in &ts.tokens {
        match t {
            TERMINATOR => break,
            0..=255 => bytes.push(t as u8),
            _ => {
                invalid += 1;
                bytes.extend_from_slice(char::REPLACEMENT_CHARACTER.encode_utf8(&mut [0; 4]).as_bytes());
            }
        }
    }
    match String::from_utf8(bytes) {
        Ok(text) => Detokenized {
            text,
            invalid_tokens: invalid,
            lossy: false,
        },
        Err(e) => Detokenized {
            text: String::from_utf8_lossy(e.as_bytes()).into_owned(),
            invalid_tokens: invalid,
            lossy: true,
        },
    }
}

fn bit_pair_symbol(b0: bool, b1: bool) -> Complex32 {
    let a = std::f32::consts::FRAC_1_SQRT_2;
    Complex32::new(if b0 { -a } else { a }, if b1 { -a } else { a })
}

/// Ten bits per token, most significant first, two bits per symbol
/// `((1-2b0) + i(1-2b1))/√2`, each symbol repeated `repetition` times.
pub fn modulate(ts: &TokenStream, repetition: usize) -> Result<Vec<Complex32>, PhyError> {
    if repetition == 0 {
        return Err(PhyError::ZeroRepetition);
    }
    let mut out = Vec::with_capacity(ts.tokens.len() * SYMBOLS_PER_TOKEN * repetition);
    for &t in &ts.tokens {
        for k in 0..SYMBOLS_PER_TOKEN {
            let shift = TOKEN_BITS - 2 * k - 2;
            let s = bit_pair_symbol((t >> (shift + 1)) & 1 == 1, (t >> shift) & 1 == 1);
            out.extend(std::iter::repeat_n(s, repetition));
        }
    }
    Ok(out)
}

/// Nearest constellation point.
pub fn decide(x: Complex32) -> Complex32 {
    bit_pair_symbol(x.re < 0.0, x.im < 0.0)
}

/// Token stream recovered from symbols, with decoding flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demodulated {
    pub stream: TokenStream,
    pub missing_terminator: bool,
    pub partial_token_dropped: bool,
}

/// Averages repetition groups, decides bit pairs by sign and reassembles
/// tokens up to the first terminator.
pub fn demodulate(symbols: &[Complex32], repetition: usize) -> Result<Demodulated, PhyError> {
    if repetition == 0 {
        return Err(PhyError::ZeroRepetition);
    }
    let per_token = SYMBOLS_PER_TOKEN * repetition;
    let mut tokens = Vec::with_capacity(symbols.len() / per_token + 1);
    let mut terminated = false;
    for chunk in symbols.chunks_exact(per_token) {
        let mut t = 0u16;
        for group in chunk.chunks_exact(repetition) {
            let mean: Complex32 = group.iter().sum();
            t = (t << 2) | (u16::from(mean.re < 0.0) << 1) | u16::from(mean.im < 0.0);
        }
        tokens.push(t);
        if t == TERMINATOR {
            terminated = true;
            break;
        }
    }
    let partial = !terminated && symbols.len() % per_token != 0;
    let origin_len = tokens.len() - usize::from(terminated);
    Ok(Demodulated {
        stream: TokenStream { tokens, origin_len },
        missing_terminator: !terminated,
        partial_token_dropped: partial,
    })
}

/// Fraction of positions where the decided constellation points differ.
pub fn ser(sent: &[Complex32], decided: &[Complex32]) -> Result<f64, PhyError> {
    if sent.len() != decided.len() {
        return Err(PhyError::LengthMismatch {
            left: sent.len(),
            right: decided.len(),
        });
    }
    if sent.is_empty() {
        return Ok(0.0);
    }
    let errors = sent.iter().zip(decided).filter(|(a, b)| decide(**a) != decide(**b)).count();
    Ok(errors as f64 / sent.len() as f64)
}

/// One transmitted grid: pilots, data symbols and zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub grid: ComplexGrid,
    /// Row-major flat indices of data cells.
    pub data_cells: Vec<usize>,
    /// Data cells carrying payload; the rest are padding.
    pub occupancy: usize,
}

impl Frame {
    pub fn padding(&self) -> usize {
        self.data_cells.len() - self.occupancy
    }

    /// Payload symbols read back from `grid` (e.g. an equalized copy).
    pub fn payload(&self, grid: &ComplexGrid) -> Vec<Complex32> {
        self.data_cells[..self.occupancy].iter().map(|&i| grid.values()[i]).collect()
    }
}

/// Fills data cells row-major across as many frames as needed (at least one).
pub fn map_to_grid(symbols: &[Complex32], pattern: &PilotPattern) -> Result<Vec<Frame>, PhyError> {
    let data_cells = pattern.data_cells();
    if data_cells.is_empty() {
        return Err(ChannelError::InvalidParameter("pilot pattern leaves no data cells".into()).into());
    }
    let zero = Complex32::new(0.0, 0.0);
    let mut frames = Vec::new();
    let mut chunks = symbols.chunks(data_cells.len()).peekable();
    if chunks.peek().is_none() {
        let grid = insert_pilots(&ComplexGrid::filled(pattern.rows(), pattern.cols(), zero), pattern)?;
        frames.push(Frame {
            grid,
            data_cells: data_cells.clone(),
            occupancy: 0,
        });
    }
    for chunk in chunks {
        let mut grid = ComplexGrid::filled(pattern.rows(), pattern.cols(), zero);
        for (&cell, &s) in data_cells.iter().zip(chunk) {
            grid.values_mut()[cell] = s;
        }
        frames.push(Frame {
            grid: insert_pilots(&grid, pattern)?,
            data_cells: data_cells.clone(),
            occupancy: chunk.len(),
        });
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equalizer {
    Zf,
    Mmse,
}

/// `x̂ = y·conj(Ĥ) / (|Ĥ|² + δ)` with `δ = 1e-9` (zf) or the noise variance (mmse).
pub fn equalize(y: &ComplexGrid, h: &ComplexGrid, noise_var: f64, mode: Equalizer) -> Result<ComplexGrid, PhyError> {
    y.check_same_extents(h)?;
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(PhyError::BadNoiseVariance(noise_var));
    }
    let delta = match mode {
        Equalizer::Zf => ZF_REGULARIZER,
        Equalizer::Mmse => noise_var as f32,
    };
    let values = y
        .values()
        .iter()
        .zip(h.values())
        .map(|(y, h)| y * h.conj() / (h.norm_sqr() + delta))
        .collect();
    Ok(ComplexGrid::from_values(y.rows(), y.cols(), values)?)
}

/// A text ↔ symbol codec; the repetition-QPSK chain is the default.
pub trait SymbolCodec {
    fn encode(&self, text: &str) -> Result<Vec<Complex32>, PhyError>;
    fn decode(&self, symbols: &[Complex32]) -> Result<(Detokenized, Demodulated), PhyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepetitionQpsk {
    pub repetition: usize,
}

impl Default for RepetitionQpsk {
    fn default() -> Self {
        RepetitionQpsk { repetition: 1 }
    }
}

impl SymbolCodec for RepetitionQpsk {
    fn encode(&self, text: &str) -> Result<Vec<Complex32>, PhyError> {
        modulate(&tokenize(text), self.repetition)
    }

    fn decode(&self, symbols: &[Complex32]) -> Result<(Detokenized, Demodulated), PhyError> {
        let d = demodulate(symbols, self.repetition)?;
        Ok((detokenize(&d.stream), d))
    }
}
