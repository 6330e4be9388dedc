//! Sends a caption through the bit-level codec over a fading grid and shows
//! what survives at each SNR with perfect channel knowledge.

use lam_msc::cge::TaskConfig;
use lam_msc::channel::{apply_channel, gen_channel};
use lam_msc::phy::{decide, demodulate, detokenize, equalize, map_to_grid, modulate, ser, tokenize, Equalizer};

fn main() -> anyhow::Result<()> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "Jane and me in a playful pose. The background is a garden.".into());
    let pattern = TaskConfig::default().pilots.pattern(32, 32)?;
    let symbols = modulate(&tokenize(&text), 1)?;
    for snr in [0.0, 5.0, 10.0, 15.0, 20.0, f64::INFINITY] {
        let mut received = Vec::new();
        let mut decided = Vec::new();
        for (k, frame) in map_to_grid(&symbols, &pattern)?.into_iter().enumerate() {
            let h = gen_channel(k as u64, 32, 32, 4.0, 4.0)?;
            let y = apply_channel(&frame.grid, &h, snr, 100 + k as u64)?;
            let eq = equalize(&y, &h.gains, 0.0, Equalizer::Zf)?;
            let payload = frame.payload(&eq);
            decided.extend(payload.iter().copied().map(decide));
            received.extend(payload);
        }
        let out = detokenize(&demodulate(&received, 1)?.stream);
        let s = ser(&symbols, &decided[..symbols.len()])?;
        println!("{snr:>4} dB  ser {s:.4}  {:?}", out.text);
    }
    Ok(())
}
