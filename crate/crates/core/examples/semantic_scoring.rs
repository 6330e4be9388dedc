//! Scores a reference caption against progressively damaged copies.

use lam_msc::semeval::{accuracy_from_scores, cosine, embed};

fn main() -> anyhow::Result<()> {
    let reference = "Mike and I in a playful pose. The background is a garden.";
    let candidates = [
        reference,
        "Mike and I in a playful pose. The background is a gardan.",
        "Mike and I in a playful pose.",
        "Mike and I at a desk. The background is a beach.",
        "qz#k ?x; v@pl 8 w",
        "",
    ];
    let r = embed(reference);
    let mut scores = Vec::new();
    for c in candidates {
        let s = cosine(&r.values, &embed(c).values)?;
        println!("{s:>7.3}  {c:?}");
        scores.push(s);
    }
    for t in [0.3, 0.6, 0.9] {
        println!("accuracy at threshold {t}: {:.3}", accuracy_from_scores(&scores, t)?);
    }
    Ok(())
}
