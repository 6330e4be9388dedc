use super::{NnError, Tensor};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<f64, NnError> {
    pred.check_same_shape(target, "bce_loss")?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| bce_scalar(p as f64, t as f64))
        .sum();
    Ok(sum / pred.len() as f64)
}

pub(crate) fn bce_scalar(p: f64, t: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// Mean absolute difference.
pub fn l1_loss(a: &Tensor, b: &Tensor) -> Result<f64, NnError> {
    a.check_same_shape(b, "l1_loss")?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(sum / a.len() as f64)
}

/// Subgradient of [`l1_loss`] with respect to `a`, scaled by `weight`.
pub fn l1_grad(a: &Tensor, b: &Tensor, weight: f32) -> Result<Tensor, NnError> {
    a.check_same_shape(b, "l1_grad")?;
    let scale = weight / a.len().max(1) as f32;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            if x > y {
                scale
            } else if x < y {
                -scale
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}
