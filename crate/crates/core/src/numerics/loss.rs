use super::Tensor;
use crate::error::{Error, Result};

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// Mean squared error over every element, with its gradient `2(pred - target)/N`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", target.shape(), pred.shape()));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((sum / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Softmax cross-entropy of one logit vector against a class index.
/// Returns the loss and `softmax(logits) - onehot(label)`, shaped like `logits`.
pub fn cross_entropy_loss(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let z = logits.data();
    if label >= z.len() {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {} classes",
            z.len()
        )));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let loss = log_sum - (z[label] - max);
    let mut grad = softmax(z);
    grad[label] -= 1.0;
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        assert_eq!(mse_loss(&a, &a).unwrap().0, 0.0);
        let (l, g) = mse_loss(&a, &Tensor::vector(vec![0.0, 0.0])).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g.data(), &[1.0, 2.0]);
        assert!(mse_loss(&a, &Tensor::vector(vec![0.0])).is_err());
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let pred = vec![0.3, -1.2, 2.5, 0.0];
        let target = Tensor::vector(vec![1.0, 0.5, -0.5, 0.25]);
        let (_, g) = mse_loss(&Tensor::vector(pred.clone()), &target).unwrap();
        let h = 1e-5;
        for i in 0..pred.len() {
            let mut p = pred.clone();
            p[i] += h;
            let up = mse_loss(&Tensor::vector(p.clone()), &target).unwrap().0;
            p[i] -= 2.0 * h;
            let dn = mse_loss(&Tensor::vector(p), &target).unwrap().0;
            assert!(((up - dn) / (2.0 * h) - g.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, _) = cross_entropy_loss(&Tensor::vector(vec![0.7; 4]), 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((l - 1.386_294_4).abs() < 1e-7);
        let (l, _) = cross_entropy_loss(&Tensor::vector(vec![10.0, 0.0, 0.0, 0.0]), 0).unwrap();
        // ln(1 + 3e^-10)
        let exact = (3.0 * (-10f64).exp()).ln_1p();
        assert!((l - exact).abs() < 1e-15);
        assert!(l < 1.4e-4);
        let (_, g) = cross_entropy_loss(&Tensor::vector(vec![3.0, -1.0, 0.5, 800.0]), 1).unwrap();
        assert!(g.data().iter().sum::<f64>().abs() < 1e-12);
        assert!(cross_entropy_loss(&Tensor::vector(vec![0.0; 4]), 4).is_err());
    }
}
