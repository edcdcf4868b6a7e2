use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logarithm.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all elements and its gradient with respect
/// to `pred`.
///
/// The gradient is that of the clamped loss, so it is zero wherever the
/// prediction lies outside the clamp interval.
pub fn bce(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    check_shapes(&pred, &target)?;
    let n = pred.len() as f64;
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut total = 0.0;
    Zip::from(&mut grad)
        .and(&pred)
        .and(&target)
        .for_each(|g, &p, &t| {
            let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
            if p > BCE_EPS && p < 1.0 - BCE_EPS {
                *g = (pc - t) / (pc * (1.0 - pc)) / n;
            }
        });
    Ok((total / n, grad))
}

/// Loss value only.
pub fn bce_loss(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(&pred, &target)?;
    let mut total = 0.0;
    Zip::from(&pred).and(&target).for_each(|&p, &t| {
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
    });
    Ok(total / pred.len() as f64)
}

fn check_shapes(pred: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Dimension("empty batch".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_prediction_is_near_zero() {
        let t = array![[0.0, 1.0], [1.0, 0.0]];
        let (l, _) = bce(t.view(), t.view()).unwrap();
        assert!(l < 1.1e-7);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn half_everywhere_is_ln2() {
        let p = Array2::from_elem((3, 4), 0.5);
        let t = array![
            [0.0, 1.0, 1.0, 0.0],
            [1.0, 1.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0]
        ];
        let (l, _) = bce(p.view(), t.view()).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((l - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = array![[0.2, 0.7, 0.45], [0.9, 0.05, 0.6]];
        let t = array![[0.0, 1.0, 0.3], [1.0, 0.0, 1.0]];
        let (_, g) = bce(p.view(), t.view()).unwrap();
        let h = 1e-7;
        for i in 0..2 {
            for j in 0..3 {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp[[i, j]] += h;
                pm[[i, j]] -= h;
                let fd = (bce_loss(pp.view(), t.view()).unwrap()
                    - bce_loss(pm.view(), t.view()).unwrap())
                    / (2.0 * h);
                let rel = (fd - g[[i, j]]).abs() / fd.abs().max(1e-12);
                assert!(rel < 1e-6, "({i},{j}): {fd} vs {}", g[[i, j]]);
            }
        }
    }

    #[test]
    fn clamping_keeps_loss_finite() {
        let p = array![[0.0, 1.0]];
        let t = array![[1.0, 0.0]];
        let (l, g) = bce(p.view(), t.view()).unwrap();
        assert!(l.is_finite());
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        assert!(bce(array![[0.5]].view(), array![[0.5, 0.5]].view()).is_err());
    }
}
