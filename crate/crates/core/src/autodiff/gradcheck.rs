use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares the tape gradient of a scalar function against central finite
/// differences at `point`.
///
/// Returns `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
///
/// The closure may borrow tensors (for example model weights) as extra leaves.
pub fn finite_diff_check<'a, F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<'a>, Var) -> Result<Var>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "finite-difference step {step}"
        )));
    }
    let eval = |x: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(x, false);
        let out = f(&mut tape, v)?;
        let value = tape.value(out);
        if !value.is_scalar() {
            return Err(Error::InvalidOp {
                op: "finite_diff_check",
                msg: format!("function returned shape {:?}", value.shape()),
            });
        }
        Ok(value.data()[0])
    };

    let mut tape = Tape::new();
    let v = tape.leaf(point.clone(), true);
    let out = f(&mut tape, v)?;
    let analytic = tape.backward(out)?.take(v).expect("leaf gradient");
    if !analytic.is_finite() {
        return Err(Error::NonFinite("analytic gradient".into()));
    }

    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let (fp, fm) = (eval(plus)?, eval(minus)?);
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "function value at coordinate {i}"
            )));
        }
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = finite_diff_check(
            |t, v| {
                let sq = t.mul(v, v)?;
                t.sum(sq)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn softmax_cross_entropy() {
        let mut rng = Rng::new(11);
        let x = Tensor::randn(&[3, 5], 1.0, &mut rng);
        let err = finite_diff_check(
            |t, v| {
                let p = t.softmax(v)?;
                // cross-entropy on probabilities re-normalized through logits
                let l = t.cross_entropy(p, &[(0, 1), (1, 4), (2, 0)])?;
                Ok(l)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_function() {
        let x = Tensor::ones(&[4]);
        let err = finite_diff_check(
            |t, v| {
                let z = t.scale(v, 0.0)?;
                t.sum(z)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_bad_step() {
        let x = Tensor::ones(&[1]);
        assert!(finite_diff_check(|t, v| t.sum(v), &x, 0.0).is_err());
    }

    #[test]
    fn non_finite_is_an_error() {
        let x = Tensor::full(&[1], 1e300);
        let r = finite_diff_check(
            |t, v| {
                let sq = t.mul(v, v)?;
                t.sum(sq)
            },
            &x,
            1e-5,
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
