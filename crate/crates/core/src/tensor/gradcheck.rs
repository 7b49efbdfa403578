//! Central-difference gradient checking.

use crate::error::Result;

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / f64::max(1e-8, a.abs() + n.abs())
}

/// Compares `analytic` gradients against central finite differences of `f`
/// around `params`, returning the worst relative error
/// `|a - n| / max(1e-8, |a| + |n|)` over all coordinates.
///
/// `f` must be deterministic; `epsilon` is the perturbation size (1e-5 is a
/// good default for values of order one).
pub fn grad_check<F>(f: F, params: &[f64], analytic: &[f64], epsilon: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    assert_eq!(
        params.len(),
        analytic.len(),
        "analytic gradient length must match parameter length"
    );
    let mut worst = 0.0_f64;
    let mut scratch = params.to_vec();
    for i in 0..params.len() {
        scratch[i] = params[i] + epsilon;
        let plus = f(&scratch)?;
        scratch[i] = params[i] - epsilon;
        let minus = f(&scratch)?;
        scratch[i] = params[i];
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn quadratic_passes() {
        // f(x) = sum x_i^2, grad = 2x.
        let params = [0.5, -1.25, 2.0];
        let analytic: Vec<f64> = params.iter().map(|v| 2.0 * v).collect();
        let err = grad_check(
            |p| Ok(p.iter().map(|v| v * v).sum()),
            &params,
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "worst relative error {err}");
    }

    #[test]
    fn wrong_gradient_is_flagged()  {
        let params = [1.0, 2.0];
        let wrong = [2.0, 3.0]; // true grad is [2, 4]
        let err = grad_check(
            |p| Ok(p.iter().map(|v| v * v).sum()),
            &params,
            &wrong,
            1e-5,
        )
        .unwrap();
        assert!(err > 0.1, "should flag a wrong gradient, got {err}");
    }

    #[test]
    fn tape_linear_relu_mean_matches() {
        // Two-feature input through w [2,2], relu, mean; checks tape grads.
        let w0 = [0.3, -0.7, 1.1, 0.9];
        let run = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::from_vec(&[1, 2], vec![0.8, -0.4])?);
            let wt = tape.param(Tensor::from_vec(&[2, 2], w.to_vec())?);
            let b = tape.param(Tensor::zeros(&[2]));
            let h = tape.linear(x, wt, b)?;
            let r = tape.relu(h)?;
            let loss = tape.mean(r)?;
            let grads = tape.backward(loss)?;
            let gw = grads.get(wt).map_or(vec![0.0; 4], |g| g.data().to_vec());
            Ok((tape.value(loss).item()?, gw))
        };
        let (_, analytic) = run(&w0).unwrap();
        let err = grad_check(|w| run(w).map(|(l, _)| l), &w0, &analytic, 1e-5).unwrap();
        assert!(err < 1e-6, "worst relative error {err}");
    }
}
