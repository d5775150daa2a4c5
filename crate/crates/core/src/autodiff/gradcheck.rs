use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Worst disagreement between tape gradients and central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Every element was within `abs_tol` or within `rel_tol` relative.
    pub passed: bool,
    pub checked: usize,
}

/// Compares the gradient of the scalar `f(inputs)` against central
/// differences with step `h·max(1, |x|)`. `f` must be deterministic: any
/// randomness has to be replayed identically on every call.
pub fn check_gradients<F>(inputs: &[Tensor], mut f: F, h: f64, rel_tol: f64, abs_tol: f64) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut eval = |values: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = values.iter().map(|x| t.param(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        Ok(t.item(o))
    };

    let mut report = GradCheck {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        passed: true,
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let x0 = input.data()[i];
            let step = h * x0.abs().max(1.0);
            work[k].data_mut()[i] = x0 + step;
            let up = eval(&work)?;
            work[k].data_mut()[i] = x0 - step;
            let down = eval(&work)?;
            work[k].data_mut()[i] = x0;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[k][i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            report.max_abs_err = report.max_abs_err.max(abs);
            if abs > abs_tol {
                report.max_rel_err = report.max_rel_err.max(rel);
            }
            if !(abs <= abs_tol || rel <= rel_tol) {
                report.passed = false;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
