use super::tape::{Tape, Var};
use crate::error::Result;
use crate::numkit::Matrix;

/// Largest relative discrepancy between reverse-mode gradients and central
/// differences, `|analytic − numeric| / (|analytic| + 1e-8)`, over every
/// coordinate of every input.
///
/// `f` is rebuilt on a fresh tape for each evaluation and must be a
/// deterministic function of its inputs.
pub fn grad_check<F>(f: F, points: &[Matrix], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic: Vec<Matrix> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = points.iter().map(|p| tape.var(p.clone())).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|&v| grads.get(v)).collect()
    };

    let eval = |pts: &[Matrix]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = pts.iter().map(|p| tape.var(p.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut worst = 0.0_f64;
    let mut shifted = points.to_vec();
    for (k, point) in points.iter().enumerate() {
        for i in 0..point.len() {
            let x0 = point.as_slice()[i];
            shifted[k].as_mut_slice()[i] = x0 + h;
            let up = eval(&shifted)?;
            shifted[k].as_mut_slice()[i] = x0 - h;
            let down = eval(&shifted)?;
            shifted[k].as_mut_slice()[i] = x0;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k].as_slice()[i];
            worst = worst.max((a - numeric).abs() / (a.abs() + 1e-8));
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check`].
pub fn grad_check_single<F>(f: F, point: &Matrix, h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    grad_check(|t, vs| f(t, vs[0]), std::slice::from_ref(point), h)
}
