//! Central finite-difference oracle for analytic gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::array::Array;
use super::tape::{Tape, Tensor};

/// Largest relative disagreement between reverse-mode gradients of `f` and
/// central differences, taken over every entry of every parameter:
/// `|a - cd| / max(|a|, |cd|, 1e-12)`.
///
/// `f` receives a fresh tape and the parameters as leaves and must return a
/// scalar. It is evaluated `1 + 2·Σ len(params)` times.
pub fn finite_diff_check<T, F>(f: F, params: &[Array<T>], eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&Tape<T>, &[Tensor<T>]) -> Result<Tensor<T>>,
{
    if !(eps > T::zero() && eps <= T::lit(1e-3)) {
        return Err(Error::config(format!("finite-difference eps {eps} outside (0, 1e-3]")));
    }
    let eval = |values: &[Array<T>], grad: bool| -> Result<(T, Vec<Vec<T>>)> {
        let tape = Tape::new();
        let leaves: Vec<Tensor<T>> = values.iter().map(|a| a.to_tensor(&tape, grad)).collect();
        let out = f(&tape, &leaves)?;
        let v = out.item()?;
        if !v.is_finite() {
            return Err(Error::numeric(format!("objective is not finite ({v})")));
        }
        let grads = if grad {
            out.backward()?;
            leaves
                .iter()
                .zip(values)
                .map(|(l, a)| l.grad().unwrap_or_else(|| vec![T::zero(); a.len()]))
                .collect()
        } else {
            Vec::new()
        };
        Ok((v, grads))
    };

    let (_, analytic) = eval(params, true)?;
    let floor = T::lit(1e-12);
    let mut work = params.to_vec();
    let mut worst = T::zero();
    for (pi, param) in params.iter().enumerate() {
        for j in 0..param.len() {
            let orig = param.data[j];
            let (hi, lo) = (orig + eps, orig - eps);
            work[pi].data[j] = hi;
            let (plus, _) = eval(&work, false)?;
            work[pi].data[j] = lo;
            let (minus, _) = eval(&work, false)?;
            work[pi].data[j] = orig;
            // realised step, exact in floating point
            let cd = (plus - minus) / (hi - lo);
            let a = analytic[pi][j];
            let err = (a - cd).abs() / a.abs().max(cd.abs()).max(floor);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
