use super::ParameterStore;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst entrywise disagreement between analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `(parameter name, max relative error)` in store order.
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Magnitudes below this are compared absolutely: central differences at the default
/// step carry roughly `1e-11` of roundoff, so smaller gradients cannot be resolved.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

/// Compares the gradients stored in `params` against central differences of `loss_fn`.
///
/// `params.grad` must already hold the analytic gradient. Values are perturbed in place
/// and restored bit-for-bit before returning.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &mut ParameterStore, step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::arg(format!("finite-difference step must be positive, got {step}")));
    }
    let base = loss_fn(params)?;
    let again = loss_fn(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::Diagnostic(format!(
            "loss evaluated twice at the same point gave {base} and {again}"
        )));
    }
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let mut per_param = Vec::with_capacity(names.len());
    for name in names {
        let n = params.get(&name).map(|p| p.value.len()).unwrap_or(0);
        let mut worst = 0.0_f64;
        for k in 0..n {
            let original = params.get(&name).unwrap().value.as_slice()[k];
            params.get_mut(&name).unwrap().value.as_mut_slice()[k] = original + step;
            let plus = loss_fn(params)?;
            params.get_mut(&name).unwrap().value.as_mut_slice()[k] = original - step;
            let minus = loss_fn(params)?;
            params.get_mut(&name).unwrap().value.as_mut_slice()[k] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = params.get(&name).unwrap().grad.as_slice()[k];
            worst = worst.max(relative_error(analytic, numeric));
        }
        per_param.push((name, worst));
    }
    Ok(GradCheckReport { per_param })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    #[test]
    fn quadratic_loss() {
        let mut store = ParameterStore::new();
        store
            .insert("theta", Matrix::from_vec(3, 1, vec![0.5, -1.25, 2.0]).unwrap())
            .unwrap();
        let theta = store.get("theta").unwrap().value.clone();
        store.get_mut("theta").unwrap().grad = theta;
        let report = finite_diff_check(
            |p| Ok(0.5 * p.get("theta").unwrap().value.as_slice().iter().map(|v| v * v).sum::<f64>()),
            &mut store,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.max_error() < 1e-9, "{report:?}");
        assert_eq!(store.get("theta").unwrap().value.as_slice(), &[0.5, -1.25, 2.0]);
    }

    #[test]
    fn detects_non_deterministic_loss() {
        let mut store = ParameterStore::new();
        store.insert("theta", Matrix::zeros(1, 1)).unwrap();
        let mut calls = 0.0;
        let err = finite_diff_check(
            |_| {
                calls += 1.0;
                Ok(calls)
            },
            &mut store,
            DEFAULT_STEP,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Diagnostic(_)));
    }

    #[test]
    fn rejects_bad_step() {
        let mut store = ParameterStore::new();
        assert!(finite_diff_check(|_| Ok(0.0), &mut store, 0.0).is_err());
    }
}
