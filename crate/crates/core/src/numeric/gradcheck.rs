//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::numeric::{Graph, ParamStore, Var};

/// Denominator floor of the relative error. Central differences with a
/// step of 1e-5 carry about 1e-10 of absolute rounding noise on losses of
/// order one, so gradients much smaller than the floor are compared on an
/// absolute scale instead of being judged by their noise.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

/// Relative discrepancy between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Worst entry of one parameter.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub worst_entry: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tol)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.max_rel_error > self.tol)
    }
}

fn evaluate<F>(store: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let root = build(&mut g, store)?;
    let v = g.value(root);
    if !v.is_scalar() {
        return Err(Error::Usage(format!(
            "grad_check closure returned shape {:?}, expected a scalar",
            v.shape()
        )));
    }
    Ok(v.item())
}

/// Compares the gradient from [`Graph::backward`] against central
/// differences `(f(p + h) - f(p - h)) / 2h` for every entry of every
/// parameter in `store`.
///
/// `build` must be deterministic; it is evaluated twice up front and a
/// mismatch is reported as a usage error.
pub fn grad_check<F>(store: &ParamStore, build: F, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let first = evaluate(store, &build)?;
    let second = evaluate(store, &build)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Usage(format!(
            "grad_check closure is not deterministic ({first} vs {second})"
        )));
    }

    let mut analytic = store.clone();
    analytic.zero_grad();
    {
        let mut g = Graph::new();
        let root = build(&mut g, store)?;
        g.backward(root, &mut analytic)?;
    }

    let mut probe = store.clone();
    let mut params = Vec::with_capacity(store.len());
    for (id, p) in store.iter() {
        let mut check = ParamCheck {
            name: p.name().to_string(),
            entries: p.value().numel(),
            max_rel_error: 0.0,
            worst_entry: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..p.value().numel() {
            let orig = p.value().data()[k];
            probe.get_mut(id).value_mut().data_mut()[k] = orig + step;
            let plus = evaluate(&probe, &build)?;
            probe.get_mut(id).value_mut().data_mut()[k] = orig - step;
            let minus = evaluate(&probe, &build)?;
            probe.get_mut(id).value_mut().data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(id).grad().data()[k];
            let err = relative_error(a, numeric);
            if err > check.max_rel_error || k == 0 {
                check.max_rel_error = err;
                check.worst_entry = k;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport { tol, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    #[test]
    fn quadratic_in_one_weight() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(0.7)).unwrap();
        let report = grad_check(
            &store,
            |g, s| {
                let wv = g.param(s, w);
                let sq = g.hadamard(wv, wv)?;
                Ok(g.sum(sq))
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error() < 1e-6);
    }

    #[test]
    fn detects_nondeterministic_closure() {
        use std::cell::Cell;
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(0.7)).unwrap();
        let calls = Cell::new(0u64);
        let err = grad_check(
            &store,
            |g, s| {
                // a fresh "mask" per call
                calls.set(calls.get() + 1);
                let mask = g.constant(Tensor::scalar(calls.get() as f64));
                let wv = g.param(s, w);
                let y = g.hadamard(wv, mask)?;
                Ok(g.sum(y))
            },
            1e-5,
            1e-4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn flags_a_wrong_gradient() {
        // relu at exactly zero has a kink; the one-sided analytic derivative
        // disagrees with the symmetric difference.
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(0.0)).unwrap();
        let report = grad_check(
            &store,
            |g, s| {
                let wv = g.param(s, w);
                let r = g.relu(wv);
                Ok(g.sum(r))
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!report.passed());
    }
}
