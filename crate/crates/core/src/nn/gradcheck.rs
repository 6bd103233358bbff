use super::params::{Grads, ParamStore};
use super::NnError;

/// Compares analytic parameter gradients against central differences.
///
/// `loss_fn` evaluates the scalar loss for the given parameters and returns
/// its analytic gradient. The result is the maximum over all parameter
/// entries of `|analytic − numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(store: &mut ParamStore, eps: f64, mut loss_fn: F) -> Result<f64, NnError>
where
    F: FnMut(&ParamStore) -> Result<(f64, Grads), NnError>,
{
    let (_, analytic) = loss_fn(store)?;
    let mut worst = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let original = store.get(id).as_slice().expect("standard layout")[k];
            store.get_mut(id).as_slice_mut().expect("standard layout")[k] = original + eps;
            let (plus, _) = loss_fn(store)?;
            store.get_mut(id).as_slice_mut().expect("standard layout")[k] = original - eps;
            let (minus, _) = loss_fn(store)?;
            store.get_mut(id).as_slice_mut().expect("standard layout")[k] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id).as_slice().expect("standard layout")[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
