use std::collections::BTreeMap;

use super::MeasureError;

/// Cohen's kappa between two raters, `(p_o - p_e) / (1 - p_e)`.
///
/// When chance agreement is total (both raters used one and the same
/// category throughout) the raters agree perfectly and 1.0 is returned.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MeasureError> {
    if a.len() != b.len() {
        return Err(MeasureError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MeasureError::Empty);
    }
    let n = a.len() as f64;
    let mut marginals: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        if x == y {
            agree += 1;
        }
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marginals.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
