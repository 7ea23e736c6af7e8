/// Proximity operator of `z ↦ α‖z‖₂ + ι_{z ≥ 0}(z)`.
///
/// Projects onto the nonnegative orthant and then shrinks the result toward
/// zero by `α` in Euclidean norm; the whole group vanishes when
/// `‖(v)₊‖₂ ≤ α`.
pub fn prox_nonneg_group(v: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    prox_nonneg_group_in_place(&mut out, alpha);
    out
}

pub fn prox_nonneg_group_in_place(v: &mut [f64], alpha: f64) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let norm = positive_norm(v);
    scale_group(v, norm, alpha);
}

/// `‖v‖₂` of an already nonnegative vector.
pub(crate) fn positive_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Applies the shrinkage factor `(1 − α/norm)₊` to a projected group.
pub(crate) fn scale_group(v: &mut [f64], norm: f64, alpha: f64) {
    if norm <= alpha || norm == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else if alpha > 0.0 {
        let s = 1.0 - alpha / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}
