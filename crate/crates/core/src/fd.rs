//! Central-difference gradient oracle for unit tests.

use crate::numkit::DenseMatrix;

/// Numerical gradient of `loss` w.r.t. every entry of every tensor in `params`.
pub fn weight_grads(
    params: &[DenseMatrix],
    h: f64,
    mut loss: impl FnMut(&[DenseMatrix]) -> f64,
) -> Vec<DenseMatrix> {
    let mut work = params.to_vec();
    let mut out: Vec<DenseMatrix> = params
        .iter()
        .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
        .collect();
    for t in 0..params.len() {
        for k in 0..params[t].data().len() {
            let orig = work[t].data()[k];
            work[t].data_mut()[k] = orig + h;
            let plus = loss(&work);
            work[t].data_mut()[k] = orig - h;
            let minus = loss(&work);
            work[t].data_mut()[k] = orig;
            out[t].data_mut()[k] = (plus - minus) / (2.0 * h);
        }
    }
    out
}

/// `|a − n| ≤ tol · max(|a|, |n|, 1e-3)` for every entry.
pub fn assert_close(analytic: &[DenseMatrix], numeric: &[DenseMatrix], tol: f64) {
    assert_eq!(analytic.len(), numeric.len());
    for (t, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert_eq!(a.shape(), n.shape());
        for (k, (x, y)) in a.data().iter().zip(n.data()).enumerate() {
            let scale = x.abs().max(y.abs()).max(1e-3);
            assert!(
                (x - y).abs() <= tol * scale,
                "tensor {t} entry {k}: analytic {x} vs numeric {y}"
            );
        }
    }
}
