//! Central-difference gradient oracle.
//!
//! Perturbs parameters one at a time through caller-supplied accessors and
//! differentiates a scalar loss numerically. Deliberately knows nothing about
//! the network engine so it stays an independent check of the analytic
//! backward pass.

/// Numeric gradient of `loss(sys)` with respect to `n` parameters of `sys`
/// reached through `get`/`set`, using central differences with step `h`.
/// Parameters are restored to their original values.
pub fn central_diff<S, G, Set, F>(
    sys: &mut S,
    n: usize,
    get: G,
    set: Set,
    mut loss: F,
    h: f64,
) -> Vec<f64>
where
    G: Fn(&S, usize) -> f64,
    Set: Fn(&mut S, usize, f64),
    F: FnMut(&S) -> f64,
{
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let p = get(sys, i);
        set(sys, i, p + h);
        let up = loss(sys);
        set(sys, i, p - h);
        let down = loss(sys);
        set(sys, i, p);
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Largest elementwise relative error between two gradient vectors, with the
/// scale floored at 1e-6 so that exactly-zero gradients compare absolutely.
pub fn max_rel_err<T: crate::scalar::Scalar>(analytic: &[T], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric.iter()) {
        let a = a.as_f64();
        let scale = a.abs().max(n.abs()).max(1e-6);
        let rel = (a - n).abs() / scale;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}
