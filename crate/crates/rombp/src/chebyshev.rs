//! Chebyshev polynomial utilities shared by the propagator, the operator
//! exponential, and the dense test oracle.
//!
//! Everything here works with Chebyshev polynomials of the first kind on
//! `[-1, 1]`, evaluated through the three-term recurrence
//! `T_{k+1}(x) = 2x T_k(x) - T_{k-1}(x)`.

/// Evaluate `T_k(x)` by the three-term recurrence.
pub fn eval_tk(k: usize, x: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0;
            let mut cur = x;
            for _ in 1..k {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Evaluate a truncated Chebyshev series `sum_k c_k T_k(x)` with Clenshaw's
/// recurrence.
pub fn eval_series(coeffs: &[f64], x: f64) -> f64 {
    let Some((&c0, rest)) = coeffs.split_first() else {
        return 0.0;
    };
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in rest.iter().rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c0
}

/// Chebyshev interpolation coefficients of `f` on `[-1, 1]` using `num_nodes`
/// Chebyshev-Gauss nodes. Returns coefficients `c_0..c_{num_nodes-1}` such
/// that `f(x) ~ sum_k c_k T_k(x)`.
pub fn interp_coeffs(f: impl Fn(f64) -> f64, num_nodes: usize) -> Vec<f64> {
    assert!(num_nodes >= 1);
    let n = num_nodes;
    let fvals: Vec<f64> = (0..n)
        .map(|j| {
            let theta = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
            f(theta.cos())
        })
        .collect();
    (0..n)
        .map(|k| {
            let scale = if k == 0 { 1.0 / n as f64 } else { 2.0 / n as f64 };
            scale
                * (0..n)
                    .map(|j| {
                        let theta = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                        fvals[j] * (k as f64 * theta).cos()
                    })
                    .sum::<f64>()
        })
        .collect()
}

/// Truncate a coefficient sequence so that the discarded tail has absolute
/// sum at most `tol`. Keeps at least one coefficient.
pub fn truncate_tail(coeffs: &[f64], tol: f64) -> Vec<f64> {
    let mut tail = 0.0;
    let mut cut = coeffs.len();
    for (i, &c) in coeffs.iter().enumerate().rev() {
        tail += c.abs();
        if tail > tol {
            cut = i + 1;
            break;
        }
        cut = i;
    }
    coeffs[..cut.max(1)].to_vec()
}
