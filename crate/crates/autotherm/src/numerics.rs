//! Small numerical utilities shared across modules: bracketed bisection,
//! finite-difference derivatives, and trapezoid accumulation on sample grids.

/// Bisection for a monotone decreasing function on [lo, hi].
///
/// Returns the abscissa where `f` crosses `target`, stopping once
/// `|f(x) - target| <= ftol` or the bracket collapses. The caller must
/// guarantee f(lo) >= target >= f(hi); monotonicity is asserted on the
/// initial bracket.
pub fn bisect_decreasing(
    mut lo: f64,
    mut hi: f64,
    target: f64,
    ftol: f64,
    f: impl Fn(f64) -> f64,
) -> f64 {
    let flo = f(lo);
    let fhi = f(hi);
    debug_assert!(flo >= fhi, "function must decrease on the bracket");
    if flo - target <= ftol.max(0.0) && target - flo <= ftol.max(0.0) {
        return lo;
    }
    if (fhi - target).abs() <= ftol.max(0.0) {
        return hi;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm - target).abs() <= ftol {
            return mid;
        }
        if fm > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs() {
            break;
        }
    }
    mid
}

/// First derivative of `y` on the (possibly non-uniform) grid `t`.
///
/// Interior points use the three-point central stencil; the endpoints use
/// one-sided second-order stencils. Needs at least three samples.
pub fn derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    assert!(n >= 3 && y.len() == n, "need >= 3 samples");
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h1 = t[i] - t[i - 1];
        let h2 = t[i + 1] - t[i];
        d[i] = (y[i + 1] * h1 * h1 - y[i - 1] * h2 * h2 + y[i] * (h2 * h2 - h1 * h1))
            / (h1 * h2 * (h1 + h2));
    }
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * y[0] + (h1 + h2) / (h1 * h2) * y[1]
        - h1 / (h2 * (h1 + h2)) * y[2];
    let (g1, g2) = (t[n - 1] - t[n - 2], t[n - 2] - t[n - 3]);
    d[n - 1] = (2.0 * g1 + g2) / (g1 * (g1 + g2)) * y[n - 1] - (g1 + g2) / (g1 * g2) * y[n - 2]
        + g1 / (g2 * (g1 + g2)) * y[n - 3];
    d
}

/// Complex-valued counterpart of [`derivative`], applied component-wise.
pub fn derivative_c(t: &[f64], y: &[crate::C64]) -> Vec<crate::C64> {
    let re: Vec<f64> = y.iter().map(|z| z.re).collect();
    let im: Vec<f64> = y.iter().map(|z| z.im).collect();
    let dre = derivative(t, &re);
    let dim = derivative(t, &im);
    dre.into_iter()
        .zip(dim)
        .map(|(r, i)| crate::C64::new(r, i))
        .collect()
}

/// Cumulative trapezoid integral of a rate series; result[0] = 0.
pub fn cumulative_trapezoid(t: &[f64], rate: &[f64]) -> Vec<f64> {
    let n = t.len();
    assert_eq!(rate.len(), n);
    let mut acc = vec![0.0; n];
    for i in 1..n {
        acc[i] = acc[i - 1] + 0.5 * (rate[i - 1] + rate[i]) * (t[i] - t[i - 1]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_finds_decreasing_root() {
        let x = bisect_decreasing(0.0, 10.0, 2.0, 1e-13, |x| 4.0 - x);
        assert!((x - 2.0).abs() < 1e-10);
    }

    #[test]
    fn derivative_is_second_order_on_cubics() {
        // For f = x^3 - 2x (f''' = 6): interior error h^2 f'''/6 = h^2,
        // endpoint error h^2 f'''/3 = 2 h^2.
        let h = 0.05;
        let t: Vec<f64> = (0..21).map(|i| i as f64 * h).collect();
        let y: Vec<f64> = t.iter().map(|&x| x * x * x - 2.0 * x).collect();
        let d = derivative(&t, &y);
        for (i, &x) in t.iter().enumerate() {
            let err = (d[i] - (3.0 * x * x - 2.0)).abs();
            let bound = if i == 0 || i == t.len() - 1 {
                2.0 * h * h
            } else {
                h * h
            };
            assert!(err <= bound * 1.001, "error {err} at {i}");
        }
    }

    #[test]
    fn derivative_handles_nonuniform_grids() {
        let t = [0.0, 0.1, 0.25, 0.3, 0.55];
        let y: Vec<f64> = t.iter().map(|&x: &f64| x * x).collect();
        let d = derivative(&t, &y);
        for (i, &x) in t.iter().enumerate() {
            assert!((d[i] - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn trapezoid_accumulates_linear_rates_exactly() {
        let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let r: Vec<f64> = t.iter().map(|&x| 3.0 * x).collect();
        let acc = cumulative_trapezoid(&t, &r);
        assert!((acc[10] - 1.5).abs() < 1e-14);
        assert_eq!(acc[0], 0.0);
    }
}
