//! One-dimensional maximization helpers.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `tol`. Returns the best point seen
/// and its value, which includes both endpoints, so the result never falls
/// below `max(f(lo), f(hi))`.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut best = (a, f(a));
    let fb = f(b);
    if fb > best.1 {
        best = (b, fb);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let (x, v) = golden_section_max(|x| -(x - 0.3).powi(2) + 2.0, -1.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-5);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn endpoint_maximum_is_kept() {
        let (x, v) = golden_section_max(|x| x, 0.0, 1.0, 1e-10);
        assert_eq!(x, 1.0);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn reversed_bracket() {
        let (x, _) = golden_section_max(|x| (x).sin(), 3.0, 0.0, 1e-12);
        assert!((x - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    }
}
