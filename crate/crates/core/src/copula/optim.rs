//! Bounded one-dimensional minimization.

/// Brent's method (golden section with parabolic steps) on `[a, b]`.
/// Returns the abscissa and value of the minimum found.
pub fn brent_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Grid scan over `[lo, hi]` with `points` evaluations, then Brent on the
/// bracket around the best grid point. Non-finite values count as +∞.
pub fn scan_then_refine<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let step = (hi - lo) / (points - 1) as f64;
    let mut g = |t: f64| {
        let v = f(t);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut best = (0, f64::INFINITY);
    for i in 0..points {
        let v = g(lo + i as f64 * step);
        if v < best.1 {
            best = (i, v);
        }
    }
    let i = best.0;
    let a = lo + i.saturating_sub(1) as f64 * step;
    let b = lo + (i + 1).min(points - 1) as f64 * step;
    let (x, fx) = brent_min(&mut g, a, b, 1e-10, 200);
    let grid_x = lo + i as f64 * step;
    if fx <= best.1 {
        (x, fx)
    } else {
        (grid_x, best.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let (x, fx) = brent_min(|x| (x - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-12, 200);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scan_escapes_local_minimum() {
        let f = |x: f64| (x * 3.0).sin() + 0.1 * x * x;
        let (x, _) = scan_then_refine(f, -4.0, 4.0, 64);
        // global minimum near -0.5
        assert!((x + 0.5).abs() < 0.1, "{x}");
    }

    #[test]
    fn boundary_minimum() {
        let (x, _) = scan_then_refine(|x| x, 1.0, 2.0, 16);
        assert!((x - 1.0).abs() < 1e-8);
    }
}
