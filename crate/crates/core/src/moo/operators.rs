//! Real-coded variation operators: simulated binary crossover (SBX) and
//! polynomial mutation, both bound-aware.

use rand::Rng;

/// Bounded SBX on a single variable pair. Returns the two child values,
/// each inside `[lo, hi]`.
pub fn sbx_pair<R: Rng + ?Sized>(
    x1: f64,
    x2: f64,
    lo: f64,
    hi: f64,
    eta: f64,
    rng: &mut R,
) -> (f64, f64) {
    if (x1 - x2).abs() <= 1e-14 || hi <= lo {
        return (x1, x2);
    }
    let (y1, y2) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let u: f64 = rng.gen();
    let exp = 1.0 / (eta + 1.0);

    let spread = |bound_gap: f64| -> f64 {
        let beta = 1.0 + 2.0 * bound_gap / (y2 - y1);
        let alpha = 2.0 - beta.powf(-(eta + 1.0));
        if u <= 1.0 / alpha {
            (u * alpha).powf(exp)
        } else {
            (1.0 / (2.0 - u * alpha)).powf(exp)
        }
    };

    let betaq = spread(y1 - lo);
    let c1 = 0.5 * ((y1 + y2) - betaq * (y2 - y1));
    let betaq = spread(hi - y2);
    let c2 = 0.5 * ((y1 + y2) + betaq * (y2 - y1));

    let c1 = c1.clamp(lo, hi);
    let c2 = c2.clamp(lo, hi);
    if rng.gen_bool(0.5) {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

/// SBX over whole vectors; each variable is crossed with probability 0.5.
pub fn sbx<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    bounds: &[(f64, f64)],
    eta: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if rng.gen_bool(0.5) {
            let (u, v) = sbx_pair(a[i], b[i], lo, hi, eta, rng);
            c1[i] = u;
            c2[i] = v;
        }
    }
    (c1, c2)
}

/// Bounded polynomial mutation of a single value.
pub fn polynomial_mutation<R: Rng + ?Sized>(x: f64, lo: f64, hi: f64, eta: f64, rng: &mut R) -> f64 {
    if hi <= lo {
        return x;
    }
    let width = hi - lo;
    let d1 = (x - lo) / width;
    let d2 = (hi - x) / width;
    let u: f64 = rng.gen();
    let pow = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(pow) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(pow)
    };
    (x + dq * width).clamp(lo, hi)
}
