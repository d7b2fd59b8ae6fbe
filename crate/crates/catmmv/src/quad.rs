//! Adaptive Gauss-Kronrod (10/21 point) quadrature and a composite Simpson rule.

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Tolerances and subdivision budget for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-10, rel_tol: 1e-12, max_intervals: 10_000 }
    }
}

impl QuadOptions {
    pub fn abs(abs_tol: f64) -> Self {
        QuadOptions { abs_tol, ..Default::default() }
    }

    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions { abs_tol: 0.0, rel_tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Segment { a, b, value, err }
}

/// Integrate `f` over the finite interval `[a, b]`.
///
/// Bisects the segment with the largest error estimate until the summed estimate is
/// below `max(abs_tol, rel_tol * |I|)`. Fails rather than returning a best effort.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut segs = vec![kronrod21(&mut f, a, b)];
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.err).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::QuadratureFailure { a, b, err: f64::INFINITY, tol: opts.abs_tol });
        }
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= tol {
            return Ok(total);
        }
        if segs.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure { a, b, err, tol });
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, s)| if s.err > acc.1 { (i, s.err) } else { acc });
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::QuadratureFailure { a, b, err, tol });
        }
        segs.push(kronrod21(&mut f, s.a, mid));
        segs.push(kronrod21(&mut f, mid, s.b));
    }
}

/// Integrate `f` over `[a, inf)` through the map `z = a + (1 - u) / u`, `u` in `(0, 1]`.
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, opts: QuadOptions) -> Result<f64> {
    integrate(
        |u| {
            if u <= 0.0 {
                return 0.0;
            }
            let z = a + (1.0 - u) / u;
            let v = f(z);
            if v == 0.0 {
                0.0
            } else {
                v / (u * u)
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Composite Simpson rule with `n` (rounded up to even) panels.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n.max(2) };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Neumaier-compensated pairwise sum; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        let mut c = 0.0;
        for &x in xs {
            let t = s + x;
            if s.abs() >= x.abs() {
                c += (s - t) + x;
            } else {
                c += (x - t) + s;
            }
            s = t;
        }
        return s + c;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, QuadOptions::default()).unwrap();
        assert!((v - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand() {
        let v = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, QuadOptions::rel(1e-12)).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v / exact - 1.0).abs() < 1e-11);
    }

    #[test]
    fn semi_infinite_exponential() {
        let v = integrate_to_inf(|z| z * z * 0.3 * (-0.3 * z).exp(), 0.0, QuadOptions::rel(1e-12)).unwrap();
        assert!((v - 2.0 / 0.09).abs() < 1e-10);
    }

    #[test]
    fn nonfinite_integrand_is_an_error() {
        assert!(integrate(|x| 1.0 / x, 0.0, 1.0, QuadOptions::default()).is_err());
    }

    #[test]
    fn simpson_converges() {
        let v = simpson(|x| x.exp(), 0.0, 1.0, 200);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-10);
    }
}
