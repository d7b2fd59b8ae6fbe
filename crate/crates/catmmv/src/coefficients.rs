//! Coefficient functions of the jump model value function and the G, H, I, K system.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quad::{integrate, QuadOptions};

/// `(1 - e^{-d tau}) / d`, continuous at `d = 0`.
pub fn decay(d: f64, tau: f64) -> f64 {
    if d == 0.0 {
        tau
    } else {
        -(-d * tau).exp_m1() / d
    }
}

/// `(e^{d tau} - 1) / d`, continuous at `d = 0`.
pub fn growth(d: f64, tau: f64) -> f64 {
    if d == 0.0 {
        tau
    } else {
        (d * tau).exp_m1() / d
    }
}

pub(crate) fn zeta_quad() -> QuadOptions {
    QuadOptions { abs_tol: 1e-10, rel_tol: 0.0, max_intervals: 10_000 }
}

/// Integrate a fallible integrand, surfacing the first inner error.
pub(crate) fn integrate_fallible<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let err: RefCell<Option<Error>> = RefCell::new(None);
    let out = integrate(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
        opts,
    );
    match err.into_inner() {
        Some(e) => Err(e),
        None => out,
    }
}

pub fn g(params: &ModelParams, t: f64) -> f64 {
    (params.market.r * (params.t_end - t)).exp()
}

pub fn eta(params: &ModelParams, t: f64) -> f64 {
    params.claim_tilt_rate() * decay(params.cat.delta, params.t_end - t)
}

/// `phi` given the value of `eta` at the same time.
pub fn phi_at(params: &ModelParams, eta: f64) -> Result<f64> {
    let m = params.f2.tilted_moments(eta)?;
    Ok(((params.loadings.iota_r + 1.0) * params.f2.mu() - m[1]) / m[2])
}

pub fn phi(params: &ModelParams, t: f64) -> Result<f64> {
    phi_at(params, eta(params, t))
}

/// `-zeta'(s)`.
pub fn zeta_rate(params: &ModelParams, s: f64) -> Result<f64> {
    let e = eta(params, s);
    let m = params.f2.tilted_moments(e)?;
    let ph = ((params.loadings.iota_r + 1.0) * params.f2.mu() - m[1]) / m[2];
    Ok(params.cat.rho * (ph * ph * m[2] - m[0] + 1.0) + params.sharpe2())
}

pub fn zeta(params: &ModelParams, t: f64) -> Result<f64> {
    integrate_fallible(|s| zeta_rate(params, s), t, params.t_end, zeta_quad())
}

pub fn alpha(params: &ModelParams, t: f64) -> f64 {
    let r = params.market.r;
    let d = params.cat.delta;
    let tau = params.t_end - t;
    let l = &params.loadings;
    -(l.kappa_r - l.kappa) * params.f1.mu() * (-d * tau).exp() * growth(r + d, tau)
}

pub fn beta(params: &ModelParams, t: f64) -> f64 {
    let r = params.market.r;
    let d = params.cat.delta;
    let rho = params.cat.rho;
    let tau = params.t_end - t;
    let l = &params.loadings;
    let mu1 = params.f1.mu();
    let mu2 = params.f2.mu();
    let gr = growth(r, tau);
    rho * (l.kappa_r - l.kappa) * (l.iota_r + 1.0) * mu1 * mu2 / (d + r) * (decay(d, tau) - gr)
        - rho * (l.iota_r - l.iota) * params.cat.k * mu2 * gr
}

/// All coefficient values at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefPoint {
    pub t: f64,
    pub g: f64,
    pub eta: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
}

impl CoefPoint {
    /// Evaluate every coefficient from its closed form (zeta by quadrature over `[t, T]`).
    pub fn exact(params: &ModelParams, t: f64) -> Result<Self> {
        Self::with_zeta(params, t, zeta(params, t)?)
    }

    fn with_zeta(params: &ModelParams, t: f64, zeta: f64) -> Result<Self> {
        let e = eta(params, t);
        Ok(CoefPoint {
            t,
            g: g(params, t),
            eta: e,
            zeta,
            alpha: alpha(params, t),
            beta: beta(params, t),
            phi: phi_at(params, e)?,
        })
    }

    /// `H(t, lambda) = e^{eta lambda + zeta} / (2 theta)`.
    pub fn h(&self, lambda: f64, theta: f64) -> f64 {
        (self.eta * lambda + self.zeta).exp() / (2.0 * theta)
    }

    pub fn i(&self, lambda: f64) -> f64 {
        self.alpha * lambda + self.beta
    }
}

/// Tabulated coefficients on a uniform grid over `[0, T]`.
#[derive(Debug, Clone)]
pub struct CoefficientCurves {
    params: ModelParams,
    pub grid: Vec<f64>,
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Tabulate the coefficients on `n_grid` uniform points.
///
/// Linear interpolation between nodes has error O(dt^2); [`CoefficientCurves::point`]
/// recomputes from the closed forms instead.
pub fn build_curves(params: &ModelParams, n_grid: usize) -> Result<CoefficientCurves> {
    if n_grid < 2 {
        return Err(Error::Config("n_grid must be >= 2".into()));
    }
    let t_end = params.t_end;
    let h = t_end / (n_grid - 1) as f64;
    let grid: Vec<f64> = (0..n_grid).map(|i| if i == n_grid - 1 { t_end } else { i as f64 * h }).collect();
    let mut zeta = vec![0.0; n_grid];
    for i in (0..n_grid - 1).rev() {
        zeta[i] = zeta[i + 1] + integrate_fallible(|s| zeta_rate(params, s), grid[i], grid[i + 1], zeta_quad())?;
    }
    let eta: Vec<f64> = grid.iter().map(|&t| eta(params, t)).collect();
    let phi = eta.iter().map(|&e| phi_at(params, e)).collect::<Result<Vec<_>>>()?;
    Ok(CoefficientCurves {
        params: params.clone(),
        alpha: grid.iter().map(|&t| alpha(params, t)).collect(),
        beta: grid.iter().map(|&t| beta(params, t)).collect(),
        grid,
        eta,
        zeta,
        phi,
    })
}

impl CoefficientCurves {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn t_end(&self) -> f64 {
        self.params.t_end
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.grid.len();
        let h = self.t_end() / (n - 1) as f64;
        let t = t.clamp(0.0, self.t_end());
        let j = ((t / h).floor() as usize).min(n - 2);
        (j, (t - self.grid[j]) / (self.grid[j + 1] - self.grid[j]))
    }

    fn lerp(&self, v: &[f64], t: f64) -> f64 {
        let (j, w) = self.locate(t);
        v[j] + w * (v[j + 1] - v[j])
    }

    pub fn eta_at(&self, t: f64) -> f64 {
        self.lerp(&self.eta, t)
    }

    pub fn zeta_at(&self, t: f64) -> f64 {
        self.lerp(&self.zeta, t)
    }

    pub fn alpha_at(&self, t: f64) -> f64 {
        self.lerp(&self.alpha, t)
    }

    pub fn beta_at(&self, t: f64) -> f64 {
        self.lerp(&self.beta, t)
    }

    pub fn phi_at(&self, t: f64) -> f64 {
        self.lerp(&self.phi, t)
    }

    /// Interpolated point; G is exact.
    pub fn interp_point(&self, t: f64) -> CoefPoint {
        CoefPoint {
            t,
            g: g(&self.params, t),
            eta: self.eta_at(t),
            zeta: self.zeta_at(t),
            alpha: self.alpha_at(t),
            beta: self.beta_at(t),
            phi: self.phi_at(t),
        }
    }

    /// Exact point: closed forms, zeta from the next grid node plus a short quadrature.
    pub fn point(&self, t: f64) -> Result<CoefPoint> {
        let p = &self.params;
        let (j, w) = self.locate(t);
        let (node, z0) = if w == 0.0 { (j, self.zeta[j]) } else { (j + 1, self.zeta[j + 1]) };
        let z = if self.grid[node] == t {
            z0
        } else {
            z0 + integrate_fallible(|s| zeta_rate(p, s), t, self.grid[node], zeta_quad())?
        };
        CoefPoint::with_zeta(p, t, z)
    }

    pub fn ghik(&self) -> Ghik<'_> {
        Ghik { curves: self }
    }
}

/// Value-function coefficients `G(t)`, `H(t, lambda)`, `I(t, lambda)`, `K = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Ghik<'a> {
    curves: &'a CoefficientCurves,
}

pub fn ghik(curves: &CoefficientCurves) -> Ghik<'_> {
    curves.ghik()
}

impl Ghik<'_> {
    pub fn g(&self, t: f64) -> f64 {
        g(self.curves.params(), t)
    }

    pub fn h(&self, t: f64, lambda: f64) -> Result<f64> {
        Ok(self.curves.point(t)?.h(lambda, self.curves.params().theta))
    }

    pub fn i(&self, t: f64, lambda: f64) -> Result<f64> {
        Ok(self.curves.point(t)?.i(lambda))
    }

    pub fn k(&self, _t: f64, _lambda: f64) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::simpson;

    fn base() -> ModelParams {
        ModelParams::baseline()
    }

    #[test]
    fn boundary_values() {
        let p = base();
        let c = CoefPoint::exact(&p, p.t_end).unwrap();
        assert_eq!((c.eta, c.zeta, c.alpha, c.beta, c.g), (0.0, 0.0, 0.0, 0.0, 1.0));
        assert!((c.phi - 0.018).abs() < 1e-15);
        assert_eq!(c.h(3.0, 1.0), 0.5);
    }

    #[test]
    fn eta_values() {
        let p = base();
        assert!((eta(&p, 0.0) - 0.3484564580542424).abs() < 1e-15);
        assert!((eta(&p, 50.0) - 0.21689997383341084).abs() < 1e-15);
    }

    #[test]
    fn delta_zero_limits() {
        let mut p = base();
        p.cat.delta = 0.0;
        assert!((eta(&p, 0.0) - p.claim_tilt_rate() * 100.0).abs() < 1e-12);
        assert!(alpha(&p, 0.0).is_finite() && beta(&p, 0.0).is_finite());
    }

    #[test]
    fn zeta_without_catastrophes() {
        let mut p = base();
        p.cat.rho = 0.0;
        assert!((zeta(&p, 0.0).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zeta_two_rules_agree() {
        let p = base();
        let gk = zeta(&p, 0.0).unwrap();
        let si = simpson(|s| zeta_rate(&p, s).unwrap(), 0.0, 100.0, 20_000);
        assert!((gk - si).abs() < 1e-8);
    }

    #[test]
    fn symmetric_loadings_kill_alpha_beta() {
        let mut p = base();
        p.loadings.kappa_r = p.loadings.kappa;
        p.loadings.iota_r = p.loadings.iota;
        for t in [0.0, 10.0, 77.0] {
            assert_eq!(alpha(&p, t), 0.0);
            assert_eq!(beta(&p, t), 0.0);
        }
    }

    #[test]
    fn curves_match_exact() {
        let p = base();
        let c = build_curves(&p, 1001).unwrap();
        let e = CoefPoint::exact(&p, 0.0).unwrap();
        assert!((c.eta[0] - e.eta).abs() < 1e-12);
        assert!((c.zeta[0] - e.zeta).abs() < 1e-12);
        assert!((c.phi[0] - e.phi).abs() < 1e-12);
        let q = c.point(37.3).unwrap();
        let r = CoefPoint::exact(&p, 37.3).unwrap();
        assert!((q.zeta - r.zeta).abs() < 1e-12);
    }

    #[test]
    fn two_point_grid() {
        let p = base();
        let c = build_curves(&p, 2).unwrap();
        assert_eq!(c.grid, vec![0.0, 100.0]);
        assert_eq!((c.eta[1], c.zeta[1], c.alpha[1], c.beta[1]), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn interpolation_is_second_order() {
        let p = base();
        let ts: Vec<f64> = (0..200).map(|i| 0.37 + i as f64 * 0.4983).collect();
        let err = |n: usize| {
            let c = build_curves(&p, n).unwrap();
            ts.iter().map(|&t| (c.eta_at(t) - eta(&p, t)).abs()).fold(0.0, f64::max)
        };
        let ratio = err(51) / err(101);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn g_at_zero() {
        let p = base();
        assert!((g(&p, 0.0) - 1f64.exp()).abs() < 1e-15);
    }
}
