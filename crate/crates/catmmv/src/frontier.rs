//! Closed-form moments under the optimal pair and the MMV efficient frontier.

use crate::coefficients::{decay, eta, integrate_fallible, phi_at, zeta_quad, CoefficientCurves};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::strategies::Anchor;

/// `psi_1(s, t)`.
pub fn psi1(params: &ModelParams, s: f64, t: f64) -> f64 {
    let d = params.cat.delta;
    params.claim_tilt_rate() * (-d * (t - s)).exp() * decay(d, params.t_end - t)
}

/// `int (e^{-b z} - e^{-a z})(1 + phi z)^m F2(dz)` with `a = eta(u)`, `b = eta(u) - psi_1(u, t)`.
fn psi_inner(params: &ModelParams, u: f64, t: f64, m: u32) -> Result<f64> {
    let a = eta(params, u);
    let b = params.claim_tilt_rate() * decay(params.cat.delta, t - u);
    let ph = phi_at(params, a)?;
    let ma = params.f2.tilted_moments(a)?;
    let mb = params.f2.tilted_moments(b)?;
    let poly = |mm: &[f64; 4]| match m {
        1 => mm[0] + ph * mm[1],
        _ => mm[0] + 2.0 * ph * mm[1] + ph * ph * mm[2],
    };
    Ok(poly(&mb) - poly(&ma))
}

fn psi_tail(curves: &CoefficientCurves, s: f64, t: f64, m: u32) -> Result<f64> {
    let p = curves.params();
    let z = curves.point(t)?.zeta;
    if p.cat.rho == 0.0 || t == s {
        return Ok(z);
    }
    let i = integrate_fallible(|u| psi_inner(p, u, t, m), s, t, zeta_quad())?;
    Ok(z + p.cat.rho * i)
}

/// `psi_which(s, t)` for `which` in `1..=3`.
pub fn psi(curves: &CoefficientCurves, s: f64, t: f64, which: u32) -> Result<f64> {
    match which {
        1 => Ok(psi1(curves.params(), s, t)),
        2 => psi_tail(curves, s, t, 1),
        3 => psi_tail(curves, s, t, 2),
        _ => Err(Error::Config(format!("psi index {which} not in 1..=3"))),
    }
}

/// Log-exponents of `e0`, `e2`, `e3` and the `psi` triple for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierAux {
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub log_e0: f64,
    pub log_e2: f64,
    pub log_e3: f64,
}

impl FrontierAux {
    pub fn new(curves: &CoefficientCurves, s: f64, t: f64, lambda: f64) -> Result<Self> {
        if !(s <= t && t <= curves.t_end()) {
            return Err(Error::Config(format!("window [{s}, {t}] outside [0, T]")));
        }
        let ps = curves.point(s)?;
        let p1 = psi1(curves.params(), s, t);
        let p2 = psi(curves, s, t, 2)?;
        let p3 = psi(curves, s, t, 3)?;
        Ok(FrontierAux {
            psi1: p1,
            psi2: p2,
            psi3: p3,
            log_e0: ps.eta * lambda + ps.zeta,
            log_e2: p1 * lambda + p2,
            log_e3: p1 * lambda + p3,
        })
    }

    pub fn e0(&self) -> f64 {
        self.log_e0.exp()
    }

    pub fn e2(&self) -> f64 {
        self.log_e2.exp()
    }

    pub fn e3(&self) -> f64 {
        self.log_e3.exp()
    }

    /// `e0 e3 - e2^2`.
    pub fn det(&self) -> f64 {
        let e2 = self.e2();
        e2 * e2 * (self.log_e0 + self.log_e3 - 2.0 * self.log_e2).exp_m1()
    }

    /// `e0 - e2`.
    pub fn spread(&self) -> f64 {
        self.e2() * (self.log_e0 - self.log_e2).exp_m1()
    }
}

/// `rho iota_r mu2 (1 - e^{-delta (t - s)}) / delta`, the Q-minus-P drift of the intensity.
fn k1(params: &ModelParams, s: f64, t: f64) -> f64 {
    params.cat.rho * params.loadings.iota_r * params.f2.mu() * decay(params.cat.delta, t - s)
}

/// `Cov(lambda(t), Y* H(t, lambda(t))) / E[Y* H]`: the intensity drift under the measure
/// with density proportional to `Y* H`, minus its drift under P.
pub fn lambda_tilt(params: &ModelParams, s: f64, t: f64) -> Result<f64> {
    let (rho, d, mu2) = (params.cat.rho, params.cat.delta, params.f2.mu());
    if rho == 0.0 || t <= s {
        return Ok(0.0);
    }
    let f = |u: f64| -> Result<f64> {
        let b = params.claim_tilt_rate() * decay(d, t - u);
        let ph = phi_at(params, eta(params, u))?;
        let m = params.f2.tilted_moments(b)?;
        Ok((-d * (t - u)).exp() * (m[1] + ph * m[2] - mu2))
    };
    Ok(rho * integrate_fallible(f, s, t, zeta_quad())?)
}

pub fn mean_lambda(params: &ModelParams, s: f64, t: f64, lambda: f64) -> f64 {
    let d = params.cat.delta;
    (-d * (t - s)).exp() * lambda + params.cat.rho * params.f2.mu() * decay(d, t - s)
}

pub fn var_lambda(params: &ModelParams, s: f64, t: f64) -> f64 {
    params.cat.rho * params.f2.sigma2() * decay(2.0 * params.cat.delta, t - s)
}

pub fn second_moment_lambda(params: &ModelParams, s: f64, t: f64, lambda: f64) -> f64 {
    let m = mean_lambda(params, s, t, lambda);
    m * m + var_lambda(params, s, t)
}

/// Intensity mean under the optimal adversary's measure.
pub fn mean_lambda_q(params: &ModelParams, s: f64, t: f64, lambda: f64) -> f64 {
    let d = params.cat.delta;
    (-d * (t - s)).exp() * lambda
        + params.cat.rho * (params.loadings.iota_r + 1.0) * params.f2.mu() * decay(d, t - s)
}

/// `(C1, C2, C3)` for the window `s < t`.
pub fn frontier_constants(curves: &CoefficientCurves, s: f64, t: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    if t <= s {
        return Err(Error::DegenerateWindow(format!("t = {t} must exceed s = {s}")));
    }
    let p = curves.params();
    let aux = FrontierAux::new(curves, s, t, lambda)?;
    constants_from(p, curves.point(t)?.alpha, &aux, s, t)
}

fn constants_from(p: &ModelParams, alpha_t: f64, aux: &FrontierAux, s: f64, t: f64) -> Result<(f64, f64, f64)> {
    let kt = lambda_tilt(p, s, t)?;
    let det = aux.det();
    let spread = aux.spread();
    if !(det > 0.0) || spread == 0.0 {
        return Err(Error::DegenerateWindow(format!(
            "e0 e3 - e2^2 = {det:e} and e0 - e2 = {spread:e} on [{s}, {t}]"
        )));
    }
    let disc = (-p.market.r * (p.t_end - t)).exp();
    let kk = k1(p, s, t);
    let e2 = aux.e2();
    let c1 = det / (spread * spread);
    let c2 = alpha_t * (kk - e2 * kt * spread / det) * disc;
    let a2 = alpha_t * alpha_t;
    let c3 = (a2 * var_lambda(p, s, t) - a2 * e2 * e2 * kt * kt / det) * disc * disc;
    Ok((c1, c2, c3))
}

/// `E^{Q*} X*(t)` from the anchor state.
pub fn mean_wealth_q(curves: &CoefficientCurves, anchor: &Anchor, t: f64) -> Result<f64> {
    let p = curves.params();
    let (s, x, l) = (anchor.s, anchor.x_s, anchor.lambda_s);
    let pt = curves.point(t)?;
    let ps = curves.point(s)?;
    let d = p.cat.delta;
    let disc = (-p.market.r * (p.t_end - t)).exp();
    let qdrift = p.cat.rho * (p.loadings.iota_r + 1.0) * p.f2.mu() * decay(d, t - s);
    Ok(x * (p.market.r * (t - s)).exp()
        - (pt.alpha * (-d * (t - s)).exp() - ps.alpha) * disc * l
        - pt.alpha * qdrift * disc
        - pt.beta * disc
        + ps.beta * disc)
}

/// `E^P X*(t) - E^{Q*} X*(t)`.
pub fn wealth_gap(curves: &CoefficientCurves, anchor: &Anchor, t: f64) -> Result<f64> {
    let p = curves.params();
    let aux = FrontierAux::new(curves, anchor.s, t, anchor.lambda_s)?;
    let alpha_t = curves.point(t)?.alpha;
    let disc = (-p.market.r * (p.t_end - t)).exp();
    Ok(((anchor.y_s / p.theta) * aux.spread() + alpha_t * k1(p, anchor.s, t)) * disc)
}

pub fn mean_wealth_p(curves: &CoefficientCurves, anchor: &Anchor, t: f64) -> Result<f64> {
    Ok(mean_wealth_q(curves, anchor, t)? + wealth_gap(curves, anchor, t)?)
}

/// `C1 (mean_p - E^{Q*} X - C2)^2 + C3`.
pub fn variance_relation(curves: &CoefficientCurves, anchor: &Anchor, t: f64, mean_p: f64) -> Result<f64> {
    let (c1, c2, c3) = frontier_constants(curves, anchor.s, t, anchor.lambda_s)?;
    let mq = mean_wealth_q(curves, anchor, t)?;
    let g = mean_p - mq - c2;
    Ok(c1 * g * g + c3)
}

/// `Var^P X*(t)` from the decomposition `G X = c - 2 Y H - alpha lambda - beta`.
pub fn variance_direct(curves: &CoefficientCurves, anchor: &Anchor, t: f64) -> Result<f64> {
    let p = curves.params();
    let s = anchor.s;
    let aux = FrontierAux::new(curves, s, t, anchor.lambda_s)?;
    let a = curves.point(t)?.alpha;
    let yt = anchor.y_s / p.theta;
    let disc = (-p.market.r * (p.t_end - t)).exp();
    let kt = lambda_tilt(p, s, t)?;
    Ok((yt * yt * aux.det() + a * a * var_lambda(p, s, t) + 2.0 * a * yt * aux.e2() * kt) * disc * disc)
}

/// `(E[Y* H], E[(Y* H)^2], E[lambda Y* H])` at time `t` from `(s, lambda, y)`.
pub fn yh_moments(curves: &CoefficientCurves, s: f64, t: f64, lambda: f64, y: f64) -> Result<(f64, f64, f64)> {
    let p = curves.params();
    let aux = FrontierAux::new(curves, s, t, lambda)?;
    let th = p.theta;
    let m1 = y / (2.0 * th) * aux.e2();
    let m2 = y * y / (4.0 * th * th) * (aux.log_e0 + aux.log_e3).exp();
    Ok((m1, m2, m1 * (mean_lambda(p, s, t, lambda) + lambda_tilt(p, s, t)?)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub t: f64,
    pub mean_p: f64,
    pub mean_q: f64,
    pub var_p: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

pub fn frontier_point(curves: &CoefficientCurves, anchor: &Anchor, t: f64) -> Result<FrontierPoint> {
    let (c1, c2, c3) = frontier_constants(curves, anchor.s, t, anchor.lambda_s)?;
    let mean_q = mean_wealth_q(curves, anchor, t)?;
    let mean_p = mean_q + wealth_gap(curves, anchor, t)?;
    let g = mean_p - mean_q - c2;
    Ok(FrontierPoint { t, mean_p, mean_q, var_p: c1 * g * g + c3, c1, c2, c3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::build_curves;

    fn curves() -> CoefficientCurves {
        build_curves(&ModelParams::baseline(), 201).unwrap()
    }

    #[test]
    fn psi_at_window_ends() {
        let c = curves();
        let p = c.params().clone();
        let ps = c.point(20.0).unwrap();
        assert!((psi(&c, 20.0, 20.0, 1).unwrap() - ps.eta).abs() < 1e-15);
        assert_eq!(psi(&c, 20.0, 20.0, 2).unwrap(), ps.zeta);
        assert_eq!(psi(&c, 20.0, 20.0, 3).unwrap(), ps.zeta);
        assert_eq!(psi1(&p, 20.0, p.t_end), 0.0);
        assert!(psi(&c, 20.0, p.t_end, 2).unwrap().abs() < 1e-12);
        assert!(psi(&c, 20.0, p.t_end, 3).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psi1_below_eta() {
        let c = curves();
        let p = c.params();
        for s in [0.0, 30.0, 60.0] {
            for t in [s, s + 1.0, s + 20.0, 100.0] {
                assert!(psi1(p, s, t) <= eta(p, s) + 1e-15);
            }
        }
    }

    #[test]
    fn terminal_constants() {
        let c = curves();
        let ps = c.point(10.0).unwrap();
        let (c1, c2, c3) = frontier_constants(&c, 10.0, 100.0, 2.0).unwrap();
        let expect = 1.0 / (ps.eta * 2.0 + ps.zeta).exp_m1();
        assert!((c1 / expect - 1.0).abs() < 1e-10);
        assert!(c2.abs() < 1e-12 && c3.abs() < 1e-12);
    }

    #[test]
    fn degenerate_window() {
        let c = curves();
        assert!(matches!(frontier_constants(&c, 5.0, 5.0, 1.0), Err(Error::DegenerateWindow(_))));
    }

    #[test]
    fn lambda_moments() {
        let p = ModelParams::baseline();
        assert_eq!(mean_lambda(&p, 3.0, 3.0, 2.0), 2.0);
        assert_eq!(second_moment_lambda(&p, 3.0, 3.0, 2.0), 4.0);
        assert!((mean_lambda(&p, 0.0, 100.0, 1.0) - 2.4749479705999677).abs() < 1e-12);
        assert!((mean_lambda(&p, 0.0, 1e5, 1.0) - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mean_wealth_at_anchor() {
        let c = curves();
        let a = Anchor { s: 10.0, x_s: 70.0, y_s: 1.0, lambda_s: 1.5 };
        assert!((mean_wealth_q(&c, &a, 10.0).unwrap() - 70.0).abs() < 1e-10);
        assert!((mean_wealth_p(&c, &a, 10.0).unwrap() - 70.0).abs() < 1e-10);
    }

    #[test]
    fn two_variance_routes_agree() {
        let c = curves();
        let a = Anchor { s: 0.0, x_s: 100.0, y_s: 1.0, lambda_s: 1.0 };
        for t in [5.0, 25.0, 50.0, 75.0, 100.0] {
            let mp = mean_wealth_p(&c, &a, t).unwrap();
            let v1 = variance_relation(&c, &a, t, mp).unwrap();
            let v2 = variance_direct(&c, &a, t).unwrap();
            assert!((v1 / v2 - 1.0).abs() < 1e-9, "t={t}: {v1} vs {v2}");
        }
    }

    #[test]
    fn constants_signs() {
        let c = curves();
        for s in [0.0, 20.0, 60.0] {
            for t in [s + 0.5, s + 10.0, 100.0] {
                for l in [0.1, 1.0, 10.0] {
                    let (c1, _, c3) = frontier_constants(&c, s, t, l).unwrap();
                    assert!(c1 > 0.0 && c3 >= -1e-9 * c1.abs().max(1.0));
                }
            }
        }
    }
}
