//! Diffusion approximation of the shot-noise model: coefficients, controls, value.

use crate::coefficients::{alpha, beta, g, integrate_fallible, zeta_quad};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::strategies::{Anchor, InsurerControls};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    DeltaZero,
    DeltaPositive,
}

/// Discriminant and roots of the quadratic coefficient's Riccati equation.
pub fn discriminant(params: &ModelParams) -> Result<(f64, f64, f64)> {
    let rho = params.cat.rho;
    let s2 = params.f2.sigma2();
    let d = params.cat.delta;
    if !(rho > 0.0 && d > 0.0) {
        return Err(Error::ConditionViolated(format!(
            "diffusion approximation needs rho > 0 and delta > 0 (rho = {rho}, delta = {d})"
        )));
    }
    let c = params.claim_tilt_rate();
    let mut disc = 4.0 * d * d - 8.0 * c * s2 * d / params.f2.mu();
    if disc.abs() <= 1e-14 * 4.0 * d * d {
        disc = 0.0;
    }
    if disc < 0.0 {
        return Err(Error::ConditionViolated(format!(
            "Delta = {disc:e} < 0: delta mu2 / sigma2^2 = {:e} is below 2 kappa_r^2 mu1^2 / sigma1^2 = {:e}",
            d * params.f2.mu() / s2,
            2.0 * c
        )));
    }
    let v = 4.0 * rho * s2;
    let sq = disc.sqrt();
    Ok((disc, (2.0 * d + sq) / v, (2.0 * d - sq) / v))
}

/// Diffusion-model coefficients at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionPoint {
    pub t: f64,
    pub g: f64,
    pub xi: f64,
    pub eta: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl DiffusionPoint {
    /// `H = e^{xi lambda^2 + eta lambda + zeta} / (2 theta)`.
    pub fn h(&self, lambda: f64, theta: f64) -> f64 {
        (self.xi * lambda * lambda + self.eta * lambda + self.zeta).exp() / (2.0 * theta)
    }

    /// `H_lambda / H`.
    pub fn dlog_h(&self, lambda: f64) -> f64 {
        2.0 * self.xi * lambda + self.eta
    }

    pub fn i(&self, lambda: f64) -> f64 {
        self.alpha * lambda + self.beta
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionCoefficients {
    params: ModelParams,
    pub delta_disc: f64,
    pub d1: f64,
    pub d2: f64,
    pub branch: Branch,
    grid: Vec<f64>,
    zeta_tab: Vec<f64>,
}

impl DiffusionCoefficients {
    pub fn new(params: &ModelParams, n_grid: usize) -> Result<Self> {
        let (disc, d1, d2) = discriminant(params)?;
        if n_grid < 2 {
            return Err(Error::Config("n_grid must be >= 2".into()));
        }
        let branch = if disc == 0.0 { Branch::DeltaZero } else { Branch::DeltaPositive };
        let h = params.t_end / (n_grid - 1) as f64;
        let grid: Vec<f64> = (0..n_grid).map(|i| if i == n_grid - 1 { params.t_end } else { i as f64 * h }).collect();
        let mut me = DiffusionCoefficients { params: params.clone(), delta_disc: disc, d1, d2, branch, grid, zeta_tab: vec![0.0; n_grid] };
        for i in (0..n_grid - 1).rev() {
            let seg = integrate_fallible(|s| Ok(me.zeta_rate(s)), me.grid[i], me.grid[i + 1], zeta_quad())?;
            me.zeta_tab[i] = me.zeta_tab[i + 1] + seg;
        }
        Ok(me)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn v(&self) -> f64 {
        self.params.cat.rho * self.params.f2.sigma2()
    }

    fn a(&self) -> f64 {
        self.params.cat.rho * self.params.f2.mu() * (2.0 * self.params.loadings.iota_r + 1.0)
    }

    pub fn xi(&self, t: f64) -> f64 {
        let tau = self.params.t_end - t;
        let v = self.v();
        match self.branch {
            Branch::DeltaZero => {
                let d = self.params.cat.delta;
                d * d * tau / (2.0 * v * (d * tau + 1.0))
            }
            Branch::DeltaPositive => {
                let sq = self.delta_disc.sqrt();
                let e = (sq * tau).exp_m1();
                self.d1 * self.d2 * e / (self.d1 * e + sq / (2.0 * v))
            }
        }
    }

    pub fn eta(&self, t: f64) -> f64 {
        let tau = self.params.t_end - t;
        match self.branch {
            Branch::DeltaZero => {
                let d = self.params.cat.delta;
                (2.0 * self.params.loadings.iota_r + 1.0) * d * self.params.claim_tilt_rate() * tau * tau / (d * tau + 1.0)
            }
            Branch::DeltaPositive => {
                let sq = self.delta_disc.sqrt();
                let e = (sq * tau).exp_m1();
                let h = (0.5 * sq * tau).exp_m1();
                4.0 * self.a() * self.d1 * self.d2 * h * h / (sq * (self.d1 * e + sq / (2.0 * self.v())))
            }
        }
    }

    /// `-zeta'(t)`.
    pub fn zeta_rate(&self, t: f64) -> f64 {
        let p = &self.params;
        let e = self.eta(t);
        let v = self.v();
        let mu2 = p.f2.mu();
        let ir = p.loadings.iota_r;
        self.a() * e + 0.5 * v * e * e + v * self.xi(t) + p.sharpe2() + p.cat.rho * ir * ir * mu2 * mu2 / p.f2.sigma2()
    }

    /// Exact `zeta(t)`; outside `[0, T]` the rate is integrated from the nearest end.
    pub fn zeta(&self, t: f64) -> Result<f64> {
        let n = self.grid.len();
        let h = self.params.t_end / (n - 1) as f64;
        if t < 0.0 {
            return Ok(self.zeta_tab[0] + integrate_fallible(|s| Ok(self.zeta_rate(s)), t, 0.0, zeta_quad())?);
        }
        if t > self.params.t_end {
            return Ok(-integrate_fallible(|s| Ok(self.zeta_rate(s)), self.params.t_end, t, zeta_quad())?);
        }
        let j = ((t / h).ceil() as usize).min(n - 1);
        let j = if self.grid[j] < t { j + 1 } else { j };
        let z0 = self.zeta_tab[j];
        if self.grid[j] == t {
            return Ok(z0);
        }
        Ok(z0 + integrate_fallible(|s| Ok(self.zeta_rate(s)), t, self.grid[j], zeta_quad())?)
    }

    /// Linear interpolation of the tabulated zeta.
    pub fn zeta_interp(&self, t: f64) -> f64 {
        let n = self.grid.len();
        let h = self.params.t_end / (n - 1) as f64;
        let t = t.clamp(0.0, self.params.t_end);
        let j = ((t / h).floor() as usize).min(n - 2);
        let w = (t - self.grid[j]) / (self.grid[j + 1] - self.grid[j]);
        self.zeta_tab[j] + w * (self.zeta_tab[j + 1] - self.zeta_tab[j])
    }

    pub fn point(&self, t: f64) -> Result<DiffusionPoint> {
        let p = &self.params;
        Ok(DiffusionPoint { t, g: g(p, t), xi: self.xi(t), eta: self.eta(t), zeta: self.zeta(t)?, alpha: alpha(p, t), beta: beta(p, t) })
    }

    pub fn interp_point(&self, t: f64) -> DiffusionPoint {
        let p = &self.params;
        DiffusionPoint { t, g: g(p, t), xi: self.xi(t), eta: self.eta(t), zeta: self.zeta_interp(t), alpha: alpha(p, t), beta: beta(p, t) }
    }
}

/// Build the diffusion coefficients, failing when the discriminant is negative.
pub fn diffusion_coefficients(params: &ModelParams) -> Result<DiffusionCoefficients> {
    DiffusionCoefficients::new(params, 2001)
}

/// Noise loadings `(sigma1 sqrt(rho mu2 / delta), sigma2 sqrt(rho))` of the approximation.
pub fn noise_scales(params: &ModelParams) -> (f64, f64) {
    let rho = params.cat.rho;
    (
        (params.f1.sigma2() * rho * params.f2.mu() / params.cat.delta).sqrt(),
        (params.f2.sigma2() * rho).sqrt(),
    )
}

/// Scalar adversary `(o, p, q)` at intensity `lambda`.
pub fn diffusion_adversary(params: &ModelParams, lambda: f64) -> (f64, f64, f64) {
    let m = &params.market;
    let (s1, _) = noise_scales(params);
    (
        -(m.mu0 - m.r) / m.sigma0,
        params.loadings.kappa_r * params.f1.mu() * lambda / s1,
        params.loadings.iota_r * params.f2.mu() * params.cat.rho.sqrt() / params.f2.sigma2().sqrt(),
    )
}

/// Feedback controls on the density value.
pub fn diffusion_feedback_y(params: &ModelParams, pt: &DiffusionPoint, y: f64, lambda: f64) -> InsurerControls {
    let d = 2.0 * pt.h(lambda, params.theta) * y / pt.g;
    controls_from_bracket(params, pt, d, lambda)
}

fn controls_from_bracket(params: &ModelParams, pt: &DiffusionPoint, d: f64, lambda: f64) -> InsurerControls {
    let m = &params.market;
    let mu2 = params.f2.mu();
    InsurerControls {
        pi: (m.mu0 - m.r) * d / (m.sigma0 * m.sigma0),
        u: params.loadings.kappa_r * params.f1.mu() * lambda * params.cat.delta * d
            / (params.f1.sigma2() * params.cat.rho * mu2),
        v: ((params.loadings.iota_r * mu2 / params.f2.sigma2() + pt.dlog_h(lambda)) * d + pt.alpha / pt.g)
            / params.cat.k,
    }
}

pub fn diffusion_anchor_constant(params: &ModelParams, anchor_pt: &DiffusionPoint, anchor: &Anchor) -> f64 {
    anchor_pt.g * anchor.x_s + 2.0 * anchor_pt.h(anchor.lambda_s, params.theta) * anchor.y_s + anchor_pt.i(anchor.lambda_s)
}

/// Precommitted controls on wealth and the anchor constant `c`.
pub fn diffusion_controls(params: &ModelParams, c: f64, pt: &DiffusionPoint, x: f64, lambda: f64) -> InsurerControls {
    let d = (c - pt.g * x - pt.i(lambda)) / pt.g;
    controls_from_bracket(params, pt, d, lambda)
}

pub fn diffusion_value(params: &ModelParams, c: f64, pt: &DiffusionPoint, x: f64, lambda: f64) -> f64 {
    let a = pt.g * x + pt.i(lambda);
    (c * c - a * a) / (4.0 * pt.h(lambda, params.theta))
}

pub fn diffusion_mmv_value(dc: &DiffusionCoefficients) -> Result<f64> {
    let p = dc.params();
    let a = Anchor::initial(p);
    let pt = dc.point(a.s)?;
    let c = diffusion_anchor_constant(p, &pt, &a);
    Ok(diffusion_value(p, c, &pt, a.x_s, a.lambda_s))
}

/// The reference parameters with a catastrophe impact rate of 3, which satisfies the discriminant condition.
pub fn variant_params() -> ModelParams {
    let mut p = ModelParams::baseline();
    p.f2 = crate::model::ClaimDistribution::exponential(3.0);
    p
}
