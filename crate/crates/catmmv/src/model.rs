//! Model inputs: market, loadings, catastrophe process, claim-size laws.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, Exp, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result, Violation};
use crate::quad::{integrate_to_inf, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub mu0: f64,
    pub sigma0: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadingParams {
    pub kappa: f64,
    pub kappa_r: f64,
    pub iota: f64,
    pub iota_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatastropheParams {
    pub rho: f64,
    pub delta: f64,
    pub k: f64,
}

/// A claim-size law known only through its density and a sampler.
pub trait ClaimLaw: Send + Sync + fmt::Debug {
    fn pdf(&self, z: f64) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    /// A point beyond which the remaining mass is negligible (below ~1e-30).
    fn support_bound(&self) -> f64;
    fn name(&self) -> String;
}

/// Gamma law with shape `shape` and rate `rate`.
#[derive(Debug, Clone)]
pub struct GammaLaw {
    shape: f64,
    rate: f64,
    log_norm: f64,
    sampler: Gamma<f64>,
}

impl GammaLaw {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        let mut v = Vec::new();
        if !(shape > 0.0 && shape.is_finite()) {
            v.push(Violation { field: "shape".into(), constraint: "> 0".into() });
        }
        if !(rate > 0.0 && rate.is_finite()) {
            v.push(Violation { field: "rate".into(), constraint: "> 0".into() });
        }
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        let sampler = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Config(e.to_string()))?;
        Ok(GammaLaw { shape, rate, log_norm: shape * rate.ln() - ln_gamma(shape), sampler })
    }
}

impl ClaimLaw for GammaLaw {
    fn pdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        (self.log_norm + (self.shape - 1.0) * z.ln() - self.rate * z).exp()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.sampler.sample(rng)
    }

    fn support_bound(&self) -> f64 {
        (self.shape + 12.0 * self.shape.sqrt() + 80.0) / self.rate
    }

    fn name(&self) -> String {
        format!("gamma(shape={}, rate={})", self.shape, self.rate)
    }
}

#[derive(Debug, Clone)]
pub enum ClaimKind {
    Exponential { rate: f64 },
    Generic(Arc<dyn ClaimLaw>),
}

/// Claim-size distribution with cached first and second raw moments.
#[derive(Debug, Clone)]
pub struct ClaimDistribution {
    kind: ClaimKind,
    mu: f64,
    sigma2: f64,
}

const TILT_TOL: f64 = 1e-10;

impl ClaimDistribution {
    pub fn exponential(rate: f64) -> Self {
        ClaimDistribution { kind: ClaimKind::Exponential { rate }, mu: 1.0 / rate, sigma2: 2.0 / (rate * rate) }
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::generic(Arc::new(GammaLaw::new(shape, rate)?))
    }

    /// Wrap an arbitrary law; raw moments are computed by quadrature once.
    pub fn generic(law: Arc<dyn ClaimLaw>) -> Result<Self> {
        let mu = generic_tilted(law.as_ref(), 1, 0.0)?;
        let sigma2 = generic_tilted(law.as_ref(), 2, 0.0)?;
        Ok(ClaimDistribution { kind: ClaimKind::Generic(law), mu, sigma2 })
    }

    pub fn kind(&self) -> &ClaimKind {
        &self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Second raw moment.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn raw_moments(&self) -> (f64, f64) {
        (self.mu, self.sigma2)
    }

    /// `M(m, a) = int z^m e^{-a z} F(dz)` for `m` in `0..=3`, `a >= 0`.
    pub fn tilted_moment(&self, m: u32, a: f64) -> Result<f64> {
        assert!(m <= 3, "tilted moments are exposed for m <= 3");
        match &self.kind {
            ClaimKind::Exponential { rate } => Ok(exp_tilted(*rate, m, a)),
            ClaimKind::Generic(law) => generic_tilted(law.as_ref(), m, a),
        }
    }

    /// The four tilted moments `M(0..=3, a)` at once.
    pub fn tilted_moments(&self, a: f64) -> Result<[f64; 4]> {
        match &self.kind {
            ClaimKind::Exponential { rate } => {
                let b = *rate;
                let s = b + a;
                let m0 = b / s;
                Ok([m0, m0 / s, 2.0 * m0 / (s * s), 6.0 * m0 / (s * s * s)])
            }
            ClaimKind::Generic(law) => {
                let l = law.as_ref();
                Ok([
                    generic_tilted(l, 0, a)?,
                    generic_tilted(l, 1, a)?,
                    generic_tilted(l, 2, a)?,
                    generic_tilted(l, 3, a)?,
                ])
            }
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match &self.kind {
            ClaimKind::Exponential { rate } => {
                if z < 0.0 {
                    0.0
                } else {
                    rate * (-rate * z).exp()
                }
            }
            ClaimKind::Generic(law) => law.pdf(z),
        }
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            ClaimKind::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            ClaimKind::Generic(law) => law.sample(rng),
        }
    }

    pub fn support_bound(&self) -> f64 {
        match &self.kind {
            ClaimKind::Exponential { rate } => 70.0 / rate,
            ClaimKind::Generic(law) => law.support_bound(),
        }
    }

    /// `int f(z) F(dz)` by adaptive quadrature over the effective support.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F, opts: QuadOptions) -> Result<f64> {
        crate::quad::integrate(|z| if z <= 0.0 { 0.0 } else { f(z) * self.pdf(z) }, 0.0, self.support_bound(), opts)
    }

    fn validate_into(&self, field: &str, out: &mut Vec<Violation>) {
        match &self.kind {
            ClaimKind::Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    out.push(Violation { field: format!("{field}.rate"), constraint: "> 0".into() });
                }
            }
            ClaimKind::Generic(_) => {
                if !(self.mu > 0.0 && self.sigma2.is_finite() && self.sigma2 > 0.0) {
                    out.push(Violation { field: field.into(), constraint: "a law with finite positive moments".into() });
                }
            }
        }
    }
}

fn exp_tilted(b: f64, m: u32, a: f64) -> f64 {
    let s = b + a;
    let m0 = b / s;
    match m {
        0 => m0,
        1 => m0 / s,
        2 => 2.0 * m0 / (s * s),
        _ => 6.0 * m0 / (s * s * s),
    }
}

/// Direct quadrature of `z^m e^{-a z}` against the density of `law`.
pub fn generic_tilted(law: &dyn ClaimLaw, m: u32, a: f64) -> Result<f64> {
    integrate_to_inf(
        |z| {
            if z <= 0.0 {
                return 0.0;
            }
            let p = law.pdf(z);
            if p == 0.0 {
                return 0.0;
            }
            z.powi(m as i32) * (-a * z).exp() * p
        },
        0.0,
        QuadOptions { abs_tol: 0.0, rel_tol: TILT_TOL, max_intervals: 10_000 },
    )
}

/// All scalar model inputs.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub market: MarketParams,
    pub loadings: LoadingParams,
    pub cat: CatastropheParams,
    /// Ordinary claim sizes.
    pub f1: ClaimDistribution,
    /// Catastrophe impacts.
    pub f2: ClaimDistribution,
    pub theta: f64,
    pub t_end: f64,
    /// Start (anchor) time of the problem.
    pub s: f64,
    pub x0: f64,
    pub lambda0: f64,
    pub y0: f64,
}

impl ModelParams {
    /// The reference parameter set used throughout the tests and the CLI defaults.
    pub fn baseline() -> Self {
        ModelParams {
            market: MarketParams { mu0: 0.03, sigma0: 0.4, r: 0.01 },
            loadings: LoadingParams { kappa: 0.1, kappa_r: 0.105, iota: 0.1, iota_r: 0.12 },
            cat: CatastropheParams { rho: 0.01, delta: 0.01, k: 1e4 },
            f1: ClaimDistribution::exponential(0.2),
            f2: ClaimDistribution::exponential(0.3),
            theta: 1.0,
            t_end: 100.0,
            s: 0.0,
            x0: 100.0,
            lambda0: 1.0,
            y0: 1.0,
        }
    }

    pub fn with_horizon(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    /// `kappa_r^2 mu1^2 / sigma1^2`, the rate at which the ordinary-claim tilt accrues.
    pub fn claim_tilt_rate(&self) -> f64 {
        let k = self.loadings.kappa_r * self.f1.mu();
        k * k / self.f1.sigma2()
    }

    /// Squared market price of risk `(mu0 - r)^2 / sigma0^2`.
    pub fn sharpe2(&self) -> f64 {
        let e = self.market.mu0 - self.market.r;
        e * e / (self.market.sigma0 * self.market.sigma0)
    }
}

/// Check every invariant and report all violations at once.
pub fn validate(params: ModelParams) -> Result<ModelParams> {
    validate_with(params, false)
}

/// As [`validate`]; `allow_cheap` skips the `kappa_r >= kappa`, `iota_r >= iota` checks.
pub fn validate_with(params: ModelParams, allow_cheap: bool) -> Result<ModelParams> {
    let mut v = Vec::new();
    let mut need = |ok: bool, field: &str, constraint: &str| {
        if !ok {
            v.push(Violation { field: field.into(), constraint: constraint.into() });
        }
    };
    let p = &params;
    need(p.market.mu0.is_finite(), "mu0", "finite");
    need(p.market.sigma0 > 0.0 && p.market.sigma0.is_finite(), "sigma0", "> 0");
    need(p.market.r > 0.0 && p.market.r.is_finite(), "r", "> 0");
    let l = &p.loadings;
    need(l.kappa >= 0.0 && l.kappa.is_finite(), "kappa", ">= 0");
    need(l.iota >= 0.0 && l.iota.is_finite(), "iota", ">= 0");
    need(l.kappa_r.is_finite(), "kappa_r", "finite");
    need(l.iota_r.is_finite(), "iota_r", "finite");
    if !allow_cheap {
        need(l.kappa_r >= l.kappa, "kappa_r", ">= kappa");
        need(l.iota_r >= l.iota, "iota_r", ">= iota");
    }
    need(p.cat.rho >= 0.0 && p.cat.rho.is_finite(), "rho", ">= 0");
    need(p.cat.delta >= 0.0 && p.cat.delta.is_finite(), "delta", ">= 0");
    need(p.cat.k > 0.0 && p.cat.k.is_finite(), "k", "> 0");
    need(p.theta > 0.0 && p.theta.is_finite(), "theta", "> 0");
    need(p.t_end > 0.0 && p.t_end.is_finite(), "T", "> 0");
    need(p.s >= 0.0 && p.s <= p.t_end, "s", "in [0, T]");
    need(p.x0.is_finite(), "x0", "finite");
    need(p.lambda0 > 0.0 && p.lambda0.is_finite(), "lambda0", "> 0");
    need(p.y0 > 0.0 && p.y0.is_finite(), "y0", "> 0");
    p.f1.validate_into("claims.ordinary", &mut v);
    p.f2.validate_into("claims.catastrophe", &mut v);
    if v.is_empty() {
        Ok(params)
    } else {
        Err(Error::Validation(v))
    }
}
