//! Numerical checks of the closed-form solution: generator residuals, ODE/PDE residuals,
//! Monte Carlo saddle-point inequalities and the integrability condition.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::{alpha, beta, eta, g, CoefPoint, CoefficientCurves};
use crate::diffusion::{diffusion_adversary, diffusion_feedback_y, noise_scales, DiffusionCoefficients, DiffusionPoint};
use crate::error::Result;
use crate::model::ModelParams;
use crate::quad::QuadOptions;
use crate::simulate::{AdversaryStrategy, InsurerStrategy, ModelCoefs, Moments, SimConfig, Simulator};
use crate::strategies::{adversary_controls, feedback_controls_y, AdversaryControls, InsurerControls};

/// Generator value and the sum of the absolute values of its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorValue {
    pub value: f64,
    pub scale: f64,
}

impl GeneratorValue {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.value.abs() / self.scale
        } else {
            self.value.abs()
        }
    }
}

fn step(v: f64, h: f64) -> f64 {
    h * v.abs().max(1.0)
}

/// Finite-difference partials of a test function at one point.
#[derive(Debug, Clone, Copy)]
struct Partials {
    w: f64,
    t: f64,
    x: f64,
    y: f64,
    l: f64,
    xx: f64,
    yy: f64,
    xy: f64,
    ll: f64,
    xl: f64,
    yl: f64,
}

fn partials<W: Fn(f64, f64, f64, f64) -> f64>(w: &W, t: f64, x: f64, y: f64, l: f64) -> Partials {
    let (ht, hx, hy, hl) = (step(t, 1e-5), step(x, 1e-5), step(y, 1e-5), step(l, 1e-5));
    let (hx2, hy2, hl2) = (step(x, 1e-2), step(y, 1e-2), step(l, 1e-3));
    let w0 = w(t, x, y, l);
    let c = |a: f64, b: f64, h: f64| (a - b) / (2.0 * h);
    let mixed = |f: &dyn Fn(f64, f64) -> f64, h1: f64, h2: f64| {
        (f(h1, h2) - f(h1, -h2) - f(-h1, h2) + f(-h1, -h2)) / (4.0 * h1 * h2)
    };
    Partials {
        w: w0,
        t: c(w(t + ht, x, y, l), w(t - ht, x, y, l), ht),
        x: c(w(t, x + hx, y, l), w(t, x - hx, y, l), hx),
        y: c(w(t, x, y + hy, l), w(t, x, y - hy, l), hy),
        l: c(w(t, x, y, l + hl), w(t, x, y, l - hl), hl),
        xx: (w(t, x + hx2, y, l) - 2.0 * w0 + w(t, x - hx2, y, l)) / (hx2 * hx2),
        yy: (w(t, x, y + hy2, l) - 2.0 * w0 + w(t, x, y - hy2, l)) / (hy2 * hy2),
        ll: (w(t, x, y, l + hl2) - 2.0 * w0 + w(t, x, y, l - hl2)) / (hl2 * hl2),
        xy: mixed(&|a, b| w(t, x + a, y + b, l), hx2, hy2),
        xl: mixed(&|a, b| w(t, x + a, y, l + b), hx2, hl2),
        yl: mixed(&|a, b| w(t, x, y + a, l + b), hy2, hl2),
    }
}

fn gen_quad(w: f64) -> QuadOptions {
    QuadOptions { abs_tol: 1e-9 * w.abs().max(1.0) * 1e-3, rel_tol: 1e-10, max_intervals: 10_000 }
}

fn collect(terms: &[f64]) -> GeneratorValue {
    GeneratorValue { value: terms.iter().sum(), scale: terms.iter().map(|v| v.abs()).sum() }
}

/// Jump-model generator `L^{a,b} W` at `(t, x, y, lambda)` by finite differences and quadrature.
#[allow(clippy::too_many_arguments)]
pub fn generator_apply<W: Fn(f64, f64, f64, f64) -> f64>(
    params: &ModelParams,
    w: &W,
    a: &InsurerControls,
    b: &AdversaryControls,
    t: f64,
    x: f64,
    y: f64,
    lambda: f64,
) -> Result<GeneratorValue> {
    let d = partials(w, t, x, y, lambda);
    let (m, l, cat) = (&params.market, &params.loadings, &params.cat);
    let drift_x = m.r * x
        + a.pi * (m.mu0 - m.r)
        + (l.kappa_r * a.u - l.kappa_r + l.kappa) * params.f1.mu() * lambda
        + (l.iota_r * a.v - l.iota_r + l.iota) * cat.k * params.f2.mu() * cat.rho;
    let opts = gen_quad(d.w);
    let j1 = params.f1.expect(
        |z| {
            let py = y * b.p(z);
            w(t, x - a.u * z, y + py, lambda) - d.w + a.u * z * d.x - py * d.y
        },
        opts,
    )?;
    let j2 = if cat.rho > 0.0 {
        params.f2.expect(
            |z| {
                let qy = y * b.q(z);
                let kv = cat.k * a.v * z;
                w(t, x - kv, y + qy, lambda + z) - d.w + kv * d.x - qy * d.y - z * d.l
            },
            opts,
        )?
    } else {
        0.0
    };
    Ok(collect(&[
        d.t,
        drift_x * d.x,
        (-cat.delta * lambda + cat.rho * params.f2.mu()) * d.l,
        0.5 * a.pi * a.pi * m.sigma0 * m.sigma0 * d.xx,
        0.5 * y * y * b.o * b.o * d.yy,
        a.pi * m.sigma0 * y * b.o * d.xy,
        lambda * j1,
        cat.rho * j2,
    ]))
}

/// Diffusion-model generator with the scalar adversary `(o, p, q)`.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_generator_apply<W: Fn(f64, f64, f64, f64) -> f64>(
    params: &ModelParams,
    w: &W,
    a: &InsurerControls,
    b: (f64, f64, f64),
    t: f64,
    x: f64,
    y: f64,
    lambda: f64,
) -> GeneratorValue {
    let d = partials(w, t, x, y, lambda);
    let (m, l, cat) = (&params.market, &params.loadings, &params.cat);
    let (s1, s2) = noise_scales(params);
    let (o, p, q) = b;
    let bx = [a.pi * m.sigma0, -a.u * s1, -cat.k * a.v * s2];
    let by = [y * o, y * p, y * q];
    let drift_x = m.r * x
        + a.pi * (m.mu0 - m.r)
        + (l.kappa_r * a.u - l.kappa_r + l.kappa) * params.f1.mu() * lambda
        + (l.iota_r * a.v - l.iota_r + l.iota) * cat.k * params.f2.mu() * cat.rho;
    let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    collect(&[
        d.t,
        drift_x * d.x,
        (-cat.delta * lambda + cat.rho * params.f2.mu()) * d.l,
        0.5 * dot(&bx, &bx) * d.xx,
        0.5 * s2 * s2 * d.ll,
        0.5 * dot(&by, &by) * d.yy,
        dot(&bx, &by) * d.xy,
        bx[2] * s2 * d.xl,
        by[2] * s2 * d.yl,
    ])
}

/// Multiplicative perturbation of the candidate's coefficients.
///
/// `H` is scaled by `h (1 + h_wave sin(t + lambda))`. A constant `h` alone leaves the residual
/// at zero: the `y^2` block of the generator is linear and homogeneous in `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub h: f64,
    pub h_wave: f64,
    pub eta: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Perturbation {
    pub const NONE: Perturbation = Perturbation { h: 1.0, h_wave: 0.0, eta: 1.0, zeta: 1.0, alpha: 1.0, beta: 1.0 };

    /// The standard 1% negative controls.
    pub fn controls() -> Vec<(&'static str, Perturbation)> {
        let n = Perturbation::NONE;
        vec![
            ("H*(1+0.01sin(t+lambda))", Perturbation { h_wave: 0.01, ..n }),
            ("eta*1.01", Perturbation { eta: 1.01, ..n }),
            ("zeta*1.01", Perturbation { zeta: 1.01, ..n }),
            ("alpha*1.01", Perturbation { alpha: 1.01, ..n }),
            ("beta*1.01", Perturbation { beta: 1.01, ..n }),
        ]
    }
}

/// `W = G x y + H y^2 + I y` built from exact coefficients, optionally perturbed.
pub fn candidate(curves: &CoefficientCurves, pert: Perturbation) -> impl Fn(f64, f64, f64, f64) -> f64 + '_ {
    let cache: RefCell<Option<CoefPoint>> = RefCell::new(None);
    move |t, x, y, l| {
        let pt = {
            let mut c = cache.borrow_mut();
            match *c {
                Some(pt) if pt.t == t => pt,
                _ => match curves.point(t) {
                    Ok(pt) => {
                        *c = Some(pt);
                        pt
                    }
                    Err(_) => return f64::NAN,
                },
            }
        };
        let p = curves.params();
        let h = pert.h * (1.0 + pert.h_wave * (t + l).sin()) * ((pert.eta * pt.eta) * l + pert.zeta * pt.zeta).exp() / (2.0 * p.theta);
        let i = pert.alpha * pt.alpha * l + pert.beta * pt.beta;
        pt.g * x * y + h * y * y + i * y
    }
}

/// Diffusion candidate `G x y + H y^2 + I y` with `H = e^{xi l^2 + eta l + zeta} / (2 theta)`.
pub fn diffusion_candidate(dc: &DiffusionCoefficients) -> impl Fn(f64, f64, f64, f64) -> f64 + '_ {
    let cache: RefCell<Option<DiffusionPoint>> = RefCell::new(None);
    move |t, x, y, l| {
        let pt = {
            let mut c = cache.borrow_mut();
            match *c {
                Some(pt) if pt.t == t => pt,
                _ => match dc.point(t) {
                    Ok(pt) => {
                        *c = Some(pt);
                        pt
                    }
                    Err(_) => return f64::NAN,
                },
            }
        };
        pt.g * x * y + pt.h(l, dc.params().theta) * y * y + pt.i(l) * y
    }
}

/// Cartesian evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyGrid {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl VerifyGrid {
    /// `t = i T / 10` (i < 10), five wealth levels, three densities and five intensities.
    pub fn standard(t_end: f64) -> Self {
        VerifyGrid {
            t: (0..10).map(|i| i as f64 * t_end / 10.0).collect(),
            x: vec![-100.0, 0.0, 100.0, 200.0, 500.0],
            y: vec![0.5, 1.0, 2.0],
            lambda: vec![0.1, 1.0, 2.5, 5.0, 10.0],
        }
    }

    /// Same times and wealth levels with intensities `{0.1, 0.5, 1, 1.5, 2}`; the diffusion
    /// value's `e^{xi lambda^2}` makes larger intensities numerically meaningless.
    pub fn diffusion(t_end: f64) -> Self {
        VerifyGrid { lambda: vec![0.1, 0.5, 1.0, 1.5, 2.0], ..VerifyGrid::standard(t_end) }
    }

    pub fn len(&self) -> usize {
        self.t.len() * self.x.len() * self.y.len() * self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<[f64; 4]> {
        let mut v = Vec::with_capacity(self.len());
        for &t in &self.t {
            for &x in &self.x {
                for &y in &self.y {
                    for &l in &self.lambda {
                        v.push([t, x, y, l]);
                    }
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    pub residual: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub grid_points: usize,
    pub rows: Vec<ResidualRow>,
    pub max_abs: f64,
    pub max_rel: f64,
    pub worst: [f64; 4],
    /// Largest relative residual of each perturbed candidate (optimal controls unchanged).
    pub negative_controls: Vec<(String, f64)>,
    /// `min L^{a*,b} W / scale` over random admissible adversaries.
    pub min_rel_random_b: f64,
    /// `max L^{a,b*} W / scale` over random insurer controls.
    pub max_rel_random_a: f64,
    pub n_random: usize,
}

impl ResidualReport {
    fn from_rows(rows: Vec<ResidualRow>) -> Self {
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        let mut worst = [f64::NAN; 4];
        for r in &rows {
            let rel = if r.scale > 0.0 { r.residual.abs() / r.scale } else { r.residual.abs() };
            max_abs = max_abs.max(r.residual.abs());
            if !(rel <= max_rel) {
                max_rel = rel;
                worst = [r.t, r.x, r.y, r.lambda];
            }
        }
        ResidualReport {
            grid_points: rows.len(),
            rows,
            max_abs,
            max_rel,
            worst,
            negative_controls: Vec::new(),
            min_rel_random_b: f64::NAN,
            max_rel_random_a: f64::NAN,
            n_random: 0,
        }
    }
}

fn random_adversary(rng: &mut ChaCha8Rng, pt: &CoefPoint, b: &AdversaryControls) -> AdversaryControls {
    AdversaryControls {
        o: rng.random_range(-1.0..1.0),
        p_slope: rng.random_range(0.0..2.0 * b.p_slope.max(0.1)),
        q_decay: pt.eta * rng.random_range(1.0..1.5),
        q_level: rng.random_range(0.0..2.0),
        q_slope: rng.random_range(0.0..2.0 * pt.phi.abs().max(0.1)),
    }
}

fn random_insurer(rng: &mut ChaCha8Rng, a: &InsurerControls) -> InsurerControls {
    InsurerControls {
        pi: a.pi + rng.random_range(-10.0..10.0),
        u: rng.random_range(-1.0..2.0),
        v: rng.random_range(-1.0..2.0),
    }
}

/// `L^{a*,b*} W` over the grid plus negative controls and random one-sided spot checks.
///
/// `n_random` adversaries and insurer controls are drawn at every grid point.
pub fn hjbi_residual_report(curves: &CoefficientCurves, grid: &VerifyGrid, n_random: usize, seed: u64) -> Result<ResidualReport> {
    let p = curves.params();
    let w = candidate(curves, Perturbation::NONE);
    let perturbed: Vec<_> = Perturbation::controls().into_iter().map(|(n, q)| (n, candidate(curves, q))).collect();
    let mut neg = vec![0.0f64; perturbed.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(grid.len());
    let mut min_b = f64::INFINITY;
    let mut max_a = f64::NEG_INFINITY;
    for [t, x, y, l] in grid.points() {
        let pt = curves.point(t)?;
        let a = feedback_controls_y(p, &pt, y, l);
        let b = adversary_controls(p, &pt);
        let r = generator_apply(p, &w, &a, &b, t, x, y, l)?;
        rows.push(ResidualRow { t, x, y, lambda: l, residual: r.value, scale: r.scale });
        for (k, (_, wp)) in perturbed.iter().enumerate() {
            let rp = generator_apply(p, wp, &a, &b, t, x, y, l)?;
            neg[k] = neg[k].max(rp.relative());
        }
        for _ in 0..n_random {
            let bb = random_adversary(&mut rng, &pt, &b);
            let rb = generator_apply(p, &w, &a, &bb, t, x, y, l)?;
            min_b = min_b.min(rb.value / rb.scale);
            let aa = random_insurer(&mut rng, &a);
            let ra = generator_apply(p, &w, &aa, &b, t, x, y, l)?;
            max_a = max_a.max(ra.value / ra.scale);
        }
    }
    let mut rep = ResidualReport::from_rows(rows);
    rep.negative_controls = perturbed.iter().zip(neg).map(|((n, _), v)| (n.to_string(), v)).collect();
    if n_random > 0 {
        rep.min_rel_random_b = min_b;
        rep.max_rel_random_a = max_a;
        rep.n_random = n_random;
    }
    Ok(rep)
}

/// `L^{a*,b*} W` of the diffusion model over the grid.
pub fn diffusion_residual_report(dc: &DiffusionCoefficients, grid: &VerifyGrid) -> Result<ResidualReport> {
    let p = dc.params();
    let w = diffusion_candidate(dc);
    let mut rows = Vec::with_capacity(grid.len());
    for [t, x, y, l] in grid.points() {
        let pt = dc.point(t)?;
        let a = diffusion_feedback_y(p, &pt, y, l);
        let r = diffusion_generator_apply(p, &w, &a, diffusion_adversary(p, l), t, x, y, l);
        rows.push(ResidualRow { t, x, y, lambda: l, residual: r.value, scale: r.scale });
    }
    Ok(ResidualReport::from_rows(rows))
}

/// Largest residual of each coefficient ODE at interior points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeReport {
    pub eta: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl OdeReport {
    pub fn max(&self) -> f64 {
        self.eta.max(self.zeta).max(self.alpha).max(self.beta)
    }
}

fn fd(f: &dyn Fn(f64) -> Result<f64>, t: f64, h: f64) -> Result<f64> {
    Ok((f(t + h)? - f(t - h)?) / (2.0 * h))
}

/// Residuals of the `eta`, `zeta`, `alpha`, `beta` ODEs by central differences (step `h`)
/// at `n - 1` interior points; `alpha` and `beta` relative to `max(1, |value|)`.
pub fn ode_residuals(curves: &CoefficientCurves, n: usize, h: f64) -> Result<OdeReport> {
    let p = curves.params();
    let (l, cat) = (&p.loadings, &p.cat);
    let (mu1, mu2) = (p.f1.mu(), p.f2.mu());
    let c = p.claim_tilt_rate();
    let mut rep = OdeReport { eta: 0.0, zeta: 0.0, alpha: 0.0, beta: 0.0 };
    for i in 1..n {
        let t = p.t_end * i as f64 / n as f64;
        let e = eta(p, t);
        let de = fd(&|s| Ok(eta(p, s)), t, h)?;
        rep.eta = rep.eta.max((de - cat.delta * e + c).abs());
        let dz = fd(&|s| Ok(curves.point(s)?.zeta), t, h)?;
        rep.zeta = rep.zeta.max((dz + crate::coefficients::zeta_rate(p, t)?).abs());
        let a = alpha(p, t);
        let da = fd(&|s| Ok(alpha(p, s)), t, h)?;
        let ra = da - cat.delta * a - (l.kappa_r - l.kappa) * mu1 * g(p, t);
        rep.alpha = rep.alpha.max(ra.abs() / a.abs().max(1.0));
        let b = beta(p, t);
        let db = fd(&|s| Ok(beta(p, s)), t, h)?;
        let rb = db + cat.rho * (l.iota_r + 1.0) * mu2 * a - cat.rho * (l.iota_r - l.iota) * cat.k * mu2 * g(p, t);
        rep.beta = rep.beta.max(rb.abs() / b.abs().max(1.0));
    }
    Ok(rep)
}

/// Relative residuals of the `H` and `I` equations and the magnitude of the `K` bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeReport {
    pub h: f64,
    pub i: f64,
    pub k: f64,
}

/// Plug `H = e^{eta l + zeta}/(2 theta)` and `I = alpha l + beta` into their equations on an
/// `n_t` by `n_l` grid over `[0, T) x [0.1, 10]`, with every `F2` integral by quadrature.
pub fn pde_residuals(curves: &CoefficientCurves, n_t: usize, n_l: usize) -> Result<PdeReport> {
    let p = curves.params();
    let (l, cat) = (&p.loadings, &p.cat);
    let (mu1, mu2) = (p.f1.mu(), p.f2.mu());
    let f2 = &p.f2;
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 10_000 };
    let hfun = |t: f64, lam: f64| -> Result<f64> {
        let pt = curves.point(t)?;
        Ok(pt.h(lam, p.theta))
    };
    let ifun = |t: f64, lam: f64| alpha(p, t) * lam + beta(p, t);
    let mut rep = PdeReport { h: 0.0, i: 0.0, k: 0.0 };
    for it in 0..n_t {
        let t = p.t_end * it as f64 / n_t as f64;
        let pt = curves.point(t)?;
        let e = pt.eta;
        let ht = 1e-5;
        for il in 0..n_l {
            let lam = 0.1 + (10.0 - 0.1) * il as f64 / (n_l - 1).max(1) as f64;
            let hh = pt.h(lam, p.theta);
            let hl = 1e-5 * lam.max(1.0);
            let h_t = (hfun(t + ht, lam)? - hfun(t - ht, lam)?) / (2.0 * ht);
            let h_l = (hfun(t, lam + hl)? - hfun(t, lam - hl)?) / (2.0 * hl);
            // rho int H_z F2 - 2 rho H~(H_z^2 / z), combined pointwise in z
            let comb = hh * f2.expect(|z| -(-e * z).exp_m1(), opts)?;
            let ht_z = f2.expect(|z| z * z / (2.0 * hh * (e * z).exp()), opts)?;
            let ht_hz = f2.expect(|z| z * (hh * (e * z).exp_m1()) / (2.0 * hh * (e * z).exp()), opts)?;
            let quad = (l.iota_r * mu2 + 2.0 * ht_hz).powi(2) / (2.0 * ht_z);
            let terms = [
                h_t,
                -cat.delta * lam * h_l,
                cat.rho * comb,
                hh * p.sharpe2(),
                hh * lam * p.claim_tilt_rate(),
                cat.rho * quad,
            ];
            let v = collect(&terms);
            rep.h = rep.h.max(v.relative());

            let a = pt.alpha;
            let i_t = (ifun(t + ht, lam) - ifun(t - ht, lam)) / (2.0 * ht);
            let i_l = (ifun(t, lam + hl) - ifun(t, lam - hl)) / (2.0 * hl);
            let int_iz = f2.expect(|z| a * z, opts)?;
            let ht_iz = f2.expect(|z| a * z * z / (2.0 * hh * (e * z).exp()), opts)?;
            let ht_hziz = f2.expect(|z| (hh * (e * z).exp_m1()) * a / (2.0 * hh * (e * z).exp()) * z, opts)?;
            let terms = [
                i_t,
                -cat.delta * lam * i_l,
                cat.rho * int_iz,
                ((-l.kappa_r + l.kappa) * mu1 * lam + (-l.iota_r + l.iota) * cat.k * mu2 * cat.rho) * pt.g,
                cat.rho * l.iota_r * mu2 * ht_iz / ht_z,
                -cat.rho * 2.0 * ht_hziz,
                cat.rho * 2.0 * ht_hz * ht_iz / ht_z,
            ];
            rep.i = rep.i.max(collect(&terms).relative());

            let ht_iz2 = f2.expect(|z| a * a * z * z / (2.0 * hh * (e * z).exp()), opts)?;
            rep.k = rep.k.max((ht_iz2 - ht_iz * ht_iz / ht_z).abs());
        }
    }
    Ok(rep)
}

/// Largest residuals of the diffusion `xi`, `eta`, `zeta` Riccati system, each relative to
/// the sum of the absolute values of its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiReport {
    pub xi: f64,
    pub eta: f64,
    pub zeta: f64,
}

impl RiccatiReport {
    pub fn max(&self) -> f64 {
        self.xi.max(self.eta).max(self.zeta)
    }
}

pub fn riccati_residuals(dc: &DiffusionCoefficients, n: usize, h: f64) -> Result<RiccatiReport> {
    let p = dc.params();
    let (rho, d, mu2) = (p.cat.rho, p.cat.delta, p.f2.mu());
    let v = rho * p.f2.sigma2();
    let a = rho * mu2 * (2.0 * p.loadings.iota_r + 1.0);
    let c = p.claim_tilt_rate() * d / (rho * mu2);
    let konst = p.sharpe2() + rho * p.loadings.iota_r.powi(2) * mu2 * mu2 / p.f2.sigma2();
    let mut rep = RiccatiReport { xi: 0.0, eta: 0.0, zeta: 0.0 };
    for i in 1..n {
        let t = p.t_end * i as f64 / n as f64;
        let (xi, e) = (dc.xi(t), dc.eta(t));
        let dxi = fd(&|s| Ok(dc.xi(s)), t, h)?;
        let de = fd(&|s| Ok(dc.eta(s)), t, h)?;
        let dz = fd(&|s| dc.zeta(s), t, h)?;
        rep.xi = rep.xi.max(collect(&[dxi, 2.0 * v * xi * xi, -2.0 * d * xi, c]).relative());
        rep.eta = rep.eta.max(collect(&[de, -(d - 2.0 * v * xi) * e, 2.0 * a * xi]).relative());
        rep.zeta = rep.zeta.max(collect(&[dz, a * e, 0.5 * v * e * e, v * xi, konst]).relative());
    }
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct SaddleConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// One perturbed strategy against the optimal pair, on common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleRow {
    pub label: String,
    pub estimate: f64,
    /// Mean of the paired difference `J(perturbed) - J(optimal)` and its standard error.
    pub diff: f64,
    pub se_diff: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleReport {
    pub optimal: Moments,
    /// `J^{a, b*}` rows: must not exceed the optimum by more than 3 SE.
    pub insurer: Vec<SaddleRow>,
    /// `J^{a*, b}` rows: must not fall below the optimum by more than 3 SE.
    pub adversary: Vec<SaddleRow>,
}

impl SaddleReport {
    pub fn holds(&self) -> bool {
        self.insurer.iter().chain(&self.adversary).all(|r| r.holds)
    }
}

pub fn insurer_perturbations() -> Vec<(&'static str, InsurerStrategy)> {
    let base = |pi_shift: f64, u_scale: f64, u_shift: f64, v_scale: f64, v_shift: f64| InsurerStrategy::Perturbed {
        pi_shift,
        u_scale,
        u_shift,
        v_scale,
        v_shift,
    };
    vec![
        ("u=0", base(0.0, 0.0, 0.0, 1.0, 0.0)),
        ("pi+1", base(1.0, 1.0, 0.0, 1.0, 0.0)),
        ("pi-1", base(-1.0, 1.0, 0.0, 1.0, 0.0)),
        ("u*1.5", base(0.0, 1.5, 0.0, 1.0, 0.0)),
        ("v*0.5", base(0.0, 1.0, 0.0, 0.5, 0.0)),
        ("v+0.1", base(0.0, 1.0, 0.0, 1.0, 0.1)),
        ("precommitted", InsurerStrategy::Precommitted),
    ]
}

pub fn adversary_perturbations(params: &ModelParams) -> Vec<(&'static str, AdversaryStrategy)> {
    let o_star = -(params.market.mu0 - params.market.r) / params.market.sigma0;
    let pert = |o_shift: f64, p_scale: f64, q_eps: f64| AdversaryStrategy::Perturbed { o_shift, p_scale, q_eps };
    vec![
        ("o=0", pert(-o_star, 1.0, 0.0)),
        ("o-0.05", pert(-0.05, 1.0, 0.0)),
        ("p*0.5", pert(0.0, 0.5, 0.0)),
        ("p*1.5", pert(0.0, 1.5, 0.0)),
        ("q+0.2", pert(0.0, 1.0, 0.2)),
        ("q-0.2", pert(0.0, 1.0, -0.2)),
        ("none", AdversaryStrategy::None),
    ]
}

/// Monte Carlo check of `J^{a,b*} <= J^{a*,b*} <= J^{a*,b}` with paired common random numbers.
pub fn saddle_check(curves: &CoefficientCurves, config: &SaddleConfig) -> Result<SaddleReport> {
    let p = curves.params();
    let cfg = SimConfig::new(config.n_paths, config.dt, config.seed, Vec::new());
    let objectives = |a: InsurerStrategy, b: AdversaryStrategy| -> Result<Vec<(u64, f64)>> {
        let sim = Simulator::new(ModelCoefs::Jump(curves), a, b, cfg.clone())?;
        Ok(sim.run_paths()?.into_iter().map(|r| (r.index, r.objective)).collect())
    };
    let base = objectives(InsurerStrategy::Feedback, AdversaryStrategy::Optimal)?;
    let base_vals: Vec<f64> = base.iter().map(|v| v.1).collect();
    let optimal = Moments::of(&base_vals);
    let compare = |label: &str, vals: Vec<(u64, f64)>, upper: bool| -> SaddleRow {
        let mut diffs = Vec::with_capacity(vals.len());
        let mut own = Vec::with_capacity(vals.len());
        let (mut i, mut j) = (0, 0);
        while i < vals.len() && j < base.len() {
            match vals[i].0.cmp(&base[j].0) {
                std::cmp::Ordering::Equal => {
                    diffs.push(vals[i].1 - base[j].1);
                    own.push(vals[i].1);
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        let d = Moments::of(&diffs);
        let holds = if upper { d.mean <= 3.0 * d.se } else { d.mean >= -3.0 * d.se };
        SaddleRow { label: label.to_string(), estimate: Moments::of(&own).mean, diff: d.mean, se_diff: d.se, holds }
    };
    let mut insurer = Vec::new();
    for (label, a) in insurer_perturbations() {
        insurer.push(compare(label, objectives(a, AdversaryStrategy::Optimal)?, true));
    }
    let mut adversary = Vec::new();
    for (label, b) in adversary_perturbations(p) {
        adversary.push(compare(label, objectives(InsurerStrategy::Feedback, b)?, false));
    }
    Ok(SaddleReport { optimal, insurer, adversary })
}

/// Stopped integrals of the density's integrability condition along one intensity path.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrabilityReport {
    /// Integral over the whole horizon (infinite when the density can hit zero).
    pub total: f64,
    /// `(n, stopping time)`: the first time the running integral reaches `n`, if any.
    pub stops: Vec<(f64, Option<f64>)>,
}

impl IntegrabilityReport {
    pub fn finite(&self) -> bool {
        self.total.is_finite()
    }

    /// `n - total` for the largest level, the room left before truncation would bind.
    pub fn margin(&self) -> f64 {
        self.stops.last().map_or(f64::INFINITY, |s| s.0 - self.total)
    }
}

/// Accumulate `o^2 + lambda int (1 - sqrt(1 + p))^2 F1 + rho int (1 - sqrt(1 + q))^2 F2` along
/// `lambda_path` (pairs `(t, lambda)`, left-point rule); `1 + q <= 0` counts as infinite.
pub fn integrability_monitor<B: Fn(f64) -> AdversaryControls>(
    params: &ModelParams,
    lambda_path: &[(f64, f64)],
    b: B,
) -> Result<IntegrabilityReport> {
    let levels = [10.0, 100.0, 1000.0];
    let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 10_000 };
    let mut stops: Vec<(f64, Option<f64>)> = levels.iter().map(|&n| (n, None)).collect();
    let mut total = 0.0;
    for w in lambda_path.windows(2) {
        let (t, lam) = w[0];
        let dt = w[1].0 - t;
        let bc = b(t);
        let sq = |v: f64| if v >= 0.0 { (1.0 - v.sqrt()).powi(2) } else { f64::INFINITY };
        let degenerate = bc.q_level <= 0.0 || bc.p_slope < 0.0;
        let rate = if degenerate {
            f64::INFINITY
        } else {
            let i1 = if bc.p_slope == 0.0 { 0.0 } else { params.f1.expect(|z| sq(1.0 + bc.p(z)), opts)? };
            let i2 = if bc.q_decay == 0.0 && bc.q_level == 1.0 && bc.q_slope == 0.0 {
                0.0
            } else {
                params.f2.expect(|z| sq(1.0 + bc.q(z)), opts)?
            };
            bc.o * bc.o + lam * i1 + params.cat.rho * i2
        };
        let next = total + rate * dt;
        for s in stops.iter_mut() {
            if s.1.is_none() && next >= s.0 {
                s.1 = Some(if rate.is_finite() && rate > 0.0 { t + (s.0 - total) / rate } else { t });
            }
        }
        total = next;
    }
    Ok(IntegrabilityReport { total, stops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::build_curves;

    #[test]
    fn linear_wealth_has_drift_rx() {
        let mut p = ModelParams::baseline();
        p.loadings.kappa_r = p.loadings.kappa;
        p.loadings.iota_r = p.loadings.iota;
        let a = InsurerControls { pi: 0.0, u: 0.0, v: 0.0 };
        let b = AdversaryControls::null();
        let w = |_t: f64, x: f64, _y: f64, _l: f64| x;
        let r = generator_apply(&p, &w, &a, &b, 1.0, 50.0, 1.0, 2.0).unwrap();
        assert!((r.value - p.market.r * 50.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn density_is_driftless() {
        let p = ModelParams::baseline();
        let c = build_curves(&p, 101).unwrap();
        let pt = c.point(30.0).unwrap();
        let b = adversary_controls(&p, &pt);
        let a = feedback_controls_y(&p, &pt, 1.0, 1.0);
        let w = |_t: f64, _x: f64, y: f64, _l: f64| y;
        let r = generator_apply(&p, &w, &a, &b, 30.0, 10.0, 1.3, 2.0).unwrap();
        assert!(r.value.abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn candidate_annihilated_at_reference_point() {
        let p = ModelParams::baseline();
        let c = build_curves(&p, 201).unwrap();
        let pt = c.point(50.0).unwrap();
        let a = feedback_controls_y(&p, &pt, 1.0, 1.0);
        let b = adversary_controls(&p, &pt);
        let w = candidate(&c, Perturbation::NONE);
        let r = generator_apply(&p, &w, &a, &b, 50.0, 100.0, 1.0, 1.0).unwrap();
        assert!(r.relative() <= 1e-6, "{r:?}");
    }

    #[test]
    fn fd_partials_match_closed_form() {
        let p = ModelParams::baseline();
        let c = build_curves(&p, 201).unwrap();
        let w = candidate(&c, Perturbation::NONE);
        for (t, x, y, l) in [(0.0, 100.0, 1.0, 1.0), (40.0, -50.0, 2.0, 5.0), (90.0, 500.0, 0.5, 10.0)] {
            let pt = c.point(t).unwrap();
            let d = partials(&w, t, x, y, l);
            let wx = pt.g * y;
            let wy = pt.g * x + 2.0 * pt.h(l, p.theta) * y + pt.i(l);
            assert!((d.x - wx).abs() <= 1e-8 * wx.abs().max(1.0));
            assert!((d.y - wy).abs() <= 1e-8 * wy.abs().max(1.0));
        }
    }

    #[test]
    fn constant_h_scaling_is_invisible() {
        let p = ModelParams::baseline();
        let c = build_curves(&p, 201).unwrap();
        let pt = c.point(20.0).unwrap();
        let a = feedback_controls_y(&p, &pt, 1.0, 2.0);
        let b = adversary_controls(&p, &pt);
        let w = candidate(&c, Perturbation { h: 1.01, ..Perturbation::NONE });
        let r = generator_apply(&p, &w, &a, &b, 20.0, 100.0, 1.0, 2.0).unwrap();
        assert!(r.relative() < 1e-7, "{r:?}");
    }

    #[test]
    fn monitor_levels() {
        let p = ModelParams::baseline();
        let path: Vec<(f64, f64)> = (0..=100).map(|i| (i as f64 * 0.1, 1.0)).collect();
        let zero = integrability_monitor(&p, &path, |_| AdversaryControls::null()).unwrap();
        assert_eq!(zero.total, 0.0);
        assert!(zero.stops.iter().all(|s| s.1.is_none()));
        let kill = integrability_monitor(&p, &path, |t| {
            let mut b = AdversaryControls::null();
            if t >= 5.0 {
                b.q_level = 0.0;
            }
            b
        })
        .unwrap();
        assert!(!kill.finite());
        assert!(kill.stops.iter().all(|s| s.1 == Some(5.0)));
    }
}
