//! Monte Carlo engines: event-exact jump model and Milstein diffusion model.
//!
//! Every path draws from its own ChaCha8 streams keyed by `(seed, path_index)`, and
//! ensemble reductions use a fixed-order pairwise sum, so results do not depend on the
//! number of worker threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::coefficients::{alpha, beta, decay, eta, g, CoefPoint, CoefficientCurves};
use crate::diffusion::{diffusion_adversary, noise_scales, DiffusionCoefficients, DiffusionPoint};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quad::pairwise_sum;
use crate::strategies::{adversary_controls, feedback_controls_y, precommitted_controls, AdversaryControls, Anchor, InsurerControls};

/// Coefficients of the model to simulate; the variant selects the engine.
#[derive(Debug, Clone, Copy)]
pub enum ModelCoefs<'a> {
    Jump(&'a CoefficientCurves),
    Diffusion(&'a DiffusionCoefficients),
}

impl ModelCoefs<'_> {
    pub fn params(&self) -> &ModelParams {
        match self {
            ModelCoefs::Jump(c) => c.params(),
            ModelCoefs::Diffusion(c) => c.params(),
        }
    }
}

/// State passed to user-supplied insurer strategies.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    /// The optimal feedback controls at this state.
    pub optimal: InsurerControls,
}

pub type CustomStrategy = Arc<dyn Fn(&ControlInput) -> InsurerControls + Send + Sync>;

#[derive(Clone)]
pub enum InsurerStrategy {
    /// Optimal controls written on the current density value.
    Feedback,
    /// Optimal controls written on wealth and the anchor state.
    Precommitted,
    /// Feedback controls with `pi + pi_shift`, `u * u_scale + u_shift`, `v * v_scale + v_shift`.
    Perturbed { pi_shift: f64, u_scale: f64, u_shift: f64, v_scale: f64, v_shift: f64 },
    Custom(CustomStrategy),
}

impl std::fmt::Debug for InsurerStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InsurerStrategy::Feedback => write!(f, "Feedback"),
            InsurerStrategy::Precommitted => write!(f, "Precommitted"),
            InsurerStrategy::Perturbed { pi_shift, u_scale, u_shift, v_scale, v_shift } => write!(
                f,
                "Perturbed(pi+{pi_shift}, u*{u_scale}+{u_shift}, v*{v_scale}+{v_shift})"
            ),
            InsurerStrategy::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryStrategy {
    Optimal,
    /// No change of measure: the density stays at `y0`.
    None,
    /// `o* + o_shift`, `p_scale p*`; jump model `q = e^{-eta z}(1 + q_eps + phi z) - 1`,
    /// diffusion model `q* + q_eps`.
    Perturbed { o_shift: f64, p_scale: f64, q_eps: f64 },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Base time step.
    pub dt: f64,
    /// Sub-steps per base step (a power of two); finer steps refine the same Brownian path.
    pub substeps: usize,
    pub seed: u64,
    pub record: Vec<f64>,
    pub antithetic: bool,
    /// Evolve the density as an exact geometric step between events.
    pub exact_y: bool,
    /// Track `G X + 2 Y H + I - c` at every grid node.
    pub track_identity: bool,
    /// Largest tolerated share of failed paths.
    pub max_failure_rate: f64,
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64, record: Vec<f64>) -> Self {
        SimConfig {
            n_paths,
            dt,
            substeps: 1,
            seed,
            record,
            antithetic: false,
            exact_y: false,
            track_identity: false,
            max_failure_rate: 1e-3,
        }
    }

    fn check(&self, t0: f64, t_end: f64) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_paths == 0 {
            bad.push("n_paths must be >= 1".to_string());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push("dt must be > 0".into());
        }
        if self.substeps == 0 || !self.substeps.is_power_of_two() {
            bad.push("substeps must be a power of two".into());
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            bad.push("antithetic sampling needs an even number of paths".into());
        }
        let tol = 1e-9 * t_end.max(1.0);
        for w in self.record.windows(2) {
            if w[1] <= w[0] {
                bad.push("record times must be strictly increasing".into());
            } else if w[1] - w[0] < self.dt - tol {
                bad.push("dt must not exceed the gap between record times".into());
            }
        }
        if self.record.iter().any(|&t| t < t0 - tol || t > t_end + tol) {
            bad.push(format!("record times must lie in [{t0}, {t_end}]"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// Catastrophe events `(time, impact)` and ordinary claims `(time, size)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub catastrophes: Vec<(f64, f64)>,
    pub claims: Vec<(f64, f64)>,
}

/// Simulate the shot-noise intensity's jumps and the Cox claim times on `[t0, t_end]`.
///
/// Claims are drawn by thinning: between catastrophes the intensity only decays, so the
/// intensity at the last candidate bounds it until the next catastrophe.
pub fn simulate_events<R: Rng>(params: &ModelParams, t0: f64, t_end: f64, lambda0: f64, rng: &mut R) -> EventLog {
    let rho = params.cat.rho;
    let delta = params.cat.delta;
    let mut log = EventLog::default();
    if rho > 0.0 {
        let mut t = t0;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e / rho;
            if t >= t_end {
                break;
            }
            log.catastrophes.push((t, params.f2.sample(rng)));
        }
    }
    let mut lam_seg = lambda0;
    let mut seg_start = t0;
    for i in 0..=log.catastrophes.len() {
        let seg_end = log.catastrophes.get(i).map_or(t_end, |c| c.0);
        let mut t = seg_start;
        let mut bound = lam_seg;
        while bound > 0.0 {
            let e: f64 = Exp1.sample(rng);
            t += e / bound;
            if t >= seg_end {
                break;
            }
            let l = lam_seg * (-delta * (t - seg_start)).exp();
            let u: f64 = rng.random();
            if u * bound <= l {
                log.claims.push((t, params.f1.sample(rng)));
            }
            bound = l;
        }
        lam_seg *= (-delta * (seg_end - seg_start)).exp();
        if let Some(c) = log.catastrophes.get(i) {
            lam_seg += c.1;
        }
        seg_start = seg_end;
    }
    log
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    pub pi: f64,
    pub u: f64,
    pub v: f64,
    /// `H(t, lambda(t))`.
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub index: u64,
    pub points: Vec<RecordPoint>,
    pub x_end: f64,
    pub y_end: f64,
    /// `X(T) Y(T) + Y(T)^2 / (2 theta)`.
    pub objective: f64,
    /// `max |G X + 2 Y H + I - c|` over the grid nodes (0 unless tracked).
    pub identity_max: f64,
}

fn stream(seed: u64, path: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(path.wrapping_mul(4).wrapping_add(k));
    r
}

/// Exact coefficient values on the fine simulation grid.
struct Table<P> {
    t0: f64,
    hf: f64,
    times: Vec<f64>,
    pts: Vec<P>,
    /// `M0(eta)`, `M1(eta)` of the catastrophe law (jump model only).
    m01: Vec<[f64; 2]>,
}

impl<P: Copy> Table<P> {
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        let j = (((t - self.t0) / self.hf).floor().max(0.0) as usize).min(n - 2);
        let j = if self.times[j + 1] <= t && j + 2 < n { j + 1 } else { j };
        let w = ((t - self.times[j]) / (self.times[j + 1] - self.times[j])).clamp(0.0, 1.0);
        (j, w)
    }
}

fn fine_times(t0: f64, t_end: f64, hf: f64) -> Vec<f64> {
    let n = ((t_end - t0) / hf - 1e-9).ceil().max(1.0) as usize;
    let mut v: Vec<f64> = (0..n).map(|j| t0 + j as f64 * hf).collect();
    v.push(t_end);
    v
}

impl Table<CoefPoint> {
    fn jump(curves: &CoefficientCurves, t0: f64, hf: f64) -> Result<Self> {
        let p = curves.params();
        let times = fine_times(t0, p.t_end, hf);
        let pts = times.iter().map(|&t| curves.point(t)).collect::<Result<Vec<_>>>()?;
        let m01 = pts
            .iter()
            .map(|pt| p.f2.tilted_moments(pt.eta).map(|m| [m[0], m[1]]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Table { t0, hf, times, pts, m01 })
    }

    fn at(&self, p: &ModelParams, t: f64) -> (CoefPoint, [f64; 2]) {
        let (j, w) = self.locate(t);
        if w == 0.0 {
            return (self.pts[j], self.m01[j]);
        }
        if w == 1.0 {
            return (self.pts[j + 1], self.m01[j + 1]);
        }
        let (a, b) = (&self.pts[j], &self.pts[j + 1]);
        let lin = |x: f64, y: f64| x + w * (y - x);
        let pt = CoefPoint {
            t,
            g: g(p, t),
            eta: eta(p, t),
            zeta: lin(a.zeta, b.zeta),
            alpha: alpha(p, t),
            beta: beta(p, t),
            phi: lin(a.phi, b.phi),
        };
        let (m, n) = (&self.m01[j], &self.m01[j + 1]);
        (pt, [lin(m[0], n[0]), lin(m[1], n[1])])
    }
}

impl Table<DiffusionPoint> {
    fn diffusion(dc: &DiffusionCoefficients, t0: f64, hf: f64) -> Result<Self> {
        let times = fine_times(t0, dc.params().t_end, hf);
        let pts = times.iter().map(|&t| dc.point(t)).collect::<Result<Vec<_>>>()?;
        Ok(Table { t0, hf, times, pts, m01: Vec::new() })
    }

    fn at(&self, dc: &DiffusionCoefficients, t: f64) -> DiffusionPoint {
        let (j, w) = self.locate(t);
        if w == 0.0 {
            return self.pts[j];
        }
        if w == 1.0 {
            return self.pts[j + 1];
        }
        let p = dc.params();
        let (a, b) = (&self.pts[j], &self.pts[j + 1]);
        DiffusionPoint {
            t,
            g: g(p, t),
            xi: dc.xi(t),
            eta: dc.eta(t),
            zeta: a.zeta + w * (b.zeta - a.zeta),
            alpha: alpha(p, t),
            beta: beta(p, t),
        }
    }
}

enum Tables {
    Jump(Table<CoefPoint>),
    Diffusion(Table<DiffusionPoint>),
}

/// Prepared simulation: coefficient tables, anchor constant and strategies.
pub struct Simulator<'a> {
    coefs: ModelCoefs<'a>,
    strategy: InsurerStrategy,
    adversary: AdversaryStrategy,
    config: SimConfig,
    anchor: Anchor,
    c: f64,
    scale: f64,
    tables: Tables,
}

#[derive(Debug, Clone, Copy)]
struct State {
    x: f64,
    y: f64,
    lam: f64,
}

const DIMS: usize = 3;

impl<'a> Simulator<'a> {
    pub fn new(coefs: ModelCoefs<'a>, strategy: InsurerStrategy, adversary: AdversaryStrategy, config: SimConfig) -> Result<Self> {
        let p = coefs.params();
        let anchor = Anchor::initial(p);
        config.check(anchor.s, p.t_end)?;
        let hf = config.dt / config.substeps as f64;
        let (tables, c, scale) = match coefs {
            ModelCoefs::Jump(curves) => {
                let tab = Table::jump(curves, anchor.s, hf)?;
                let pt = tab.pts[0];
                let terms = [pt.g * anchor.x_s, 2.0 * pt.h(anchor.lambda_s, p.theta) * anchor.y_s, pt.i(anchor.lambda_s)];
                (Tables::Jump(tab), terms.iter().sum::<f64>(), terms.iter().map(|v| v.abs()).sum::<f64>())
            }
            ModelCoefs::Diffusion(dc) => {
                let tab = Table::diffusion(dc, anchor.s, hf)?;
                let pt = tab.pts[0];
                let terms = [pt.g * anchor.x_s, 2.0 * pt.h(anchor.lambda_s, p.theta) * anchor.y_s, pt.i(anchor.lambda_s)];
                (Tables::Diffusion(tab), terms.iter().sum::<f64>(), terms.iter().map(|v| v.abs()).sum::<f64>())
            }
        };
        Ok(Simulator { coefs, strategy, adversary, config, anchor, c, scale, tables })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// The conserved constant `c` of the optimal pair.
    pub fn anchor_constant(&self) -> f64 {
        self.c
    }

    /// `|G(s) x_s| + 2 H(s, lambda_s) y_s + |I(s, lambda_s)|`.
    pub fn identity_scale(&self) -> f64 {
        self.scale
    }

    fn params(&self) -> &ModelParams {
        self.coefs.params()
    }

    fn finish(&self, ctl: InsurerControls, t: f64, st: &State, optimal: InsurerControls) -> InsurerControls {
        match &self.strategy {
            InsurerStrategy::Feedback | InsurerStrategy::Precommitted => ctl,
            InsurerStrategy::Perturbed { pi_shift, u_scale, u_shift, v_scale, v_shift } => InsurerControls {
                pi: optimal.pi + pi_shift,
                u: optimal.u * u_scale + u_shift,
                v: optimal.v * v_scale + v_shift,
            },
            InsurerStrategy::Custom(f) => f(&ControlInput { t, x: st.x, y: st.y, lambda: st.lam, optimal }),
        }
    }

    fn jump_controls(&self, pt: &CoefPoint, st: &State) -> InsurerControls {
        let p = self.params();
        let fb = feedback_controls_y(p, pt, st.y, st.lam);
        let base = match self.strategy {
            InsurerStrategy::Precommitted => precommitted_controls(p, self.c, pt, st.x, st.lam),
            _ => fb,
        };
        self.finish(base, pt.t, st, fb)
    }

    fn jump_adversary(&self, pt: &CoefPoint) -> Option<AdversaryControls> {
        let b = adversary_controls(self.params(), pt);
        match self.adversary {
            AdversaryStrategy::Optimal => Some(b),
            AdversaryStrategy::None => None,
            AdversaryStrategy::Perturbed { o_shift, p_scale, q_eps } => Some(AdversaryControls {
                o: b.o + o_shift,
                p_slope: b.p_slope * p_scale,
                q_level: 1.0 + q_eps,
                ..b
            }),
        }
    }

    fn diffusion_controls(&self, pt: &DiffusionPoint, st: &State) -> InsurerControls {
        let p = self.params();
        let fb = crate::diffusion::diffusion_feedback_y(p, pt, st.y, st.lam);
        let base = match self.strategy {
            InsurerStrategy::Precommitted => crate::diffusion::diffusion_controls(p, self.c, pt, st.x, st.lam),
            _ => fb,
        };
        self.finish(base, pt.t, st, fb)
    }

    fn diffusion_adversary(&self, lam: f64) -> Option<(f64, f64, f64)> {
        let (o, pp, q) = diffusion_adversary(self.params(), lam);
        match self.adversary {
            AdversaryStrategy::Optimal => Some((o, pp, q)),
            AdversaryStrategy::None => None,
            AdversaryStrategy::Perturbed { o_shift, p_scale, q_eps } => Some((o + o_shift, pp * p_scale, q + q_eps)),
        }
    }

    /// One Euler step of length `h` with Brownian increment `dw` (jump model, between events).
    fn jump_advance(&self, st: &mut State, t: f64, h: f64, dw: f64) {
        if h <= 0.0 {
            return;
        }
        let p = self.params();
        let Tables::Jump(tab) = &self.tables else { unreachable!() };
        let (pt, m01) = tab.at(p, t);
        let a = self.jump_controls(&pt, st);
        let (m, l, cat) = (&p.market, &p.loadings, &p.cat);
        let mu1 = p.f1.mu();
        let mu2 = p.f2.mu();
        let lam_int = st.lam * decay(cat.delta, h);
        let drift = m.r * st.x * h
            + a.pi * (m.mu0 - m.r) * h
            + ((l.kappa_r + 1.0) * a.u - l.kappa_r + l.kappa) * mu1 * lam_int
            + ((l.iota_r + 1.0) * a.v - l.iota_r + l.iota) * cat.k * mu2 * cat.rho * h;
        let x_new = st.x + drift + a.pi * m.sigma0 * dw;
        if let Some(b) = self.jump_adversary(&pt) {
            let comp = b.p_slope * mu1 * lam_int + cat.rho * (b.q_level * m01[0] + b.q_slope * m01[1] - 1.0) * h;
            if self.config.exact_y {
                st.y *= (-comp - 0.5 * b.o * b.o * h + b.o * dw).exp();
            } else {
                st.y += st.y * (-comp + b.o * dw);
            }
        }
        st.x = x_new;
        st.lam *= (-cat.delta * h).exp();
    }

    fn jump_event(&self, st: &mut State, t: f64, z: f64, catastrophe: bool) {
        let p = self.params();
        let Tables::Jump(tab) = &self.tables else { unreachable!() };
        let (pt, _) = tab.at(p, t);
        let a = self.jump_controls(&pt, st);
        let b = self.jump_adversary(&pt);
        if catastrophe {
            st.x -= p.cat.k * a.v * z;
            if let Some(b) = b {
                st.y *= 1.0 + b.q(z);
            }
            st.lam += z;
        } else {
            st.x -= a.u * z;
            if let Some(b) = b {
                st.y *= 1.0 + b.p(z);
            }
        }
    }

    fn diffusion_coeffs(&self, pt: &DiffusionPoint, s: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let p = self.params();
        let st = State { x: s[0], y: s[1], lam: s[2] };
        let a = self.diffusion_controls(pt, &st);
        let (m, l, cat) = (&p.market, &p.loadings, &p.cat);
        let (s1, s2) = noise_scales(p);
        let drift_x = m.r * st.x
            + a.pi * (m.mu0 - m.r)
            + (l.kappa_r * a.u - l.kappa_r + l.kappa) * p.f1.mu() * st.lam
            + (l.iota_r * a.v - l.iota_r + l.iota) * cat.k * p.f2.mu() * cat.rho;
        let by = match self.diffusion_adversary(st.lam) {
            Some((o, pp, q)) => [st.y * o, st.y * pp, st.y * q],
            None => [0.0; 3],
        };
        (
            [drift_x, 0.0, -cat.delta * st.lam + cat.rho * p.f2.mu()],
            [[a.pi * m.sigma0, -a.u * s1, -cat.k * a.v * s2], by, [0.0, 0.0, s2]],
        )
    }

    /// Milstein step without Levy areas; derivatives of the noise by central differences.
    fn diffusion_advance(&self, st: &mut State, t: f64, h: f64, dw: &[f64; 3]) {
        if h <= 0.0 {
            return;
        }
        let Tables::Diffusion(tab) = &self.tables else { unreachable!() };
        let ModelCoefs::Diffusion(dc) = self.coefs else { unreachable!() };
        let pt = tab.at(dc, t);
        let s = [st.x, st.y, st.lam];
        let (a, b) = self.diffusion_coeffs(&pt, &s);
        let mut db = [[[0.0; 3]; 3]; 3];
        for (k, dbk) in db.iter_mut().enumerate() {
            let eps = 1e-6 * s[k].abs().max(1.0);
            let mut up = s;
            let mut dn = s;
            up[k] += eps;
            dn[k] -= eps;
            let (_, bu) = self.diffusion_coeffs(&pt, &up);
            let (_, bd) = self.diffusion_coeffs(&pt, &dn);
            for l in 0..3 {
                for j in 0..3 {
                    dbk[l][j] = (bu[l][j] - bd[l][j]) / (2.0 * eps);
                }
            }
        }
        let mut out = s;
        for l in 0..3 {
            let mut v = s[l] + a[l] * h;
            for j in 0..3 {
                v += b[l][j] * dw[j];
            }
            for j1 in 0..3 {
                for j2 in 0..3 {
                    let lb: f64 = (0..3).map(|k| b[k][j1] * db[k][l][j2]).sum();
                    let ii = 0.5 * (dw[j1] * dw[j2] - if j1 == j2 { h } else { 0.0 });
                    v += lb * ii;
                }
            }
            out[l] = v;
        }
        if self.diffusion_adversary(st.lam).is_none() {
            out[1] = st.y;
        }
        *st = State { x: out[0], y: out[1], lam: out[2] };
    }

    fn h_and_i(&self, t: f64, lam: f64) -> (f64, f64, f64) {
        let p = self.params();
        match &self.tables {
            Tables::Jump(tab) => {
                let (pt, _) = tab.at(p, t);
                (pt.g, pt.h(lam, p.theta), pt.i(lam))
            }
            Tables::Diffusion(tab) => {
                let ModelCoefs::Diffusion(dc) = self.coefs else { unreachable!() };
                let pt = tab.at(dc, t);
                (pt.g, pt.h(lam, p.theta), pt.i(lam))
            }
        }
    }

    fn snapshot(&self, t: f64, st: &State) -> RecordPoint {
        let p = self.params();
        let (ctl, h) = match &self.tables {
            Tables::Jump(tab) => {
                let (pt, _) = tab.at(p, t);
                (self.jump_controls(&pt, st), pt.h(st.lam, p.theta))
            }
            Tables::Diffusion(tab) => {
                let ModelCoefs::Diffusion(dc) = self.coefs else { unreachable!() };
                let pt = tab.at(dc, t);
                (self.diffusion_controls(&pt, st), pt.h(st.lam, p.theta))
            }
        };
        RecordPoint { t, x: st.x, y: st.y, lambda: st.lam, pi: ctl.pi, u: ctl.u, v: ctl.v, h }
    }

    /// Simulate one path; the same `(seed, index)` always gives the same record.
    pub fn path(&self, index: u64) -> Result<PathRecord> {
        let (stream_id, sign) = if self.config.antithetic { (index / 2, if index % 2 == 1 { -1.0 } else { 1.0 }) } else { (index, 1.0) };
        let seed = self.config.seed;
        let p = self.params();
        let t0 = self.anchor.s;
        let t_end = p.t_end;
        let dims = match self.coefs {
            ModelCoefs::Jump(_) => 1,
            ModelCoefs::Diffusion(_) => DIMS,
        };
        let events: Vec<(f64, f64, bool)> = match self.coefs {
            ModelCoefs::Jump(_) => {
                let log = simulate_events(p, t0, t_end, self.anchor.lambda_s, &mut stream(seed, stream_id, 0));
                let mut ev: Vec<(f64, f64, bool)> = log
                    .catastrophes
                    .iter()
                    .map(|&(t, z)| (t, z, true))
                    .chain(log.claims.iter().map(|&(t, z)| (t, z, false)))
                    .collect();
                ev.sort_by(|a, b| a.0.total_cmp(&b.0));
                ev
            }
            ModelCoefs::Diffusion(_) => Vec::new(),
        };
        let mut base_rng = stream(seed, stream_id, 1);
        let mut bridge_rng = stream(seed, stream_id, 2);
        let mut split_rng = stream(seed, stream_id, 3);
        let sub = self.config.substeps;
        let dt = self.config.dt;
        let n_base = ((t_end - t0) / dt - 1e-9).ceil().max(1.0) as usize;
        let tol = 1e-9 * t_end.max(1.0);

        let mut st = State { x: self.anchor.x_s, y: self.anchor.y_s, lam: self.anchor.lambda_s };
        let mut points = Vec::with_capacity(self.config.record.len());
        let mut rec = self.config.record.iter().copied().peekable();
        while let Some(&r) = rec.peek() {
            if (r - t0).abs() <= tol {
                points.push(self.snapshot(t0, &st));
                rec.next();
            } else {
                break;
            }
        }
        let mut ev = events.iter().peekable();
        let mut identity_max: f64 = 0.0;
        let mut w = vec![[0.0f64; DIMS]; sub + 1];

        for k in 0..n_base {
            let ta = t0 + k as f64 * dt;
            let tb = if k + 1 == n_base { t_end } else { t0 + (k + 1) as f64 * dt };
            let hb = tb - ta;
            let hs = hb / sub as f64;
            for d in 0..dims {
                let z: f64 = StandardNormal.sample(&mut base_rng);
                w[0][d] = 0.0;
                w[sub][d] = sign * z * hb.sqrt();
            }
            let mut step = sub / 2;
            while step >= 1 {
                let mut i = step;
                while i < sub {
                    for d in 0..dims {
                        let z: f64 = StandardNormal.sample(&mut bridge_rng);
                        w[i][d] = 0.5 * (w[i - step][d] + w[i + step][d]) + sign * z * (0.5 * step as f64 * hs).sqrt();
                    }
                    i += 2 * step;
                }
                step /= 2;
            }
            for j in 0..sub {
                let a = ta + j as f64 * hs;
                let b = if j + 1 == sub { tb } else { ta + (j + 1) as f64 * hs };
                let wb = w[j + 1];
                let mut cur_t = a;
                let mut cur_w = w[j];
                loop {
                    let next_ev = ev.peek().map_or(f64::INFINITY, |e| e.0);
                    let next_rec = rec.peek().copied().filter(|&r| (r - b).abs() > tol).unwrap_or(f64::INFINITY);
                    let tau = next_ev.min(next_rec);
                    if tau >= b {
                        break;
                    }
                    let mut wt = [0.0; DIMS];
                    let span = b - cur_t;
                    let f = (tau - cur_t) / span;
                    let sd = ((tau - cur_t) * (b - tau) / span).max(0.0).sqrt();
                    for d in 0..dims {
                        let z: f64 = StandardNormal.sample(&mut split_rng);
                        wt[d] = cur_w[d] + f * (wb[d] - cur_w[d]) + sign * sd * z;
                    }
                    self.advance(&mut st, cur_t, tau - cur_t, &wt, &cur_w);
                    cur_t = tau;
                    cur_w = wt;
                    if next_ev <= next_rec {
                        let &(te, z, cat) = ev.next().expect("peeked");
                        self.jump_event(&mut st, te, z, cat);
                    } else {
                        points.push(self.snapshot(tau, &st));
                        rec.next();
                    }
                    self.check_state(&st, index, tau)?;
                }
                self.advance(&mut st, cur_t, b - cur_t, &wb, &cur_w);
                self.check_state(&st, index, b)?;
                if self.config.track_identity {
                    let (gg, hh, ii) = self.h_and_i(b, st.lam);
                    let f = gg * st.x + 2.0 * st.y * hh + ii - self.c;
                    identity_max = identity_max.max(f.abs());
                }
                while let Some(&r) = rec.peek() {
                    if (r - b).abs() <= tol {
                        points.push(self.snapshot(b, &st));
                        rec.next();
                    } else {
                        break;
                    }
                }
            }
        }
        let objective = st.x * st.y + st.y * st.y / (2.0 * p.theta);
        Ok(PathRecord { index, points, x_end: st.x, y_end: st.y, objective, identity_max })
    }

    fn advance(&self, st: &mut State, t: f64, h: f64, w_to: &[f64; DIMS], w_from: &[f64; DIMS]) {
        match self.coefs {
            ModelCoefs::Jump(_) => self.jump_advance(st, t, h, w_to[0] - w_from[0]),
            ModelCoefs::Diffusion(_) => {
                let dw = [w_to[0] - w_from[0], w_to[1] - w_from[1], w_to[2] - w_from[2]];
                self.diffusion_advance(st, t, h, &dw)
            }
        }
    }

    fn check_state(&self, st: &State, path: u64, t: f64) -> Result<()> {
        if st.x.is_finite() && st.y.is_finite() && st.lam.is_finite() && st.y >= 0.0 {
            Ok(())
        } else {
            Err(Error::NonFiniteState { path, t })
        }
    }

    /// All paths in index order; fails when more than the tolerated share fail.
    pub fn run_paths(&self) -> Result<Vec<PathRecord>> {
        let n = self.config.n_paths;
        let results: Vec<Result<PathRecord>> = (0..n as u64).into_par_iter().map(|i| self.path(i)).collect();
        let failed = results.iter().filter(|r| r.is_err()).count();
        if failed as f64 > self.config.max_failure_rate * n as f64 {
            return Err(Error::TooManyFailures { failed, total: n });
        }
        Ok(results.into_iter().filter_map(|r| r.ok()).collect())
    }

    pub fn run_ensemble(&self) -> Result<EnsembleStats> {
        let paths = self.run_paths()?;
        Ok(EnsembleStats::from_paths(&paths, self.config.n_paths, self.params().theta, self.config.antithetic))
    }
}

/// Simulate one path for the given model, strategies and configuration.
pub fn simulate_path(
    coefs: ModelCoefs<'_>,
    strategy: InsurerStrategy,
    adversary: AdversaryStrategy,
    config: &SimConfig,
    path_index: u64,
) -> Result<PathRecord> {
    Simulator::new(coefs, strategy, adversary, config.clone())?.path(path_index)
}

pub fn run_ensemble(
    coefs: ModelCoefs<'_>,
    strategy: InsurerStrategy,
    adversary: AdversaryStrategy,
    config: &SimConfig,
) -> Result<EnsembleStats> {
    Simulator::new(coefs, strategy, adversary, config.clone())?.run_ensemble()
}

/// Sample mean, variance and their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub se: f64,
    /// Standard error of the sample variance.
    pub se_var: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Moments { n, mean: f64::NAN, var: f64::NAN, se: f64::NAN, se_var: f64::NAN };
        }
        let nf = n as f64;
        let mean = pairwise_sum(xs) / nf;
        let dev2: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let ss = pairwise_sum(&dev2);
        let var = if n > 1 { ss / (nf - 1.0) } else { 0.0 };
        let dev4: Vec<f64> = dev2.iter().map(|d| d * d).collect();
        let m4 = pairwise_sum(&dev4) / nf;
        let m2 = ss / nf;
        Moments { n, mean, var, se: (var / nf).sqrt(), se_var: ((m4 - m2 * m2).max(0.0) / nf).sqrt() }
    }

    /// `|mean - target| <= k se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordStats {
    pub t: f64,
    pub x: Moments,
    pub y: Moments,
    pub lambda: Moments,
    pub lambda2: Moments,
    pub yx: Moments,
    pub y2: Moments,
    pub yh: Moments,
    pub yh2: Moments,
    pub lyh: Moments,
    pub ylambda: Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub n_failed: usize,
    pub records: Vec<RecordStats>,
    pub objective: Moments,
    pub terminal_x: Moments,
    pub terminal_y: Moments,
    pub terminal_yx: Moments,
    pub terminal_y2: Moments,
    pub identity_max: f64,
    pub identity_mean_max: f64,
}

/// Average consecutive pairs when paths are antithetic; drop pairs with a failed member.
fn samples<F: Fn(&PathRecord) -> f64>(paths: &[PathRecord], antithetic: bool, f: F) -> Vec<f64> {
    if !antithetic {
        return paths.iter().map(f).collect();
    }
    let mut out = Vec::with_capacity(paths.len() / 2);
    let mut i = 0;
    while i + 1 < paths.len() {
        let (a, b) = (&paths[i], &paths[i + 1]);
        if a.index % 2 == 0 && b.index == a.index + 1 {
            out.push(0.5 * (f(a) + f(b)));
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}

impl EnsembleStats {
    pub fn from_paths(paths: &[PathRecord], n_paths: usize, theta: f64, antithetic: bool) -> Self {
        let n_rec = paths.first().map_or(0, |p| p.points.len());
        let m = |f: &dyn Fn(&PathRecord) -> f64| Moments::of(&samples(paths, antithetic, f));
        let records = (0..n_rec)
            .map(|k| RecordStats {
                t: paths[0].points[k].t,
                x: m(&|p| p.points[k].x),
                y: m(&|p| p.points[k].y),
                lambda: m(&|p| p.points[k].lambda),
                lambda2: m(&|p| p.points[k].lambda * p.points[k].lambda),
                yx: m(&|p| p.points[k].y * p.points[k].x),
                y2: m(&|p| p.points[k].y * p.points[k].y),
                yh: m(&|p| p.points[k].y * p.points[k].h),
                yh2: m(&|p| (p.points[k].y * p.points[k].h).powi(2)),
                lyh: m(&|p| p.points[k].lambda * p.points[k].y * p.points[k].h),
                ylambda: m(&|p| p.points[k].y * p.points[k].lambda),
            })
            .collect();
        let _ = theta;
        let maxes: Vec<f64> = paths.iter().map(|p| p.identity_max).collect();
        EnsembleStats {
            n_paths,
            n_failed: n_paths - paths.len(),
            records,
            objective: m(&|p| p.objective),
            terminal_x: m(&|p| p.x_end),
            terminal_y: m(&|p| p.y_end),
            terminal_yx: m(&|p| p.x_end * p.y_end),
            terminal_y2: m(&|p| p.y_end * p.y_end),
            identity_max: maxes.iter().copied().fold(0.0, f64::max),
            identity_mean_max: if maxes.is_empty() { 0.0 } else { pairwise_sum(&maxes) / maxes.len() as f64 },
        }
    }

    /// `C(Q || P) = E[Y(T)^2] - 1`.
    pub fn divergence(&self) -> f64 {
        self.terminal_y2.mean - 1.0
    }
}

/// Estimate and standard error of `E[X(T) Y(T) + Y(T)^2 / (2 theta)]`.
pub fn mmv_objective_estimate(stats: &EnsembleStats) -> (f64, f64) {
    (stats.objective.mean, stats.objective.se)
}

/// `E^Q f = E^P[Y(t) f]` at record index `k`.
pub fn q_star_expectation<F: Fn(&RecordPoint) -> f64>(paths: &[PathRecord], k: usize, f: F) -> Moments {
    let v: Vec<f64> = paths.iter().map(|p| p.points[k].y * f(&p.points[k])).collect();
    Moments::of(&v)
}
