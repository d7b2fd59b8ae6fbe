//! Optimal controls of both players and the value function of the jump model.

use crate::coefficients::{CoefPoint, CoefficientCurves};
use crate::error::Result;
use crate::model::ModelParams;
use crate::quad::QuadOptions;

/// Amount in the risky asset and the two retention levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsurerControls {
    pub pi: f64,
    pub u: f64,
    pub v: f64,
}

/// State observed at the anchor time `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub s: f64,
    pub x_s: f64,
    pub y_s: f64,
    pub lambda_s: f64,
}

impl Anchor {
    pub fn initial(params: &ModelParams) -> Self {
        Anchor { s: params.s, x_s: params.x0, y_s: params.y0, lambda_s: params.lambda0 }
    }
}

/// Density-process controls: Brownian tilt `o` and jump tilts
/// `p(z) = p_slope z`, `q(z) = e^{-q_decay z}(q_level + q_slope z) - 1`.
///
/// The optimal adversary has `q_decay = eta(t)`, `q_level = 1`, `q_slope = phi(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryControls {
    pub o: f64,
    pub p_slope: f64,
    pub q_decay: f64,
    pub q_level: f64,
    pub q_slope: f64,
}

impl AdversaryControls {
    /// The adversary that leaves `P` unchanged.
    pub fn null() -> Self {
        AdversaryControls { o: 0.0, p_slope: 0.0, q_decay: 0.0, q_level: 1.0, q_slope: 0.0 }
    }

    pub fn p(&self, z: f64) -> f64 {
        self.p_slope * z
    }

    pub fn q(&self, z: f64) -> f64 {
        (-self.q_decay * z).exp() * (self.q_level + self.q_slope * z) - 1.0
    }

    /// `p >= -1` and `q >= -1` on `z > 0`.
    pub fn is_admissible(&self) -> bool {
        self.p_slope >= 0.0 && self.q_level >= 0.0 && self.q_slope >= 0.0 && self.q_decay >= 0.0
    }

    /// `int p lambda F1(dz) + rho int q F2(dz)`, the compensator rate of the density jumps.
    pub fn jump_compensator(&self, params: &ModelParams, lambda: f64) -> Result<f64> {
        let m = params.f2.tilted_moments(self.q_decay)?;
        Ok(self.p_slope * params.f1.mu() * lambda
            + params.cat.rho * (self.q_level * m[0] + self.q_slope * m[1] - 1.0))
    }
}

/// Optimal adversary at the time of `pt`.
pub fn adversary_controls(params: &ModelParams, pt: &CoefPoint) -> AdversaryControls {
    let m = &params.market;
    AdversaryControls {
        o: -(m.mu0 - m.r) / m.sigma0,
        p_slope: params.loadings.kappa_r * params.f1.mu() / params.f1.sigma2(),
        q_decay: pt.eta,
        q_level: 1.0,
        q_slope: pt.phi,
    }
}

/// Optimal insurer controls in feedback form on the density value `y`.
pub fn feedback_controls_y(params: &ModelParams, pt: &CoefPoint, y: f64, lambda: f64) -> InsurerControls {
    let h = pt.h(lambda, params.theta);
    let m = &params.market;
    let two_hy_g = 2.0 * h * y / pt.g;
    InsurerControls {
        pi: two_hy_g * (m.mu0 - m.r) / (m.sigma0 * m.sigma0),
        u: two_hy_g * params.loadings.kappa_r * params.f1.mu() / params.f1.sigma2(),
        v: (two_hy_g * pt.phi + pt.alpha / pt.g) / params.cat.k,
    }
}

/// Catastrophe retention from the quadratic forms `H~(.)` evaluated by quadrature.
pub fn v_star_quadrature(params: &ModelParams, pt: &CoefPoint, y: f64, lambda: f64) -> Result<f64> {
    let h = pt.h(lambda, params.theta);
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_intervals: 10_000 };
    let f2 = &params.f2;
    let e = pt.eta;
    let ht_z = f2.expect(|z| z * z * (-e * z).exp() / (2.0 * h), opts)?;
    let ht_hz = f2.expect(|z| -0.5 * z * (-e * z).exp_m1(), opts)?;
    let ht_iz = f2.expect(|z| pt.alpha * z * z * (-e * z).exp() / (2.0 * h), opts)?;
    let num = params.loadings.iota_r * f2.mu() * y + 2.0 * y * ht_hz + ht_iz;
    Ok(num / (ht_z * params.cat.k * pt.g))
}

/// `c = G(s) x_s + 2 H(s, lambda_s) y_s + I(s, lambda_s)`, conserved along optimal paths.
pub fn anchor_constant(params: &ModelParams, anchor_pt: &CoefPoint, anchor: &Anchor) -> f64 {
    anchor_pt.g * anchor.x_s
        + 2.0 * anchor_pt.h(anchor.lambda_s, params.theta) * anchor.y_s
        + anchor_pt.i(anchor.lambda_s)
}

/// Retention bracket `D = (c - G x - I) / G`.
pub fn bracket(c: f64, pt: &CoefPoint, x: f64, lambda: f64) -> f64 {
    (c - pt.g * x - pt.i(lambda)) / pt.g
}

/// Density value implied by wealth `x` on an optimal path through the anchor.
pub fn y_from_x(params: &ModelParams, c: f64, pt: &CoefPoint, x: f64, lambda: f64) -> f64 {
    (c - pt.g * x - pt.i(lambda)) / (2.0 * pt.h(lambda, params.theta))
}

/// Insurer controls written on wealth and the anchor state only.
pub fn precommitted_controls(params: &ModelParams, c: f64, pt: &CoefPoint, x: f64, lambda: f64) -> InsurerControls {
    let d = bracket(c, pt, x, lambda);
    let m = &params.market;
    InsurerControls {
        pi: (m.mu0 - m.r) * d / (m.sigma0 * m.sigma0),
        u: params.loadings.kappa_r * params.f1.mu() * d / params.f1.sigma2(),
        v: (pt.phi * d + pt.alpha / pt.g) / params.cat.k,
    }
}

/// `W = [c^2 - (G x + I)^2] / (4 H)`.
pub fn value_function(params: &ModelParams, c: f64, pt: &CoefPoint, x: f64, lambda: f64) -> f64 {
    let a = pt.g * x + pt.i(lambda);
    (c * c - a * a) / (4.0 * pt.h(lambda, params.theta))
}

/// The HJBI solution `G x y + H y^2 + I y`.
pub fn hjbi_candidate(params: &ModelParams, pt: &CoefPoint, x: f64, y: f64, lambda: f64) -> f64 {
    pt.g * x * y + pt.h(lambda, params.theta) * y * y + pt.i(lambda) * y
}

/// Convenience wrappers evaluating exact coefficient points from `curves`.
pub struct Policy<'a> {
    curves: &'a CoefficientCurves,
    anchor: Anchor,
    anchor_pt: CoefPoint,
    c: f64,
}

impl<'a> Policy<'a> {
    pub fn new(curves: &'a CoefficientCurves, anchor: Anchor) -> Result<Self> {
        let anchor_pt = curves.point(anchor.s)?;
        let c = anchor_constant(curves.params(), &anchor_pt, &anchor);
        Ok(Policy { curves, anchor, anchor_pt, c })
    }

    pub fn anchor(&self) -> &Anchor {
        &self.anchor
    }

    pub fn anchor_point(&self) -> &CoefPoint {
        &self.anchor_pt
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn controls(&self, t: f64, x: f64, lambda: f64) -> Result<InsurerControls> {
        let pt = self.curves.point(t)?;
        Ok(precommitted_controls(self.curves.params(), self.c, &pt, x, lambda))
    }

    pub fn value(&self, t: f64, x: f64, lambda: f64) -> Result<f64> {
        let pt = self.curves.point(t)?;
        Ok(value_function(self.curves.params(), self.c, &pt, x, lambda))
    }

    pub fn implied_y(&self, t: f64, x: f64, lambda: f64) -> Result<f64> {
        let pt = self.curves.point(t)?;
        Ok(y_from_x(self.curves.params(), self.c, &pt, x, lambda))
    }
}

/// `V = G(s) x0 y0 + I(s, lambda0) y0 + H(s, lambda0) y0^2` at the initial anchor.
pub fn mmv_value(curves: &CoefficientCurves) -> Result<f64> {
    let p = curves.params();
    let a = Anchor::initial(p);
    let pol = Policy::new(curves, a)?;
    pol.value(a.s, a.x_s, a.lambda_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::build_curves;

    fn setup() -> (ModelParams, CoefficientCurves) {
        let p = ModelParams::baseline();
        let c = build_curves(&p, 201).unwrap();
        (p, c)
    }

    #[test]
    fn terminal_feedback_u() {
        let (p, c) = setup();
        let pt = c.point(p.t_end).unwrap();
        let a = feedback_controls_y(&p, &pt, 1.0, 1.0);
        assert!((a.u - 0.0105).abs() < 1e-15);
    }

    #[test]
    fn zero_density_controls() {
        let (p, c) = setup();
        let pt = c.point(30.0).unwrap();
        let a = feedback_controls_y(&p, &pt, 0.0, 2.0);
        assert_eq!((a.pi, a.u), (0.0, 0.0));
        assert_eq!(a.v, pt.alpha / (p.cat.k * pt.g));
    }

    #[test]
    fn v_star_routes_agree() {
        let (p, c) = setup();
        for (t, y, l) in [(0.0, 1.0, 1.0), (40.0, 0.5, 3.0), (90.0, 2.0, 0.2)] {
            let pt = c.point(t).unwrap();
            let a = feedback_controls_y(&p, &pt, y, l).v;
            let b = v_star_quadrature(&p, &pt, y, l).unwrap();
            assert!((a / b - 1.0).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn adversary_values() {
        let (p, c) = setup();
        let b = adversary_controls(&p, &c.point(p.t_end).unwrap());
        assert!((b.o + 0.05).abs() < 1e-15);
        assert!((b.p(1.0) - 0.0105).abs() < 1e-15);
        assert!((b.q(10.0) - 0.18).abs() < 1e-14);
        assert!(b.is_admissible());
    }

    #[test]
    fn anchor_bracket_vanishes() {
        let (p, c) = setup();
        let a = Anchor { s: 5.0, x_s: 80.0, y_s: 1.3, lambda_s: 2.0 };
        let pol = Policy::new(&c, a).unwrap();
        let pt = pol.anchor_point();
        let x = a.x_s + 2.0 * pt.h(a.lambda_s, p.theta) * a.y_s / pt.g;
        let u = pol.controls(a.s, x, a.lambda_s).unwrap();
        assert!(u.pi.abs() < 1e-12 && u.u.abs() < 1e-12);
        assert!((u.v - pt.alpha / (pt.g * p.cat.k)).abs() < 1e-15);
    }

    #[test]
    fn precommitted_equals_feedback() {
        let (p, c) = setup();
        let a = Anchor::initial(&p);
        let pol = Policy::new(&c, a).unwrap();
        for (t, x, l) in [(1.0, 100.0, 5.0), (20.0, -40.0, 0.3), (70.0, 500.0, 8.0)] {
            let pt = c.point(t).unwrap();
            let y = pol.implied_y(t, x, l).unwrap();
            let f = feedback_controls_y(&p, &pt, y, l);
            let g = pol.controls(t, x, l).unwrap();
            for (u, v) in [(f.pi, g.pi), (f.u, g.u), (f.v, g.v)] {
                assert!((u - v).abs() <= 1e-10 * u.abs().max(1e-8), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn value_at_anchor_expands() {
        let (p, c) = setup();
        let a = Anchor { s: 12.0, x_s: 50.0, y_s: 0.7, lambda_s: 1.5 };
        let pol = Policy::new(&c, a).unwrap();
        let pt = pol.anchor_point();
        let w = pol.value(a.s, a.x_s, a.lambda_s).unwrap();
        let e = (pt.g * a.x_s + pt.i(a.lambda_s)) * a.y_s + pt.h(a.lambda_s, p.theta) * a.y_s * a.y_s;
        assert!((w / e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn terminal_value() {
        let (p, c) = setup();
        let a = Anchor { s: p.t_end, x_s: 2.0, y_s: 3.0, lambda_s: 1.0 };
        let w = Policy::new(&c, a).unwrap().value(p.t_end, 2.0, 1.0).unwrap();
        assert!((w - 10.5).abs() < 1e-12);
    }
}
