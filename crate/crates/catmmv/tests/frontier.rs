use catmmv::coefficients::build_curves;
use catmmv::frontier::*;
use catmmv::model::ModelParams;
use catmmv::strategies::Anchor;

fn no_catastrophe() -> ModelParams {
    let mut p = ModelParams::baseline();
    p.cat.delta = 0.0;
    p.cat.rho = 0.0;
    p
}

#[test]
fn no_catastrophe_constants_match_closed_form() {
    let p = no_catastrophe();
    let c = build_curves(&p, 401).unwrap();
    let (m1, s1) = p.f1.raw_moments();
    let exponent_rate = |l: f64| {
        let ins = p.loadings.kappa_r * m1;
        l * ins * ins / s1 + (p.market.mu0 - p.market.r).powi(2) / (p.market.sigma0 * p.market.sigma0)
    };
    for (s, t, l) in [(0.0, 10.0, 1.0), (0.0, 50.0, 2.0), (20.0, 90.0, 0.5), (0.0, 100.0, 1.0)] {
        let (c1, c2, c3) = frontier_constants(&c, s, t, l).unwrap();
        let expect = 1.0 / (exponent_rate(l) * (t - s)).exp_m1();
        assert!((c1 / expect - 1.0).abs() < 1e-9, "{s} {t} {l}: {c1} vs {expect}");
        assert!(c2.abs() < 1e-9 * c1.abs().max(1.0) && c3.abs() < 1e-9, "{c2} {c3}");
    }
}

#[test]
fn frontier_points_sit_on_upper_branch() {
    let p = ModelParams::baseline();
    let c = build_curves(&p, 2001).unwrap();
    let a = Anchor::initial(&p);
    let pts: Vec<_> = [25.0, 50.0, 75.0, 100.0].iter().map(|&t| frontier_point(&c, &a, t).unwrap()).collect();
    for f in &pts {
        assert!(f.c1 > 0.0 && f.c3 >= 0.0);
        let slope = 2.0 * f.c1 * (f.mean_p - f.mean_q - f.c2);
        assert!(slope > 0.0, "t={}: {slope}", f.t);
        let v = variance_direct(&c, &a, f.t).unwrap();
        assert!((v / f.var_p - 1.0).abs() < 1e-9);
    }
}

#[test]
fn terminal_frontier_reduces_to_gap_ratio() {
    let p = ModelParams::baseline();
    let c = build_curves(&p, 2001).unwrap();
    let a = Anchor::initial(&p);
    let f = frontier_point(&c, &a, p.t_end).unwrap();
    let s0 = c.point(0.0).unwrap();
    let gap = f.mean_p - f.mean_q;
    let expect = gap * gap / (s0.eta * a.lambda_s + s0.zeta).exp_m1();
    assert!((f.var_p / expect - 1.0).abs() < 1e-9);
}

#[test]
fn intensity_tilt_vanishes_without_catastrophes() {
    let p = no_catastrophe();
    assert_eq!(lambda_tilt(&p, 0.0, 50.0).unwrap(), 0.0);
    let b = ModelParams::baseline();
    assert!(lambda_tilt(&b, 0.0, 10.0).unwrap() > 0.0);
}
