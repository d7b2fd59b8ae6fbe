use catmmv::coefficients::*;
use catmmv::diffusion::*;
use catmmv::model::ModelParams;
use catmmv::strategies::mmv_value;
use catmmv::Error;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

#[test]
fn jump_coefficients_at_reference_parameters() {
    let p = ModelParams::baseline();
    assert!(close(eta(&p, 0.0), 0.3484564580542424, 1e-14));
    assert!(close(eta(&p, 50.0), 0.21689997383341084, 1e-14));
    assert!(close(phi(&p, 0.0).unwrap(), 1.3724050329865132, 1e-12));
    assert!(close(zeta(&p, 0.0).unwrap(), 2.3543455210772826, 1e-9));
    assert!(close(alpha(&p, 0.0), -2.938002984109498, 1e-13));
    assert!(close(beta(&p, 0.0), -1150.5899715643052, 1e-13));
}

#[test]
fn value_at_reference_parameters() {
    let p = ModelParams::baseline();
    let c = build_curves(&p, 2001).unwrap();
    assert!(close(mmv_value(&c).unwrap(), -874.2390502583718, 1e-9));
    let c10 = build_curves(&p.with_horizon(10.0), 2001).unwrap();
    assert!(close(mmv_value(&c10).unwrap(), 40.65364906807848, 1e-9));
}

#[test]
fn tabulated_curves_match_pointwise_closed_forms() {
    let p = ModelParams::baseline();
    let c = build_curves(&p, 2001).unwrap();
    for t in [0.0, 0.05, 13.7, 50.0, 99.99] {
        let a = c.point(t).unwrap();
        let b = CoefPoint::exact(&p, t).unwrap();
        assert!(close(a.zeta, b.zeta, 1e-9) && a.eta == b.eta && a.alpha == b.alpha);
    }
}

/// The printed closed form of the constant coefficient, with a minus sign on the `k` term.
fn beta_as_printed(p: &ModelParams, t: f64) -> f64 {
    let (r, d, rho) = (p.market.r, p.cat.delta, p.cat.rho);
    let tau = p.t_end - t;
    let l = &p.loadings;
    let gr = growth(r, tau);
    rho * (l.kappa_r - l.kappa) * (l.iota_r + 1.0) * p.f1.mu() * p.f2.mu() / (d + r) * (decay(d, tau) - gr)
        + rho * (l.iota_r - l.iota) * p.cat.k * p.f2.mu() * gr
}

fn beta_ode_residual<F: Fn(f64) -> f64>(p: &ModelParams, b: F, t: f64) -> f64 {
    let h = 1e-4;
    let db = (b(t + h) - b(t - h)) / (2.0 * h);
    let l = &p.loadings;
    let rho = p.cat.rho;
    let mu2 = p.f2.mu();
    db + rho * (l.iota_r + 1.0) * mu2 * alpha(p, t) - rho * (l.iota_r - l.iota) * p.cat.k * mu2 * g(p, t)
}

#[test]
fn printed_beta_sign_fails_its_ode() {
    let p = ModelParams::baseline();
    for t in [10.0, 50.0, 90.0] {
        let ok = beta_ode_residual(&p, |s| beta(&p, s), t);
        let bad = beta_ode_residual(&p, |s| beta_as_printed(&p, s), t);
        assert!(ok.abs() < 1e-6, "{ok}");
        assert!(bad.abs() > 1.0, "{bad}");
    }
}

#[test]
fn diffusion_condition_gate() {
    assert!(matches!(DiffusionCoefficients::new(&ModelParams::baseline(), 101), Err(Error::ConditionViolated(_))));
    assert!(DiffusionCoefficients::new(&variant_params(), 101).is_ok());
}

#[test]
fn diffusion_coefficients_at_variant_parameters() {
    let d = DiffusionCoefficients::new(&variant_params(), 2001).unwrap();
    let want = [
        (0.0, 0.7924770780521, 0.32051032094915705, 0.4228337039909057),
        (50.0, 0.54328671700973, 0.11166345912105802, 0.17174447396563902),
        (90.0, 0.1502202989449, 0.006207734875479296, 0.02753048379850314),
    ];
    for (t, xi, eta, zeta) in want {
        let pt = d.point(t).unwrap();
        assert!(close(pt.xi, xi, 1e-11), "{t} {}", pt.xi);
        assert!(close(pt.eta, eta, 1e-11), "{t} {}", pt.eta);
        assert!(close(pt.zeta, zeta, 1e-9), "{t} {}", pt.zeta);
    }
    let (_, p, _) = diffusion_adversary(d.params(), 1.0);
    assert!((p - 0.12860).abs() < 5e-6, "{p}");
}

/// Classical RK4 on the Riccati system, marching backwards from the terminal time.
fn riccati_rk4(p: &ModelParams, n: usize) -> Vec<(f64, [f64; 3])> {
    let v = p.cat.rho * p.f2.sigma2();
    let a = p.cat.rho * p.f2.mu() * (2.0 * p.loadings.iota_r + 1.0);
    let c = p.claim_tilt_rate();
    let d = p.cat.delta;
    let k0 = c * d / (p.cat.rho * p.f2.mu());
    let konst = p.sharpe2() + p.cat.rho * (p.loadings.iota_r * p.f2.mu()).powi(2) / p.f2.sigma2();
    let f = |y: [f64; 3]| {
        let [xi, et, _] = y;
        [
            -2.0 * v * xi * xi + 2.0 * d * xi - k0,
            (d - 2.0 * v * xi) * et - 2.0 * a * xi,
            -(a * et + 0.5 * v * et * et + v * xi + konst),
        ]
    };
    let h = -p.t_end / n as f64;
    let mut y = [0.0; 3];
    let mut out = vec![(p.t_end, y)];
    let axpy = |y: [f64; 3], k: [f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
    for i in 0..n {
        let k1 = f(y);
        let k2 = f(axpy(y, k1, h / 2.0));
        let k3 = f(axpy(y, k2, h / 2.0));
        let k4 = f(axpy(y, k3, h));
        for j in 0..3 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        out.push((p.t_end + (i + 1) as f64 * h, y));
    }
    out
}

#[test]
fn diffusion_closed_forms_match_rk4() {
    let p = variant_params();
    let d = DiffusionCoefficients::new(&p, 2001).unwrap();
    for (t, y) in riccati_rk4(&p, 20_000).into_iter().step_by(1000) {
        let t = t.max(0.0);
        let pt = d.point(t).unwrap();
        assert!((pt.xi - y[0]).abs() < 1e-9, "xi at {t}: {} vs {}", pt.xi, y[0]);
        assert!((pt.eta - y[1]).abs() < 1e-9, "eta at {t}: {} vs {}", pt.eta, y[1]);
        assert!((pt.zeta - y[2]).abs() < 1e-8, "zeta at {t}: {} vs {}", pt.zeta, y[2]);
    }
}

#[test]
fn diffusion_branches_join_continuously() {
    let mut p = variant_params();
    let d0 = 2.0 * p.claim_tilt_rate() * p.f2.sigma2() / p.f2.mu();
    p.cat.delta = d0;
    let at_root = DiffusionCoefficients::new(&p, 201).unwrap();
    assert_eq!(at_root.branch, Branch::DeltaZero);
    p.cat.delta = 0.5 * (d0 + (d0 * d0 + 1e-8).sqrt());
    let near = DiffusionCoefficients::new(&p, 201).unwrap();
    assert_eq!(near.branch, Branch::DeltaPositive);
    assert!((near.delta_disc - 1e-8).abs() < 1e-12);
    for t in [0.0, 30.0, 70.0] {
        assert!((near.xi(t) - at_root.xi(t)).abs() <= 1e-4);
        assert!((near.eta(t) - at_root.eta(t)).abs() <= 1e-4);
    }
}
