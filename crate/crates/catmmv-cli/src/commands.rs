//! Subcommand bodies. Each returns its files in memory; nothing is written here.

use catmmv::coefficients::{build_curves, CoefficientCurves};
use catmmv::diffusion::{
    diffusion_anchor_constant, diffusion_controls, diffusion_mmv_value, diffusion_value, DiffusionCoefficients,
};
use catmmv::frontier::frontier_point;
use catmmv::model::ModelParams;
use catmmv::simulate::{AdversaryStrategy, EnsembleStats, InsurerStrategy, ModelCoefs, SimConfig, Simulator};
use catmmv::strategies::{mmv_value, Anchor, InsurerControls, Policy};
use catmmv::verify::{
    diffusion_residual_report, hjbi_residual_report, ode_residuals, pde_residuals, riccati_residuals, ResidualReport,
    VerifyGrid,
};

use crate::output::{num, Csv};
use crate::{
    resolve_seed, AdversaryKind, Cli, CliError, Command, Config, FrontierArgs, GridArgs, McArgs, ModelKind, Report,
    SensitivityArgs, SimArgs, StrategyKind, VerifyArgs,
};

const RESIDUAL_TOL: f64 = 1e-6;
const POWER_TOL: f64 = 1e-3;

/// Coefficients of either engine.
pub enum Engine {
    Jump(CoefficientCurves),
    Diffusion(DiffusionCoefficients),
}

impl Engine {
    pub fn build(model: ModelKind, params: &ModelParams, grid: usize) -> Result<Self, CliError> {
        Ok(match model {
            ModelKind::Jump => Engine::Jump(build_curves(params, grid)?),
            ModelKind::Diffusion => Engine::Diffusion(DiffusionCoefficients::new(params, grid)?),
        })
    }

    fn coefs(&self) -> ModelCoefs<'_> {
        match self {
            Engine::Jump(c) => ModelCoefs::Jump(c),
            Engine::Diffusion(d) => ModelCoefs::Diffusion(d),
        }
    }

    fn params(&self) -> &ModelParams {
        match self {
            Engine::Jump(c) => c.params(),
            Engine::Diffusion(d) => d.params(),
        }
    }

    /// Precommitted controls and value at `(t, x, lambda)` from the initial anchor.
    pub fn controls_and_value(&self, t: f64, x: f64, lambda: f64) -> Result<(InsurerControls, f64), CliError> {
        match self {
            Engine::Jump(c) => {
                let pol = Policy::new(c, Anchor::initial(c.params()))?;
                Ok((pol.controls(t, x, lambda)?, pol.value(t, x, lambda)?))
            }
            Engine::Diffusion(d) => {
                let p = d.params();
                let a = Anchor::initial(p);
                let c = diffusion_anchor_constant(p, &d.point(a.s)?, &a);
                let pt = d.point(t)?;
                Ok((diffusion_controls(p, c, &pt, x, lambda), diffusion_value(p, c, &pt, x, lambda)))
            }
        }
    }

    pub fn objective(&self) -> Result<f64, CliError> {
        Ok(match self {
            Engine::Jump(c) => mmv_value(c)?,
            Engine::Diffusion(d) => diffusion_mmv_value(d)?,
        })
    }
}

pub fn run(cli: &Cli, config: &Config) -> Result<Report, CliError> {
    if cli.grid < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    match &cli.command {
        Command::Sensitivity(args) => sensitivity(cli, config, args),
        cmd => {
            let params = config.to_params()?;
            let engine = Engine::build(cli.model, &params, cli.grid)?;
            match cmd {
                Command::Coeffs => coeffs(&engine, cli.grid),
                Command::Value(g) => value(&engine, g),
                Command::Policy(g) => policy(&engine, g),
                Command::Simulate(s) => simulate(&engine, s),
                Command::Frontier(f) => frontier(&engine, f),
                Command::Verify(v) => verify(&engine, v),
                Command::Sensitivity(_) => unreachable!(),
            }
        }
    }
}

fn check_times(ts: &[f64], t_end: f64, what: &str) -> Result<(), CliError> {
    if let Some(t) = ts.iter().find(|t| !(t.is_finite() && **t >= 0.0 && **t <= t_end)) {
        return Err(CliError::Usage(format!("{what} time {t} outside [0, {t_end}]")));
    }
    Ok(())
}

fn coeffs(engine: &Engine, n: usize) -> Result<Report, CliError> {
    let t_end = engine.params().t_end;
    let times: Vec<f64> = (0..n).map(|i| if i == n - 1 { t_end } else { i as f64 * t_end / (n - 1) as f64 }).collect();
    let csv = match engine {
        Engine::Jump(c) => {
            let mut csv = Csv::new(&["t", "eta", "zeta", "alpha", "beta", "phi"]);
            for (i, &t) in c.grid.iter().enumerate() {
                csv.row(&[t, c.eta[i], c.zeta[i], c.alpha[i], c.beta[i], c.phi[i]]);
            }
            csv
        }
        Engine::Diffusion(d) => {
            let mut csv = Csv::new(&["t", "xi", "eta", "zeta", "alpha", "beta"]);
            for &t in &times {
                let pt = d.point(t)?;
                csv.row(&[t, pt.xi, pt.eta, pt.zeta, pt.alpha, pt.beta]);
            }
            csv
        }
    };
    let mut r = Report::default();
    r.outputs.add("coeffs.csv", csv.into_string());
    Ok(r)
}

fn value(engine: &Engine, g: &GridArgs) -> Result<Report, CliError> {
    check_times(&g.t, engine.params().t_end, "--t")?;
    let mut csv = Csv::new(&["t", "x", "lambda", "W"]);
    for &t in &g.t {
        for &x in &g.x {
            for &l in &g.lambda {
                csv.row(&[t, x, l, engine.controls_and_value(t, x, l)?.1]);
            }
        }
    }
    let mut r = Report::default();
    r.messages.push(format!("V = {}", num(engine.objective()?)));
    r.outputs.add("value.csv", csv.into_string());
    Ok(r)
}

fn policy(engine: &Engine, g: &GridArgs) -> Result<Report, CliError> {
    check_times(&g.t, engine.params().t_end, "--t")?;
    let mut csv = Csv::new(&["t", "x", "lambda", "pi", "u", "v"]);
    for &t in &g.t {
        for &x in &g.x {
            for &l in &g.lambda {
                let (a, _) = engine.controls_and_value(t, x, l)?;
                csv.row(&[t, x, l, a.pi, a.u, a.v]);
            }
        }
    }
    let mut r = Report::default();
    r.outputs.add("policy.csv", csv.into_string());
    Ok(r)
}

fn sim_config(mc: &McArgs, record: Vec<f64>) -> Result<(SimConfig, u64), CliError> {
    let seed = resolve_seed(mc.seed)?;
    let mut cfg = SimConfig::new(mc.paths, mc.dt, seed, record);
    cfg.substeps = mc.substeps;
    cfg.antithetic = mc.antithetic;
    Ok((cfg, seed))
}

fn ensemble(engine: &Engine, a: InsurerStrategy, b: AdversaryStrategy, cfg: SimConfig) -> Result<EnsembleStats, CliError> {
    Ok(Simulator::new(engine.coefs(), a, b, cfg)?.run_ensemble()?)
}

fn simulate(engine: &Engine, s: &SimArgs) -> Result<Report, CliError> {
    let t_end = engine.params().t_end;
    let record = if s.record.is_empty() { vec![t_end] } else { s.record.clone() };
    let (cfg, seed) = sim_config(&s.mc, record)?;
    let a = match s.strategy {
        StrategyKind::Optimal => InsurerStrategy::Feedback,
        StrategyKind::Precommitted => InsurerStrategy::Precommitted,
    };
    let b = match s.adversary {
        AdversaryKind::Optimal => AdversaryStrategy::Optimal,
        AdversaryKind::None => AdversaryStrategy::None,
    };
    let st = ensemble(engine, a, b, cfg)?;
    let mut csv = Csv::new(&[
        "t", "mean_X", "se_X", "var_X", "mean_Y", "se_Y", "mean_lambda", "se_lambda", "mean_YX", "se_YX", "mean_Y2",
        "se_Y2",
    ]);
    for r in &st.records {
        csv.row(&[
            r.t, r.x.mean, r.x.se, r.x.var, r.y.mean, r.y.se, r.lambda.mean, r.lambda.se, r.yx.mean, r.yx.se, r.y2.mean,
            r.y2.se,
        ]);
    }
    let mut obj = Csv::new(&["estimate", "se", "n_paths"]);
    obj.cells(&[num(st.objective.mean), num(st.objective.se), st.objective.n.to_string()]);
    let mut r = Report { seed: Some(seed), ..Report::default() };
    r.messages.push(format!(
        "objective {} +- {} ({} paths, {} failed)",
        num(st.objective.mean),
        num(st.objective.se),
        st.n_paths,
        st.n_failed
    ));
    r.outputs.add("ensemble.csv", csv.into_string());
    r.outputs.add("objective.csv", obj.into_string());
    Ok(r)
}

fn frontier(engine: &Engine, f: &FrontierArgs) -> Result<Report, CliError> {
    let Engine::Jump(c) = engine else {
        return Err(CliError::Usage("frontier is available for the jump model only".into()));
    };
    let p = c.params();
    let ts = if f.t.is_empty() { (1..=4).map(|i| p.s + (p.t_end - p.s) * i as f64 / 4.0).collect() } else { f.t.clone() };
    check_times(&ts, p.t_end, "--t")?;
    let anchor = Anchor::initial(p);
    let mut header = vec!["t", "mean_P", "mean_Q", "var_P", "C1", "C2", "C3"];
    let mut r = Report::default();
    let mc = if f.mc {
        header.extend(["mc_mean_P", "mc_var_P", "mc_se_mean", "mc_se_var"]);
        let (cfg, seed) = sim_config(&f.sim, ts.clone())?;
        r.seed = Some(seed);
        Some(ensemble(engine, InsurerStrategy::Feedback, AdversaryStrategy::Optimal, cfg)?)
    } else {
        None
    };
    let mut csv = Csv::new(&header);
    for (k, &t) in ts.iter().enumerate() {
        let fp = frontier_point(c, &anchor, t)?;
        let mut row = vec![t, fp.mean_p, fp.mean_q, fp.var_p, fp.c1, fp.c2, fp.c3];
        if let Some(st) = &mc {
            let x = &st.records[k].x;
            row.extend([x.mean, x.var, x.se, x.se_var]);
        }
        csv.row(&row);
    }
    r.outputs.add("frontier.csv", csv.into_string());
    Ok(r)
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn residuals_csv(rep: &ResidualReport) -> String {
    let mut csv = Csv::new(&["t", "x", "y", "lambda", "residual", "scale"]);
    for row in &rep.rows {
        csv.row(&[row.t, row.x, row.y, row.lambda, row.residual, row.scale]);
    }
    csv.into_string()
}

fn verify(engine: &Engine, v: &VerifyArgs) -> Result<Report, CliError> {
    let mut r = Report::default();
    let mut checks: Vec<(String, f64, f64)> = Vec::new();
    let rep = match engine {
        Engine::Jump(c) => {
            checks.push(("coefficient ODEs".into(), ode_residuals(c, 100, 1e-5)?.max(), RESIDUAL_TOL));
            let pde = pde_residuals(c, 10, 10)?;
            checks.push(("H equation".into(), pde.h, RESIDUAL_TOL));
            checks.push(("I equation".into(), pde.i, RESIDUAL_TOL));
            checks.push(("K equation".into(), pde.k, RESIDUAL_TOL));
            let seed = resolve_seed(v.seed)?;
            r.seed = Some(seed);
            let rep = hjbi_residual_report(c, &VerifyGrid::standard(c.t_end()), v.random, seed)?;
            checks.push(("HJBI (relative)".into(), rep.max_rel, RESIDUAL_TOL));
            if rep.n_random > 0 {
                checks.push(("random adversary, -min".into(), (-rep.min_rel_random_b).max(0.0), RESIDUAL_TOL));
                checks.push(("random insurer, max".into(), rep.max_rel_random_a.max(0.0), RESIDUAL_TOL));
            }
            rep
        }
        Engine::Diffusion(d) => {
            checks.push(("Riccati system".into(), riccati_residuals(d, 100, 1e-5)?.max(), RESIDUAL_TOL));
            let rep = diffusion_residual_report(d, &VerifyGrid::diffusion(d.params().t_end))?;
            checks.push(("HJBI (relative)".into(), rep.max_rel, RESIDUAL_TOL));
            rep
        }
    };
    r.messages.push(format!("{:<34} {:>12} {:>9}  status", "check", "value", "tol"));
    let mut failed = Vec::new();
    for (name, val, tol) in &checks {
        let ok = *val <= *tol;
        if !ok {
            failed.push(name.clone());
        }
        r.messages.push(format!("{name:<34} {val:>12.3e} {tol:>9.0e}  {}", status(ok)));
    }
    for (name, val) in &rep.negative_controls {
        let label = if *val >= POWER_TOL { "detected" } else { "weak" };
        r.messages.push(format!("{:<34} {val:>12.3e} {:>9}  {label}", format!("perturbed {name}"), format!(">={POWER_TOL:.0e}")));
    }
    r.messages.push(format!("worst grid point (t, x, y, lambda) = {:?}", rep.worst));
    r.outputs.add("residuals.csv", residuals_csv(&rep));
    if !failed.is_empty() {
        r.failure = Some(format!("verification failed: {}", failed.join(", ")));
    }
    Ok(r)
}

fn sensitivity(cli: &Cli, config: &Config, s: &SensitivityArgs) -> Result<Report, CliError> {
    if s.x_points < 1 || !(s.x_max >= s.x_min) {
        return Err(CliError::Usage("need --x-points >= 1 and --x-max >= --x-min".into()));
    }
    let xs: Vec<f64> = if s.x_points == 1 {
        vec![s.x_min]
    } else {
        (0..s.x_points).map(|i| s.x_min + (s.x_max - s.x_min) * i as f64 / (s.x_points - 1) as f64).collect()
    };
    let mut csv = Csv::new(&["param_value", "x", "u", "v"]);
    for &val in &s.values {
        let params = config.with_value(&s.param, val)?.to_params()?;
        check_times(&[s.t], params.t_end, "--t")?;
        let engine = Engine::build(cli.model, &params, cli.grid)?;
        for &x in &xs {
            let (a, _) = engine.controls_and_value(s.t, x, s.lambda)?;
            csv.row(&[val, x, a.u, a.v]);
        }
    }
    let mut r = Report::default();
    r.outputs.add(format!("sensitivity_{}.csv", s.param), csv.into_string());
    Ok(r)
}
