//! The five CLI commands. Each writes CSV files into an output directory
//! and returns a [`Report`] whose hard failures map to a nonzero exit code.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::Result;
use crate::grid::{deviation_envelope, PoissonGrid};
use crate::intensity::{lipschitz_audit, validate, IntensityFamily};
use crate::kernel::{default_v_grid, normalization_report, write_transition_csv, Kernel, TRANSITION_HEADER};
use crate::monte_carlo::{mc_cashflow, mc_reserve, z_score};
use crate::pi::{c_profile, tv_distance, Mode, STOCHASTIC_TOL};
use crate::quadrature::{trapezoid, uniform_grid};
use crate::valuation::{
    cashflow, cashflow_at_start, discounted_value, premium_solve, CashflowCurve, EngineSettings,
    PaymentSpec,
};

/// Slack on normalization defects beyond the truncation tail.
pub const DEFECT_SLACK: f64 = 1e-8;
/// Arithmetic slack for the per-level TV inequality.
pub const STEP_SLACK: f64 = 1e-12;
/// Bumped whenever a CSV layout changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Default, Clone)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
    pub hard_failures: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.hard_failures.is_empty()
    }

    fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    fn fail(&mut self, line: impl Into<String>) {
        self.hard_failures.push(line.into());
    }
}

/// One engine configuration: rate, mode and grid seed (conditional only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Run {
    pub gamma: f64,
    pub mode: Mode,
    pub seed: Option<u64>,
}

impl Run {
    pub fn tag(&self) -> String {
        match self.seed {
            Some(s) => format!("g{}_{}_seed{s}", self.gamma, self.mode),
            None => format!("g{}_{}", self.gamma, self.mode),
        }
    }

    pub fn settings(&self, cfg: &RunConfig) -> EngineSettings {
        cfg.engine_settings(self.gamma, self.mode, self.seed.unwrap_or(0))
    }

    fn seed_field(&self) -> String {
        self.seed.map(|s| s.to_string()).unwrap_or_default()
    }
}

/// Every `(gamma, mode, seed)` combination requested by the config. The
/// unconditional mode does not depend on a seed and runs once per rate.
pub fn runs(cfg: &RunConfig) -> Vec<Run> {
    let mut out = Vec::new();
    for &gamma in &cfg.engine.gamma {
        for mode in cfg.engine.mode.modes() {
            match mode {
                Mode::Unconditional => out.push(Run {
                    gamma,
                    mode,
                    seed: None,
                }),
                Mode::Conditional => out.extend(cfg.engine.seeds.iter().map(|&s| Run {
                    gamma,
                    mode,
                    seed: Some(s),
                })),
            }
        }
    }
    out
}

fn prepare(cfg: &RunConfig, out: &Path, report: &mut Report) -> Result<()> {
    fs::create_dir_all(out)?;
    let path = out.join("config_echo.toml");
    fs::write(&path, format!("# smj csv schema {CSV_SCHEMA_VERSION}\n{}", cfg.echo()))?;
    report.files.push(path);
    Ok(())
}

fn writer(out: &Path, name: &str, header: &[&str], report: &mut Report) -> Result<csv::Writer<fs::File>> {
    let path = out.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    report.files.push(path);
    Ok(w)
}

fn build_kernel(family: &dyn IntensityFamily, run: &Run, cfg: &RunConfig, horizon: f64) -> Result<Kernel> {
    match run.mode {
        Mode::Unconditional => Kernel::build(
            family,
            run.gamma,
            Mode::Unconditional,
            None,
            horizon,
            cfg.engine.tail_prob,
        ),
        Mode::Conditional => {
            let grid = PoissonGrid::sample(run.gamma, horizon, cfg.engine.tail_prob, run.seed.unwrap_or(0))?;
            Kernel::build(family, run.gamma, Mode::Conditional, Some(&grid), horizon, cfg.engine.tail_prob)
        }
    }
}

fn check_kernel(kernel: &Kernel, run: &Run, report: &mut Report) {
    let d = kernel.pi().max_mass_defect();
    if d > STOCHASTIC_TOL {
        report.fail(format!("{}: Pi row sums deviate from 1 by {d:e}", run.tag()));
    }
}

/// Transition measures at the configured times, one CSV per run.
pub fn cmd_transition(cfg: &RunConfig, out: &Path, dump_pi: bool) -> Result<Report> {
    let mut report = Report::default();
    prepare(cfg, out, &mut report)?;
    let family = cfg.family()?;
    let times = &cfg.engine.transition_times;
    let horizon = times.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for run in runs(cfg) {
        let kernel = build_kernel(family.as_ref(), &run, cfg, horizon)?;
        check_kernel(&kernel, &run, &mut report);
        let tag = run.tag();
        let mut w = writer(out, &format!("transition_{tag}.csv"), &TRANSITION_HEADER, &mut report)?;
        let mut nw = writer(
            out,
            &format!("normalization_{tag}.csv"),
            &["s", "i", "defect", "truncation_mass", "mode", "gamma", "seed"],
            &mut report,
        )?;
        let mut worst: f64 = 0.0;
        for &s in times {
            let m = kernel.transition_measure(s, &default_v_grid(s, cfg.engine.n_v))?;
            write_transition_csv(&mut w, &m, run.mode, run.gamma, run.seed)?;
            for (i, d) in normalization_report(&m).into_iter().enumerate() {
                nw.write_record([
                    s.to_string(),
                    (i + 1).to_string(),
                    d.to_string(),
                    m.truncation_mass.to_string(),
                    run.mode.to_string(),
                    run.gamma.to_string(),
                    run.seed_field(),
                ])?;
                worst = worst.max(d);
                if d > m.truncation_mass + DEFECT_SLACK {
                    report.fail(format!("{tag}: defect {d:e} at s = {s}, i = {}", i + 1));
                }
            }
        }
        w.flush()?;
        nw.flush()?;
        if dump_pi {
            dump_pi_table(&kernel, out, &tag, &mut report)?;
        }
        report.note(format!(
            "{tag}: {} levels, {} times, largest normalization defect {worst:e}",
            kernel.max_level(),
            times.len()
        ));
    }
    Ok(report)
}

fn dump_pi_table(kernel: &Kernel, out: &Path, tag: &str, report: &mut Report) -> Result<()> {
    let mut w = writer(out, &format!("pi_{tag}.csv"), &["k", "w", "i", "j", "value"], report)?;
    let n = kernel.dim();
    let pi = kernel.pi();
    for k in 0..=pi.max_level() {
        for wi in 0..=k {
            let b = pi.block(k, wi);
            for i in 0..n {
                for j in 0..n {
                    w.write_record([
                        k.to_string(),
                        wi.to_string(),
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        b[i * n + j].to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Engine cashflows for every initial state of one run. A nonzero initial
/// duration goes through the augmented family.
fn engine_cashflows(cfg: &RunConfig, run: &Run, payments: &PaymentSpec, report: &mut Report) -> Result<Vec<CashflowCurve>> {
    let family = cfg.family()?;
    let settings = run.settings(cfg);
    let horizon = payments.horizon();
    let u = cfg.model.initial_duration;
    if u == 0.0 {
        let kernel = build_kernel(family.as_ref(), run, cfg, horizon)?;
        check_kernel(&kernel, run, report);
        let grid = settings.s_grid(horizon);
        cfg.initial_states()
            .into_iter()
            .map(|i| cashflow(&kernel, payments, i, &grid, settings.n_v))
            .collect()
    } else {
        cfg.initial_states()
            .into_iter()
            .map(|i| {
                let mut c = cashflow_at_start(&family, payments, 0.0, i, u, &settings)?;
                c.i = i;
                Ok(c)
            })
            .collect()
    }
}

/// Expected cashflow curves, optionally compared against Monte Carlo.
pub fn cmd_cashflow(cfg: &RunConfig, out: &Path, with_mc: bool) -> Result<Report> {
    let mut report = Report::default();
    prepare(cfg, out, &mut report)?;
    let payments = cfg.payments()?;
    let u = cfg.model.initial_duration;
    let mut engine = Vec::new();
    for run in runs(cfg) {
        let curves = engine_cashflows(cfg, &run, &payments, &mut report)?;
        let tag = run.tag();
        let mut w = writer(
            out,
            &format!("cashflow_{tag}.csv"),
            &["s", "i", "c_value", "gamma", "mode", "seed"],
            &mut report,
        )?;
        for c in &curves {
            for (s, v) in c.s_grid.iter().zip(&c.values) {
                w.write_record([
                    s.to_string(),
                    (c.i + 1).to_string(),
                    v.to_string(),
                    run.gamma.to_string(),
                    run.mode.to_string(),
                    run.seed_field(),
                ])?;
            }
        }
        w.flush()?;
        if !payments.discrete().is_empty() {
            let mut dw = writer(
                out,
                &format!("cashflow_discrete_{tag}.csv"),
                &["time", "i", "value", "gamma", "mode", "seed"],
                &mut report,
            )?;
            for c in &curves {
                for p in &c.point_masses {
                    dw.write_record([
                        p.time.to_string(),
                        (c.i + 1).to_string(),
                        p.value.to_string(),
                        run.gamma.to_string(),
                        run.mode.to_string(),
                        run.seed_field(),
                    ])?;
                }
            }
            dw.flush()?;
        }
        report.note(format!("{tag}: {} cashflow curve(s)", curves.len()));
        engine.push((run, curves));
    }
    if with_mc {
        let family = cfg.family()?;
        let grid = engine[0].1[0].s_grid.clone();
        for &seed in &cfg.mc.seeds {
            let mut w = writer(
                out,
                &format!("mc_cashflow_seed{seed}.csv"),
                &["s", "i0", "mc_mean", "mc_se", "n_paths", "seed"],
                &mut report,
            )?;
            let mut mc = Vec::new();
            for i in cfg.initial_states() {
                let curve = mc_cashflow(family.as_ref(), &payments, i, u, cfg.mc.n_paths, &grid, seed)?;
                for a in 0..grid.len() {
                    w.write_record([
                        grid[a].to_string(),
                        (i + 1).to_string(),
                        curve.mean[a].to_string(),
                        curve.se[a].to_string(),
                        curve.n_paths.to_string(),
                        seed.to_string(),
                    ])?;
                }
                mc.push(curve);
            }
            w.flush()?;
            for (run, curves) in &engine {
                let mut cw = writer(
                    out,
                    &format!("compare_{}_mcseed{seed}.csv", run.tag()),
                    &["s", "i", "engine", "mc_mean", "mc_se", "z"],
                    &mut report,
                )?;
                let mut within = 0usize;
                let mut total = 0usize;
                for (c, m) in curves.iter().zip(&mc) {
                    for a in 0..grid.len() {
                        let z = z_score(c.values[a], m.mean[a], m.se[a]);
                        total += 1;
                        if z.abs() <= 3.0 {
                            within += 1;
                        }
                        cw.write_record([
                            grid[a].to_string(),
                            (c.i + 1).to_string(),
                            c.values[a].to_string(),
                            m.mean[a].to_string(),
                            m.se[a].to_string(),
                            z.to_string(),
                        ])?;
                    }
                }
                cw.flush()?;
                report.note(format!(
                    "{} vs mc seed {seed}: {within}/{total} grid points with |z| <= 3",
                    run.tag()
                ));
            }
        }
    }
    Ok(report)
}

/// Reserves at time 0, premium coefficients when a premium stream is
/// configured, and Monte Carlo reserves with `with_mc`.
pub fn cmd_reserve(cfg: &RunConfig, out: &Path, with_mc: bool) -> Result<Report> {
    let mut report = Report::default();
    prepare(cfg, out, &mut report)?;
    let payments = cfg.payments()?;
    let discount = cfg.discount()?;
    let premiums = cfg.premiums();
    let u = cfg.model.initial_duration;
    let mut w = writer(
        out,
        "reserve.csv",
        &["i", "u", "t", "V", "gamma", "mode", "seed"],
        &mut report,
    )?;
    let mut pw = match premiums {
        Some(_) => Some(writer(
            out,
            "premium.csv",
            &["i", "u", "coefficient", "gamma", "mode", "seed"],
            &mut report,
        )?),
        None => None,
    };
    for run in runs(cfg) {
        let curves = engine_cashflows(cfg, &run, &payments, &mut report)?;
        for c in &curves {
            let value = discounted_value(c, &discount, 0.0) + payments.initial_payment();
            w.write_record([
                (c.i + 1).to_string(),
                u.to_string(),
                "0".to_string(),
                value.to_string(),
                run.gamma.to_string(),
                run.mode.to_string(),
                run.seed_field(),
            ])?;
            report.note(format!("{}: V_{}(0) = {value}", run.tag(), c.i + 1));
        }
        if let (Some(prem), Some(pw)) = (&premiums, pw.as_mut()) {
            for i in cfg.initial_states() {
                let c = premium_solve(&payments, prem, |spec| {
                    let curves = engine_cashflows_for(cfg, &run, spec, i)?;
                    Ok(discounted_value(&curves, &discount, 0.0))
                })?;
                pw.write_record([
                    (i + 1).to_string(),
                    u.to_string(),
                    c.to_string(),
                    run.gamma.to_string(),
                    run.mode.to_string(),
                    run.seed_field(),
                ])?;
                report.note(format!("{}: premium coefficient for state {} = {c}", run.tag(), i + 1));
            }
        }
    }
    w.flush()?;
    if let Some(pw) = pw.as_mut() {
        pw.flush()?;
    }
    if with_mc {
        let family = cfg.family()?;
        let mut mw = writer(
            out,
            "mc_reserve.csv",
            &["i0", "u", "mc_mean", "mc_se", "n_paths", "seed"],
            &mut report,
        )?;
        for &seed in &cfg.mc.seeds {
            for i in cfg.initial_states() {
                let est = mc_reserve(family.as_ref(), &payments, &discount, i, u, cfg.mc.n_paths, seed)?;
                let mean = est.mean + payments.initial_payment();
                mw.write_record([
                    (i + 1).to_string(),
                    u.to_string(),
                    mean.to_string(),
                    est.se.to_string(),
                    est.n_paths.to_string(),
                    seed.to_string(),
                ])?;
                report.note(format!("mc seed {seed}: V_{}(0) = {mean} (se {})", i + 1, est.se));
            }
        }
        mw.flush()?;
    }
    Ok(report)
}

fn engine_cashflows_for(cfg: &RunConfig, run: &Run, payments: &PaymentSpec, i: usize) -> Result<CashflowCurve> {
    let family = cfg.family()?;
    let settings = run.settings(cfg);
    let u = cfg.model.initial_duration;
    if u == 0.0 {
        let kernel = build_kernel(family.as_ref(), run, cfg, payments.horizon())?;
        cashflow(&kernel, payments, i, &settings.s_grid(payments.horizon()), settings.n_v)
    } else {
        cashflow_at_start(&family, payments, 0.0, i, u, &settings)
    }
}

/// Per-seed diagnostics of the conditional against the unconditional
/// approximation at one rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub gamma: f64,
    pub seed: u64,
    pub levels_conditional: usize,
    pub levels_unconditional: usize,
    pub grid_deviation: f64,
    pub deviation_envelope: f64,
    pub c_index: usize,
    pub c_value: f64,
    /// `3 K dev / gamma`, when the family declares `K`.
    pub c_bound: Option<f64>,
    /// `min_k min_i (k C_k - TV_i(k))` over the full range of `w`.
    pub step_min_margin: f64,
    pub step_violations: usize,
    pub atom_tv: f64,
    pub density_tv: f64,
    pub tv_bound: f64,
    pub max_defect: f64,
    pub defect_allowance: f64,
}

impl ConvergenceRow {
    pub fn deviation_ok(&self) -> bool {
        self.grid_deviation <= self.deviation_envelope
    }

    pub fn c_ok(&self) -> bool {
        self.c_bound.is_none_or(|b| self.c_value <= b + STEP_SLACK)
    }

    pub fn atom_ok(&self) -> bool {
        self.atom_tv <= self.tv_bound
    }

    pub fn density_ok(&self) -> bool {
        self.density_tv <= self.tv_bound
    }

    pub fn defect_ok(&self) -> bool {
        self.max_defect <= self.defect_allowance
    }
}

/// `2 e^{1/2 + eps/2 + 2q}`.
pub fn alpha(epsilon: f64, q: f64) -> f64 {
    2.0 * (0.5 + epsilon / 2.0 + 2.0 * q).exp()
}

/// `(s + 1) alpha (log gamma) gamma^{-1/2 + eps/2}`.
pub fn tv_bound(s: f64, gamma: f64, epsilon: f64, q: f64) -> f64 {
    (s + 1.0) * alpha(epsilon, q) * gamma.ln() * gamma.powf(-0.5 + epsilon / 2.0)
}

/// Atom and integrated-density TV distances at `s`, maximised over the
/// initial state, plus the largest normalization defect of either kernel.
pub fn measure_distance(a: &Kernel, b: &Kernel, s: f64, n_v: usize) -> Result<(f64, f64, f64)> {
    let n = a.dim();
    let v_grid = default_v_grid(s, n_v);
    let mut atom_tv: f64 = 0.0;
    let mut density_tv: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for i in 0..n {
        let ra = a.row(s, i, &v_grid, false)?;
        let rb = b.row(s, i, &v_grid, false)?;
        atom_tv = atom_tv.max((ra.atom - rb.atom).abs());
        let y: Vec<f64> = ra
            .density
            .iter()
            .zip(&rb.density)
            .map(|(x, z)| x.iter().zip(z).map(|(p, q)| (p - q).abs()).sum())
            .collect();
        density_tv = density_tv.max(trapezoid(&v_grid, &y));
        defect = defect.max(ra.defect().abs()).max(rb.defect().abs());
    }
    Ok((atom_tv, density_tv, defect))
}

/// Diagnostics for one `(gamma, seed)`, using a shared unconditional kernel.
pub fn convergence_row(
    family: &dyn IntensityFamily,
    unconditional: &Kernel,
    seed: u64,
    s: f64,
    epsilon: f64,
    q: f64,
    tail_prob: f64,
    n_v: usize,
) -> Result<ConvergenceRow> {
    let gamma = unconditional.gamma();
    let horizon = unconditional.horizon();
    let grid = PoissonGrid::sample(gamma, horizon, tail_prob, seed)?;
    let conditional = Kernel::build(family, gamma, Mode::Conditional, Some(&grid), horizon, tail_prob)?;
    let dev = grid.deviation(epsilon);
    let profile = c_profile(conditional.steps(), unconditional.steps())?;
    let c_index = dev.used_index.min(profile.len() - 1);
    let c_value = profile[c_index];
    let c_bound = family.lipschitz().map(|k| 3.0 * k * dev.value / gamma);

    let top = conditional.max_level().min(unconditional.max_level());
    let mut step_min_margin = f64::INFINITY;
    let mut step_violations = 0;
    for k in 0..=top {
        let subset: Vec<usize> = (0..=k).collect();
        let tv = tv_distance(conditional.pi(), unconditional.pi(), k, &subset)?;
        let bound = k as f64 * profile[k.min(profile.len() - 1)];
        for &x in &tv {
            step_min_margin = step_min_margin.min(bound - x);
            if x > bound + STEP_SLACK {
                step_violations += 1;
            }
        }
    }
    let (atom_tv, density_tv, max_defect) = measure_distance(&conditional, unconditional, s, n_v)?;
    let allowance = conditional.truncation_mass(s).max(unconditional.truncation_mass(s)) + DEFECT_SLACK;
    Ok(ConvergenceRow {
        gamma,
        seed,
        levels_conditional: conditional.max_level(),
        levels_unconditional: unconditional.max_level(),
        grid_deviation: dev.value,
        deviation_envelope: deviation_envelope(gamma, epsilon, q),
        c_index,
        c_value,
        c_bound,
        step_min_margin,
        step_violations,
        atom_tv,
        density_tv,
        tv_bound: tv_bound(s, gamma, epsilon, q),
        max_defect,
        defect_allowance: allowance,
    })
}

const CONVERGENCE_HEADER: [&str; 20] = [
    "gamma",
    "seed",
    "levels_conditional",
    "levels_unconditional",
    "grid_deviation",
    "deviation_envelope",
    "deviation_ok",
    "c_index",
    "c_value",
    "c_bound",
    "c_ok",
    "step_min_margin",
    "step_violations",
    "atom_tv",
    "density_tv",
    "tv_bound",
    "atom_ok",
    "density_ok",
    "max_defect",
    "defect_ok",
];

/// Conditional against unconditional sweep over the configured rates and
/// grid seeds.
pub fn cmd_convergence(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mut report = Report::default();
    prepare(cfg, out, &mut report)?;
    let family = cfg.family()?;
    let s = cfg.convergence.time;
    let eps = cfg.engine.epsilon;
    let q = cfg.convergence.q;
    let mut w = writer(out, "convergence.csv", &CONVERGENCE_HEADER, &mut report)?;
    let mut sw = writer(
        out,
        "convergence_summary.csv",
        &[
            "gamma",
            "seeds",
            "mean_atom_tv",
            "mean_density_tv",
            "deviation_ok_fraction",
            "atom_ok_fraction",
            "density_ok_fraction",
            "step_violations",
        ],
        &mut report,
    )?;
    let mut means = Vec::new();
    for &gamma in &cfg.engine.gamma {
        let unconditional = Kernel::build(family.as_ref(), gamma, Mode::Unconditional, None, s, cfg.engine.tail_prob)?;
        let mut rows = Vec::new();
        for &seed in &cfg.engine.seeds {
            let r = convergence_row(
                family.as_ref(),
                &unconditional,
                seed,
                s,
                eps,
                q,
                cfg.engine.tail_prob,
                cfg.engine.n_v,
            )?;
            w.write_record([
                r.gamma.to_string(),
                r.seed.to_string(),
                r.levels_conditional.to_string(),
                r.levels_unconditional.to_string(),
                r.grid_deviation.to_string(),
                r.deviation_envelope.to_string(),
                r.deviation_ok().to_string(),
                r.c_index.to_string(),
                r.c_value.to_string(),
                r.c_bound.map(|b| b.to_string()).unwrap_or_default(),
                r.c_ok().to_string(),
                r.step_min_margin.to_string(),
                r.step_violations.to_string(),
                r.atom_tv.to_string(),
                r.density_tv.to_string(),
                r.tv_bound.to_string(),
                r.atom_ok().to_string(),
                r.density_ok().to_string(),
                r.max_defect.to_string(),
                r.defect_ok().to_string(),
            ])?;
            if r.step_violations > 0 {
                report.fail(format!("gamma {gamma}, seed {seed}: {} TV bound violations", r.step_violations));
            }
            if !r.c_ok() {
                report.fail(format!(
                    "gamma {gamma}, seed {seed}: C_{} = {} exceeds {}",
                    r.c_index,
                    r.c_value,
                    r.c_bound.unwrap_or(f64::NAN)
                ));
            }
            if !r.defect_ok() {
                report.fail(format!("gamma {gamma}, seed {seed}: normalization defect {:e}", r.max_defect));
            }
            rows.push(r);
        }
        let m = rows.len() as f64;
        let frac = |f: &dyn Fn(&ConvergenceRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / m;
        let mean_atom = rows.iter().map(|r| r.atom_tv).sum::<f64>() / m;
        let mean_density = rows.iter().map(|r| r.density_tv).sum::<f64>() / m;
        let violations: usize = rows.iter().map(|r| r.step_violations).sum();
        sw.write_record([
            gamma.to_string(),
            rows.len().to_string(),
            mean_atom.to_string(),
            mean_density.to_string(),
            frac(&|r| r.deviation_ok()).to_string(),
            frac(&|r| r.atom_ok()).to_string(),
            frac(&|r| r.density_ok()).to_string(),
            violations.to_string(),
        ])?;
        report.note(format!(
            "gamma {gamma}: mean atom TV {mean_atom:e}, mean density TV {mean_density:e}"
        ));
        means.push((gamma, mean_atom, mean_density));
    }
    w.flush()?;
    sw.flush()?;
    let mut sorted = means.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let decreasing = sorted
        .windows(2)
        .all(|p| p[1].1 <= p[0].1 && p[1].2 <= p[0].2);
    report.note(format!("TV distances decrease in gamma: {decreasing}"));
    Ok(report)
}

/// Samples the family on the validation grid, audits the declared
/// Lipschitz constant and checks the payment duration flag.
pub fn cmd_validate(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mut report = Report::default();
    prepare(cfg, out, &mut report)?;
    let family = cfg.base_family()?;
    let grid = cfg.validation_grid();
    let v = validate(family.as_ref(), &grid)?;
    let mut w = writer(out, "validation.csv", &["s", "v", "violation"], &mut report)?;
    for x in &v.violations {
        w.write_record([x.s.to_string(), x.v.to_string(), x.to_string()])?;
    }
    w.flush()?;
    report.note(format!(
        "{} points, inferred bound {} (gamma0 {}), {} violation(s)",
        v.points,
        v.inferred_bound,
        v.gamma0,
        v.violations.len()
    ));
    if !v.is_valid() {
        report.fail(format!("family violates {} condition(s); first: {}", v.violations.len(), v.violations[0]));
    }
    if family.lipschitz().is_some() {
        let (s_lo, s_hi, v_lo, v_hi) = grid.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |a, &(s, v)| (a.0.min(s), a.1.max(s), a.2.min(v), a.3.max(v)),
        );
        let pairs = cfg.model.validation.as_ref().map_or(10_000, |g| g.lipschitz_pairs);
        let audit = lipschitz_audit(family.as_ref(), (s_lo, s_hi), (v_lo, v_hi), pairs, 0)?;
        report.note(format!(
            "Lipschitz audit: constant {}, max observed ratio {}, {} violation(s) in {} pairs",
            audit.constant, audit.max_ratio, audit.violations, audit.pairs
        ));
        if audit.violations > 0 {
            report.fail(format!("declared Lipschitz constant {} violated", audit.constant));
        }
    }
    let payments = cfg.payments()?;
    if payments.is_duration_independent() {
        let t = payments.horizon();
        let dep = payments.duration_dependence(&uniform_grid(0.0, t, 20), &uniform_grid(0.0, t, 20));
        if dep > 1e-12 {
            report.fail(format!("payments are flagged duration-independent but vary by {dep} with duration"));
        }
    }
    Ok(report)
}
