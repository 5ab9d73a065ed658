//! Acceptance criteria 1 to 8. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smj::commands::{alpha, cmd_convergence, convergence_row};
use smj::config::RunConfig;
use smj::grid::PoissonGrid;
use smj::intensity::{augment, ConstantFamily, DisabilityFamily, FamilyRef, Shifted};
use smj::kernel::Kernel;
use smj::linalg::Mat;
use smj::monte_carlo::{mc_cashflow, z_score};
use smj::pi::{c_profile, tv_distance, Mode};
use smj::quadrature::adaptive_simpson;
use smj::special::{erlang_pdf, poisson_pmf};
use smj::valuation::{cashflow, cashflow_at_start, CashflowCurve};

const TAIL_PROB: f64 = 1e-10;
const DEFECT_SLACK: f64 = 1e-8;
const MARKOV_TOL_30: f64 = 5e-3;
const MARKOV_TOL_100: f64 = 2e-3;
const Z_MAX: f64 = 3.0;
const Z_FRACTION: f64 = 0.95;
const MC_PATHS: usize = 100_000;
const GAMMA_GAP: f64 = 0.05;
const TV_SLACK: f64 = 1e-12;
const STAT_FRACTION: f64 = 0.95;
const IDENTITY_TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&configs_dir().join(name)).expect("shipped config loads")
}

fn disability_at_40() -> FamilyRef {
    Arc::new(Shifted::new(Arc::new(DisabilityFamily::shipped()), 40.0))
}

fn kernel(family: &FamilyRef, gamma: f64, mode: Mode, seed: u64, horizon: f64) -> Kernel {
    match mode {
        Mode::Unconditional => Kernel::build(family.as_ref(), gamma, mode, None, horizon, TAIL_PROB).unwrap(),
        Mode::Conditional => {
            let grid = PoissonGrid::sample(gamma, horizon, TAIL_PROB, seed).unwrap();
            Kernel::build(family.as_ref(), gamma, mode, Some(&grid), horizon, TAIL_PROB).unwrap()
        }
    }
}

fn normalization() -> Outcome {
    let mut paths: Vec<PathBuf> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    let mut checks = 0usize;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for path in &paths {
        let cfg = RunConfig::load(path).unwrap();
        let base = cfg.family().unwrap();
        let u = cfg.model.initial_duration;
        let family: FamilyRef = if u > 0.0 { Arc::new(augment(base, 0.0, u).unwrap()) } else { base };
        let horizon = cfg.payments.horizon;
        for gamma in [10.0, 30.0, 100.0] {
            let mut runs = vec![(Mode::Unconditional, 0)];
            runs.extend((1..=5).map(|s| (Mode::Conditional, s)));
            for (mode, seed) in runs {
                let k = kernel(&family, gamma, mode, seed, horizon);
                for q in 1..=10 {
                    let s = horizon * q as f64 / 10.0;
                    for i in 0..k.dim() {
                        let d = k.row(s, i, &[], false).unwrap().defect().abs();
                        checks += 1;
                        worst = worst.max(d);
                        if d > TAIL_PROB + DEFECT_SLACK {
                            failures.push(format!("{} gamma {gamma} {mode} seed {seed} s {s} i {}: {d:e}", path.display(), i + 1));
                        }
                    }
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{checks} defects over {} configs, worst {worst:.3e} (limit {:.3e}){}",
            paths.len(),
            TAIL_PROB + DEFECT_SLACK,
            failures.first().map(|f| format!("; first failure {f}")).unwrap_or_default()
        ),
    }
}

fn markov_oracle() -> Outcome {
    let f: FamilyRef = Arc::new(ConstantFamily::new(Mat::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]])).unwrap());
    let exact = 1.0 - (-1.0f64).exp();
    let errors: Vec<f64> = [10.0, 30.0, 100.0]
        .iter()
        .map(|&g| {
            let k = kernel(&f, g, Mode::Unconditional, 0, 1.0);
            let row = k.row(1.0, 0, &[], false).unwrap();
            (row.integrated[1] - exact).abs()
        })
        .collect();
    let within = errors[1] <= MARKOV_TOL_30 && errors[2] <= MARKOV_TOL_100;
    let decreasing = errors[0] > errors[1] && errors[1] > errors[2];
    Outcome {
        pass: within && decreasing,
        detail: format!(
            "|error| at gamma 10/30/100 = {:.3e}/{:.3e}/{:.3e}; tolerances {}; strictly decreasing {}",
            errors[0],
            errors[1],
            errors[2],
            if within { "met" } else { "missed" },
            decreasing
        ),
    }
}

fn z_fraction(engine: &CashflowCurve, mc: &smj::monte_carlo::McCurve) -> (usize, usize) {
    let within = engine
        .values
        .iter()
        .zip(mc.mean.iter().zip(&mc.se))
        .filter(|(c, (m, se))| z_score(**c, **m, **se).abs() <= Z_MAX)
        .count();
    (within, engine.values.len())
}

fn monte_carlo_parity() -> Outcome {
    let t = Instant::now();
    let cfg = load("disability_duration_independent.toml");
    let family = cfg.family().unwrap();
    let pay = cfg.payments().unwrap();
    let settings = cfg.engine_settings(30.0, Mode::Unconditional, 0);
    let horizon = pay.horizon();
    let grid = settings.s_grid(horizon);
    let i = cfg.initial_states()[0];
    let k = kernel(&family, 30.0, Mode::Unconditional, 0, horizon);
    let engine = cashflow(&k, &pay, i, &grid, settings.n_v).unwrap();
    let mc = mc_cashflow(family.as_ref(), &pay, i, 0.0, MC_PATHS, &grid, cfg.mc.seeds[0]).unwrap();
    let (within, total) = z_fraction(&engine, &mc);
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: total == 50 && within as f64 >= Z_FRACTION * total as f64 && secs <= 600.0,
        detail: format!("{within}/{total} points with |z| <= {Z_MAX}, {MC_PATHS} paths, {secs:.1} s"),
    }
}

fn duration_dependent() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["disability_duration_dependent_u0.toml", "disability_duration_dependent_u1.toml"] {
        let cfg = load(name);
        let family = cfg.family().unwrap();
        let pay = cfg.payments().unwrap();
        let u = cfg.model.initial_duration;
        let i = cfg.initial_states()[0];
        let curves: Vec<CashflowCurve> = [30.0, 100.0]
            .iter()
            .map(|&g| {
                let settings = cfg.engine_settings(g, Mode::Unconditional, 0);
                cashflow_at_start(&family, &pay, 0.0, i, u, &settings).unwrap()
            })
            .collect();
        let finite = curves.iter().all(|c| c.values.iter().all(|x| x.is_finite()));
        let sup = curves[1].values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let gap = curves[0]
            .values
            .iter()
            .zip(&curves[1].values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / sup;
        let mc = mc_cashflow(family.as_ref(), &pay, i, u, MC_PATHS, &curves[0].s_grid, cfg.mc.seeds[0]).unwrap();
        let (within, total) = z_fraction(&curves[0], &mc);
        let ok = finite && gap <= GAMMA_GAP && within as f64 >= Z_FRACTION * total as f64;
        pass &= ok;
        parts.push(format!("u={u}: finite {finite}, |z| <= {Z_MAX} on {within}/{total}, gamma 30/100 gap {:.2}%", 100.0 * gap));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn pi_distance_bound() -> Outcome {
    let family = disability_at_40();
    let gamma = 30.0;
    let horizon = 5.0;
    let unc = kernel(&family, gamma, Mode::Unconditional, 0, horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..20 {
        let seed: u64 = rng.gen_range(0..1_000_000);
        let k: usize = rng.gen_range(1..=150);
        let mut subset: Vec<usize> = (0..=k).collect();
        subset.shuffle(&mut rng);
        subset.truncate(rng.gen_range(1..=k + 1));
        let con = kernel(&family, gamma, Mode::Conditional, seed, horizon);
        let profile = c_profile(con.steps(), unc.steps()).unwrap();
        let tv = tv_distance(con.pi(), unc.pi(), k, &subset).unwrap();
        let bound = k as f64 * profile[k];
        for x in tv {
            worst = worst.min(bound - x);
            if x > bound + TV_SLACK {
                violations += 1;
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("20 (seed, k, subset) triples, {violations} violations, smallest margin {worst:.3e}"),
    }
}

fn statistical_bound() -> Outcome {
    let family = disability_at_40();
    let (s, eps, q) = (2.0, 0.1, 2.0);
    let n_v = 100;
    let mut pass = true;
    let mut parts = Vec::new();
    for gamma in [30.0, 100.0, 300.0] {
        let unc = Kernel::build(family.as_ref(), gamma, Mode::Unconditional, None, s, TAIL_PROB).unwrap();
        let rows: Vec<_> = (0..100u64)
            .map(|seed| convergence_row(family.as_ref(), &unc, seed, s, eps, q, TAIL_PROB, n_v).unwrap())
            .collect();
        let ok = rows.iter().filter(|r| r.atom_ok() && r.density_ok()).count();
        let worst = rows.iter().map(|r| r.atom_tv.max(r.density_tv)).fold(0.0, f64::max);
        pass &= ok as f64 >= STAT_FRACTION * rows.len() as f64;
        parts.push(format!("gamma {gamma}: {ok}/100 below {:.3e} (worst TV {worst:.3e})", rows[0].tv_bound));
    }
    Outcome {
        pass,
        detail: format!("alpha {:.4}; {}", alpha(eps, q), parts.join("; ")),
    }
}

fn convolution_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let l: i64 = rng.gen_range(1..=80);
        let w: i64 = rng.gen_range(0..l);
        let gamma: f64 = rng.gen_range(0.5..60.0);
        let s: f64 = rng.gen_range(0.05..4.0);
        let f = |v: f64| erlang_pdf(l - w, gamma, s - v).unwrap() * poisson_pmf(gamma * v, w).unwrap();
        let quad = adaptive_simpson(f, 0.0, s, 1e-13);
        worst = worst.max((quad - poisson_pmf(gamma * s, l).unwrap()).abs());
    }
    Outcome {
        pass: worst <= IDENTITY_TOL,
        detail: format!("50 random (l, w, gamma, s), worst quadrature error {worst:.3e}"),
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let mut cfg = load("disability_duration_independent.toml");
    cfg.engine.gamma = vec![10.0, 30.0];
    cfg.engine.seeds = vec![1, 2, 3];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_convergence(&cfg, a.path()).unwrap();
    cmd_convergence(&cfg, b.path()).unwrap();
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    let identical = fa == fb;
    Outcome {
        pass: identical && !fa.is_empty(),
        detail: format!("{} files, byte-identical {identical}", fa.len()),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("normalization", normalization),
        ("analytic Markov oracle", markov_oracle),
        ("Monte Carlo parity", monte_carlo_parity),
        ("duration-dependent payments", duration_dependent),
        ("Pi distance bound", pi_distance_bound),
        ("statistical TV bound", statistical_bound),
        ("Erlang-Poisson identity", convolution_identity),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        println!(
            "{} criterion {} ({name}): {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            n + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
