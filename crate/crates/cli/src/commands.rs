//! One function per subcommand. Everything written goes under the
//! configured output directory.

use std::path::Path;

use fracsteklov::eigen::{diagnostics, solve_first_p_with, solve_linear, EigenResult, InnerControl};
use fracsteklov::forms::{picone_defect, GagliardoForm};
use fracsteklov::harness::{
    bbm_limit_table, convergence_sweep, strip_limit_table, trace_constant, zero_infimum_demo, CheckTable,
};
use fracsteklov::kernel::{bbm_constant, KernelSpec};
use fracsteklov::mesh::DofFunction;
use fracsteklov::reference::{steklov_linear, ReferenceCache};
use fracsteklov::report::emit_report;
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{Command, ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] fracsteklov::Error),
    #[error("{0}")]
    Failed(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for anything wrong with the input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(fracsteklov::Error::Argument(_) | fracsteklov::Error::Domain(_)) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let command = cfg.command.ok_or_else(|| ConfigError::Invalid {
        field: "command",
        msg: "no command given in the config or on the command line".into(),
    })?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let start = std::time::Instant::now();
    let out = match command {
        Command::Constants => constants(cfg),
        Command::Verify => verify(cfg),
        Command::Solve => solve(cfg),
        Command::Sweep => sweep(cfg),
        Command::Ref => reference(cfg),
        Command::DemoZero => demo_zero(cfg),
        Command::Trace => trace(cfg),
    };
    info!("{command:?} finished in {:.3?}", start.elapsed());
    out
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    info!("wrote {}", path.display());
    Ok(())
}

fn report(table: &CheckTable, dir: &Path, stem: &str) -> Result<()> {
    let files = emit_report(table, &dir.join(stem))?;
    info!("wrote {} and {}", files.csv.display(), files.svg.display());
    Ok(())
}

fn constants(cfg: &RunConfig) -> Result<()> {
    let k = bbm_constant(cfg.n, cfg.p)?;
    println!("{k:?}");
    Ok(())
}

#[derive(Serialize)]
struct VerifySummary {
    seed: u64,
    identity_worst: f64,
    picone_min: f64,
    bbm_worst: f64,
    strip_worst_error: f64,
    passed: bool,
}

fn verify(cfg: &RunConfig) -> Result<()> {
    let policy = cfg.policy();
    let s = cfg.s;
    let eps = cfg.strip_width().min(0.5 * (cfg.b - cfg.a));
    let mesh = policy.mesh(Some(eps))?;
    let form = GagliardoForm::assemble(&mesh, &KernelSpec::one_d(s, cfg.p)?, &policy.quadrature)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        DofFunction::new(
            (0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..mesh.num_exterior()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    };
    let mut identity_worst = 0.0f64;
    for _ in 0..10 {
        let (u, v) = (draw(&mut rng), draw(&mut rng));
        let r = form.identity_check(&u, &v)?;
        identity_worst = identity_worst.max(r.divergence_residual.max(r.parts_residual) / r.scale);
    }
    let mut picone_min = f64::INFINITY;
    for _ in 0..1000 {
        let u: (f64, f64) = (rng.gen_range(0.01..2.0), rng.gen_range(0.01..2.0));
        let v = (rng.gen_range(0.01..2.0), rng.gen_range(0.01..2.0));
        picone_min = picone_min.min(picone_defect(u, v, cfg.p)? / (1.0 + (u.0 - u.1).abs().powf(cfg.p)));
    }
    let len = cfg.b - cfg.a;
    let bbm = bbm_limit_table(|x| x, cfg.p, &cfg.s_grid, &policy)?;
    let strip = strip_limit_table(|x| x, cfg.p, &[0.2 * len, 0.1 * len, 0.01 * len], &policy)?;
    report(&bbm, &cfg.output_dir, "verify_bbm")?;
    report(&strip, &cfg.output_dir, "verify_strip")?;
    // for u = x the Ω×Ω seminorm is K(1−s)·2(b−a)^{β+2}/((β+1)(β+2)), β = p−1−sp
    let k = bbm_constant(1, cfg.p)?;
    let bbm_worst = bbm
        .rows
        .iter()
        .map(|r| {
            let beta = cfg.p - 1.0 - r.param * cfg.p;
            let exact = k * (1.0 - r.param) * 2.0 * len.powf(beta + 2.0) / ((beta + 1.0) * (beta + 2.0));
            (r.value - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    // (1/ε)∫ over both strips of |x|^p, exactly (u = x is P1-exact)
    let q = cfg.p + 1.0;
    let anti = |x: f64| x.signum() * x.abs().powf(q) / q;
    let strip_worst_error = strip
        .rows
        .iter()
        .map(|r| {
            let e = r.param;
            let exact = (anti(cfg.a + e) - anti(cfg.a) + anti(cfg.b) - anti(cfg.b - e)) / e;
            (r.value - exact).abs()
        })
        .fold(0.0, f64::max);
    let tol = if cfg.p == 2.0 { 1e-12 } else { 1e-8 };
    let passed = identity_worst < tol && picone_min >= -1e-14 && bbm_worst < 1e-6 && strip_worst_error < 1e-10;
    println!("identity residual (relative): {identity_worst:.3e}");
    println!("picone minimum (scaled):      {picone_min:.3e}");
    println!("seminorm of x, worst rel err: {bbm_worst:.3e}");
    println!("strip limit, worst error:     {strip_worst_error:.3e}");
    let summary = VerifySummary { seed: cfg.seed, identity_worst, picone_min, bbm_worst, strip_worst_error, passed };
    write_json(&cfg.output_dir, "verify.json", &summary)?;
    if !passed {
        return Err(CliError::Failed("verification checks failed".into()));
    }
    Ok(())
}

fn solve(cfg: &RunConfig) -> Result<()> {
    let policy = cfg.policy();
    let eps = cfg.strip_width();
    let mesh = policy.mesh(Some(eps))?;
    if mesh.strip_cells(eps)?.covers_domain {
        println!("note: ε = {eps} is at least half the interval, so Ω_ε = Ω");
    }
    let form = GagliardoForm::assemble(&mesh, &KernelSpec::one_d(cfg.s, cfg.p)?, &policy.quadrature)?;
    let result: EigenResult = if cfg.p == 2.0 {
        solve_linear(&form, eps, 2)?.swap_remove(0)
    } else {
        let init = DofFunction::constant(&mesh, 1.0);
        solve_first_p_with(&form, eps, &init, 1e-12, 500, &InnerControl::default())?
    };
    let d = diagnostics(&result, &mesh);
    println!("lambda = {:.12}", result.lambda);
    println!("s = {}, eps = {eps:.6}, p = {}, nodes = {}", cfg.s, cfg.p, mesh.num_nodes());
    println!("residual = {:.3e}, iterations = {}", result.residual, result.iterations);
    println!("sign constant = {}, sup norm = {:.6}", d.sign_constant, d.sup_norm);
    if let Some(gap) = d.gap_to_next {
        println!("gap to next = {gap:.6}");
    }
    let path = cfg.output_dir.join("solve.json");
    std::fs::write(&path, result.to_json()? + "\n")?;
    info!("wrote {}", path.display());
    if !result.converged {
        return Err(CliError::Failed(format!("inverse iteration stopped after {} steps", result.iterations)));
    }
    Ok(())
}

fn sweep(cfg: &RunConfig) -> Result<()> {
    let outcome = convergence_sweep(cfg.p, &cfg.s_grid, &cfg.policy())?;
    for r in &outcome.records {
        println!("s = {:<5} lambda = {:.10}  rel err = {:.4e}", r.s, r.lambda, r.rel_err);
    }
    if !outcome.records.is_empty() {
        let stem = cfg.output_dir.join(format!("sweep_p{}", cfg.p));
        let files = emit_report(outcome.records.as_slice(), &stem)?;
        info!("wrote {} and {}", files.csv.display(), files.svg.display());
    }
    if !outcome.failures.is_empty() {
        for (s, e) in &outcome.failures {
            eprintln!("s = {s}: {e}");
        }
        return Err(CliError::Failed(format!("{} sweep point(s) failed", outcome.failures.len())));
    }
    Ok(())
}

fn reference(cfg: &RunConfig) -> Result<()> {
    let path = cfg.output_dir.join("references.json");
    let mut cache = ReferenceCache::load(&path)?;
    let length = cfg.b - cfg.a;
    let r = cache.get_or_compute(cfg.p, length)?;
    cache.save(&path)?;
    println!("lambda_1(p = {}) on an interval of length {length} = {:.12} ({:?})", cfg.p, r.lambda, r.method);
    if let Some(d) = r.discrepancy {
        println!("shooting discrepancy = {d:.3e}");
    }
    if cfg.p == 2.0 {
        let both = steklov_linear(length, 2)?;
        println!("lambda_2 = {:.12}", both[1]);
    }
    Ok(())
}

fn demo_zero(cfg: &RunConfig) -> Result<()> {
    let ks: Vec<u32> = (2..=cfg.k_max).collect();
    let table = zero_infimum_demo(&ks, cfg.s, cfg.p)?;
    for r in &table.rows {
        println!("k = {:<3} quotient = {:.6e}", r.param, r.value);
    }
    report(&table, &cfg.output_dir, "demo_zero")
}

fn trace(cfg: &RunConfig) -> Result<()> {
    let lambda = trace_constant(cfg.s, cfg.p, &cfg.policy())?;
    println!("Lambda_1(s = {}, p = {}) = {lambda:.12}", cfg.s, cfg.p);
    write_json(&cfg.output_dir, "trace.json", &serde_json::json!({ "s": cfg.s, "p": cfg.p, "lambda": lambda }))
}
