//! Batch driver: configure, run verification suites and iteration steps,
//! emit reports. Deterministic for a fixed (config, seed).

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use elastoflow::blocks::{make_profiles, BlockParams};
use elastoflow::exact::Rat;
use elastoflow::geometry;
use elastoflow::grid::GridSpec;
use elastoflow::iteration::{load_state, save_state, step, StepOptions};
use elastoflow::report::{fnv1a, Check, CheckKind, Provenance, VerificationReport};
use elastoflow::samples::single_mode_state;
use elastoflow::schedule::{LevelParams, ParameterSchedule};
use elastoflow::verifier;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "elastoflow", about = "Spectral convex-integration engine on the 3-torus")]
struct Cli {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// paper | desk
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Grid points per axis (power of two).
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Time samples on [0, T].
    #[arg(long, global = true)]
    time_steps: Option<usize>,

    /// Number of iteration steps for `step`.
    #[arg(long, global = true)]
    q_steps: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker cap for slice-parallel sections (this build runs sequentially;
    /// the cap is recorded in the provenance).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// strict | default
    #[arg(long, global = true)]
    tolerance_profile: Option<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Multiplier-operator identity suite on random band-limited fields.
    VerifyOperators,
    /// Exact-rational direction-family verification and γ reconstruction.
    VerifyGeometry,
    /// Oscillation-block identity suite at the configured level parameters.
    VerifyBlocks,
    /// Scaling-law sweeps; writes sweeps/*.csv and exponent fits.
    Sweep,
    /// Build the level-0 state from the configured data; writes a checkpoint.
    Init,
    /// Run q-steps of the iteration from the configured initial state.
    Step,
    /// Re-verify a checkpointed state and emit its report.
    Report {
        /// Checkpoint directory (defaults to <out>/checkpoints/q0000).
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

/// Flat key=value configuration with CLI overrides.
#[derive(Debug, Clone)]
struct RunConfig {
    grid_n: usize,
    time_steps: usize,
    t_end: f64,
    mode: String,
    theta: Rat,
    seed: u64,
    out: PathBuf,
    threads: usize,
    tolerance_profile: String,
    q_steps: usize,
    // initial data
    amp_v: f64,
    amp_f: f64,
    support: (f64, f64),
    // desk levels
    lambdas: Vec<u64>,
    sigmas: Vec<Rat>,
    rs: Vec<Rat>,
    mus: Vec<f64>,
    deltas: Vec<f64>,
    ells: Vec<f64>,
    mu_relax: f64,
    // paper-mode parameters
    paper_a: u64,
    paper_b: u32,
    paper_alpha: Rat,
    paper_beta: Rat,
    family_seed: u64,
    family_table: Option<PathBuf>,
    profile_bandwidth: usize,
}

fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        Ok(elastoflow::exact::rat(n.trim().parse()?, d.trim().parse()?))
    } else {
        Ok(elastoflow::exact::rat(s.parse()?, 1))
    }
}

impl RunConfig {
    fn defaults() -> Self {
        Self {
            grid_n: 32,
            time_steps: 33,
            t_end: 1.0,
            mode: "desk".into(),
            theta: elastoflow::exact::rat(1, 2),
            seed: 1,
            out: PathBuf::from("ef-out"),
            threads: 1,
            tolerance_profile: "default".into(),
            q_steps: 1,
            amp_v: 0.25,
            amp_f: 0.2,
            support: (0.42, 0.58),
            lambdas: vec![2, 4],
            sigmas: vec![elastoflow::exact::rat(1, 2), elastoflow::exact::rat(1, 4)],
            rs: vec![elastoflow::exact::rat(3, 4), elastoflow::exact::rat(1, 2)],
            mus: vec![1.5, 3.0],
            deltas: vec![0.4, 0.15],
            ells: vec![0.0, 0.0], // 0 → 4.5·dt at run time
            mu_relax: 0.5,
            paper_a: 100,
            paper_b: 1 << 14,
            paper_alpha: elastoflow::exact::rat(1, 16),
            paper_beta: elastoflow::exact::rat(1, 1i64 << 36),
            family_seed: 1,
            family_table: None,
            profile_bandwidth: 8,
        }
    }

    fn from_sources(cli: &Cli) -> Result<Self> {
        let mut cfg = Self::defaults();
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = &cli.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .with_context(|| format!("config line {} is not key=value", lineno + 1))?;
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| kv.get(k).cloned();
        if let Some(v) = get("grid_n") {
            cfg.grid_n = v.parse()?;
        }
        if let Some(v) = get("time_steps") {
            cfg.time_steps = v.parse()?;
        }
        if let Some(v) = get("t_end") {
            cfg.t_end = v.parse()?;
        }
        if let Some(v) = get("mode") {
            cfg.mode = v;
        }
        if let Some(v) = get("theta") {
            cfg.theta = parse_rat(&v)?;
        }
        if let Some(v) = get("seed") {
            cfg.seed = v.parse()?;
        }
        if let Some(v) = get("out") {
            cfg.out = PathBuf::from(v);
        }
        if let Some(v) = get("threads") {
            cfg.threads = v.parse()?;
        }
        if let Some(v) = get("tolerance_profile") {
            cfg.tolerance_profile = v;
        }
        if let Some(v) = get("q_steps") {
            cfg.q_steps = v.parse()?;
        }
        if let Some(v) = get("amp_v") {
            cfg.amp_v = v.parse()?;
        }
        if let Some(v) = get("amp_f") {
            cfg.amp_f = v.parse()?;
        }
        if let Some(v) = get("support_t0") {
            cfg.support.0 = v.parse()?;
        }
        if let Some(v) = get("support_t1") {
            cfg.support.1 = v.parse()?;
        }
        let list = |v: &str| -> Vec<String> {
            v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        };
        if let Some(v) = get("lambda") {
            cfg.lambdas = list(&v).iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>()?;
        }
        if let Some(v) = get("sigma") {
            cfg.sigmas = list(&v).iter().map(|s| parse_rat(s)).collect::<Result<_>>()?;
        }
        if let Some(v) = get("r") {
            cfg.rs = list(&v).iter().map(|s| parse_rat(s)).collect::<Result<_>>()?;
        }
        if let Some(v) = get("mu") {
            cfg.mus = list(&v).iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>()?;
        }
        if let Some(v) = get("delta") {
            cfg.deltas = list(&v).iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>()?;
        }
        if let Some(v) = get("ell") {
            cfg.ells = list(&v).iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>()?;
        }
        if let Some(v) = get("mu_relax") {
            cfg.mu_relax = v.parse()?;
        }
        if let Some(v) = get("paper_a") {
            cfg.paper_a = v.parse()?;
        }
        if let Some(v) = get("paper_b") {
            cfg.paper_b = v.parse()?;
        }
        if let Some(v) = get("paper_alpha") {
            cfg.paper_alpha = parse_rat(&v)?;
        }
        if let Some(v) = get("paper_beta") {
            cfg.paper_beta = parse_rat(&v)?;
        }
        if let Some(v) = get("family_seed") {
            cfg.family_seed = v.parse()?;
        }
        if let Some(v) = get("family_table") {
            cfg.family_table = Some(PathBuf::from(v));
        }
        if let Some(v) = get("profile_bandwidth") {
            cfg.profile_bandwidth = v.parse()?;
        }

        // CLI overrides
        if let Some(v) = &cli.mode {
            cfg.mode = v.clone();
        }
        if let Some(v) = cli.grid {
            cfg.grid_n = v;
        }
        if let Some(v) = cli.time_steps {
            cfg.time_steps = v;
        }
        if let Some(v) = cli.q_steps {
            cfg.q_steps = v;
        }
        if let Some(v) = &cli.out {
            cfg.out = v.clone();
        }
        if let Some(v) = cli.threads {
            cfg.threads = v;
        }
        if let Some(v) = cli.seed {
            cfg.seed = v;
        }
        if let Some(v) = &cli.tolerance_profile {
            cfg.tolerance_profile = v.clone();
        }
        Ok(cfg)
    }

    fn grid(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.grid_n, self.time_steps, self.t_end)?)
    }

    fn tolerances(&self) -> verifier::Tolerances {
        match self.tolerance_profile.as_str() {
            "strict" => verifier::Tolerances::strict(),
            _ => verifier::Tolerances::default(),
        }
    }

    fn family(&self) -> Result<geometry::DirectionFamily> {
        match &self.family_table {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Ok(geometry::import_table(&text)?)
            }
            None => Ok(geometry::build_families(self.family_seed)?),
        }
    }

    fn schedule(&self) -> Result<ParameterSchedule> {
        if self.mode == "paper" {
            return Ok(ParameterSchedule::paper(
                self.paper_a,
                self.paper_b,
                self.paper_alpha.clone(),
                self.paper_beta.clone(),
                self.theta.clone(),
            )?);
        }
        let fam = self.family()?;
        let grid = self.grid()?;
        let n = self.lambdas.len();
        if [self.sigmas.len(), self.rs.len(), self.mus.len(), self.deltas.len()]
            .iter()
            .any(|&l| l != n)
        {
            bail!("level parameter lists must have equal lengths");
        }
        let mut levels = Vec::new();
        for q in 0..n {
            let ell = match self.ells.get(q) {
                Some(&e) if e > 0.0 => e,
                _ => 4.5 * grid.dt(),
            };
            levels.push(LevelParams {
                block: BlockParams {
                    lambda: self.lambdas[q],
                    sigma: self.sigmas[q].clone(),
                    r: self.rs[q].clone(),
                    mu: self.mus[q],
                    n_lambda: fam.n_lambda,
                },
                delta: self.deltas[q],
                ell,
            });
        }
        Ok(ParameterSchedule::desk(self.theta.clone(), self.mu_relax, levels)?)
    }

    fn provenance(&self) -> Result<Provenance> {
        let fam = self.family()?;
        Ok(Provenance {
            grid_n: self.grid_n,
            grid_n_time: self.time_steps,
            t_end: self.t_end,
            family_hash: fnv1a(geometry::export_table(&fam).as_bytes()),
            schedule: format!(
                "mode={} θ={} λ={:?} threads={}",
                self.mode, self.theta, self.lambdas, self.threads
            ),
            seed: self.seed,
            tolerance_profile: self.tolerance_profile.clone(),
        })
    }
}

fn write_report(cfg: &RunConfig, report: &VerificationReport) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    let json = cfg.out.join("report.json");
    std::fs::write(&json, report.to_json())?;
    std::fs::write(cfg.out.join("report.csv"), report.to_csv())?;
    Ok(json)
}

fn finish(cfg: &RunConfig, mut report: VerificationReport) -> Result<()> {
    report.provenance = cfg.provenance()?;
    let path = write_report(cfg, &report)?;
    let failures = report.failures().len();
    for c in &report.checks {
        if !c.pass {
            eprintln!("FAIL {} = {:.6e} (target {:.6e} ± {:.1e})", c.name, c.value, c.target, c.tolerance);
        }
    }
    println!(
        "{} checks, {} failed → {}",
        report.checks.len(),
        failures,
        path.display()
    );
    if failures > 0 {
        std::process::exit(1);
    }
    Ok(())
}

fn cmd_verify_operators(cfg: &RunConfig) -> Result<()> {
    use elastoflow::field::{Rank, SpectralField};
    use elastoflow::operators as ops;
    let grid = GridSpec::new(cfg.grid_n, 2, 1.0)?;
    let mut report = VerificationReport::default();
    let mut worst_sym = 0.0f64;
    let mut worst_skew = 0.0f64;
    let mut worst_class = 0.0f64;
    let nsamples = 25;
    for s in 0..nsamples {
        let v = SpectralField::random(grid, Rank::Vector3, grid.band(), 0.8, cfg.seed + s).mean_zero();
        let r = ops::inv_div_sym(&v)?;
        let rel = ops::divergence_tensor(&r).sub(&v).l2_coeff_norm() / v.l2_coeff_norm();
        worst_sym = worst_sym.max(rel);
        worst_class = worst_class
            .max(r.symmetry_error() / r.to_grid().max_abs())
            .max(r.trace_error() / r.to_grid().max_abs());
        let f = ops::helmholtz(&v);
        let rf = ops::inv_div_skew(&f)?;
        let rel = ops::divergence_tensor(&rf).sub(&f).l2_coeff_norm() / f.l2_coeff_norm();
        worst_skew = worst_skew.max(rel);
        worst_class = worst_class.max(rf.skew_error() / rf.to_grid().max_abs());
    }
    report.push(Check::below("inv_div_sym_exactness", CheckKind::ExactIdentity, worst_sym, 1e-12));
    report.push(Check::below("inv_div_skew_exactness", CheckKind::ExactIdentity, worst_skew, 1e-12));
    report.push(Check::below("inv_div_output_classes", CheckKind::ExactIdentity, worst_class, 1e-12));

    // Parseval and round-trip
    let f = SpectralField::random(grid, Rank::Scalar, grid.band() / 2, 1.0, cfg.seed + 99);
    let pars = (f.norm_lp(2.0) - f.l2_coeff_norm()).abs() / f.l2_coeff_norm();
    report.push(Check::below("parseval", CheckKind::ExactIdentity, pars, 1e-12));
    let rt = f.to_grid().to_spectral().max_coeff_diff(&f) / f.max_coeff();
    report.push(Check::below("transform_roundtrip", CheckKind::ExactIdentity, rt, 1e-13));
    report.push(Check::below(
        "reality_on_grid",
        CheckKind::ExactIdentity,
        f.max_imag_on_grid() / f.max_coeff(),
        1e-13,
    ));
    finish(cfg, report)
}

fn cmd_verify_geometry(cfg: &RunConfig) -> Result<()> {
    let fam = cfg.family()?;
    let mut report = VerificationReport::default();
    let ok = geometry::verify_invariants(&fam).is_ok();
    report.push(Check {
        name: "family_invariants_exact".into(),
        kind: CheckKind::ExactIdentity,
        value: if ok { 1.0 } else { 0.0 },
        target: 1.0,
        tolerance: 0.0,
        pass: ok,
    });
    report.push(Check::info("eps_v", fam.eps_v));
    report.push(Check::info("eps_f", fam.eps_f));
    // reconstruction over sampled balls
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut d = [[0.0f64; 3]; 3];
        for a in 0..3 {
            for b in a..3 {
                let x: f64 = rng.gen_range(-1.0..1.0);
                d[a][b] = x;
                d[b][a] = x;
            }
        }
        let n = frob(&d);
        let s = rng.gen_range(0.0..0.999) * fam.eps_v / n;
        let mut r = [[0.0; 3], [0.0; 3], [0.0; 3]];
        for (a, row) in r.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = d[a][b] * s + if a == b { 1.0 } else { 0.0 };
            }
        }
        let rec = fam.reconstruct_sym(&r)?;
        for a in 0..3 {
            for b in 0..3 {
                worst = worst.max((rec[a][b] - r[a][b]).abs());
            }
        }
        let w: [f64; 3] =
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let wn = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        let s = rng.gen_range(0.0..0.999) * fam.eps_f / (2.0f64.sqrt() * wn);
        let sk = [
            [0.0, -w[2] * s, w[1] * s],
            [w[2] * s, 0.0, -w[0] * s],
            [-w[1] * s, w[0] * s, 0.0],
        ];
        for i in 0..3 {
            let rec = fam.reconstruct_skew(&sk, i)?;
            for a in 0..3 {
                for b in 0..3 {
                    worst = worst.max((rec[a][b] - sk[a][b]).abs());
                }
            }
        }
    }
    report.push(Check::below("reconstruction_sampled_balls", CheckKind::ExactIdentity, worst, 1e-12));
    let base_pos = fam.gamma_sym.base_f64().iter().all(|c| *c > 0.0)
        && fam.gamma_skew.iter().all(|g| g.base_f64().iter().all(|c| *c > 0.0));
    report.push(Check {
        name: "base_coefficients_strictly_positive".into(),
        kind: CheckKind::ExactIdentity,
        value: if base_pos { 1.0 } else { 0.0 },
        target: 1.0,
        tolerance: 0.0,
        pass: base_pos,
    });
    // export the table for reproducibility
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("family_table.txt"), geometry::export_table(&fam))?;
    finish(cfg, report)
}

fn rand_chacha(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn frob(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

fn cmd_verify_blocks(cfg: &RunConfig) -> Result<()> {
    use elastoflow::operators::gradient;
    let fam = cfg.family()?;
    let sched = cfg.schedule()?;
    let grid = cfg.grid()?;
    let profiles = make_profiles(cfg.profile_bandwidth)?;
    let level = sched.level(0)?;
    let mut report = VerificationReport::default();
    let mut worst_lap = 0.0f64;
    let mut worst_transport = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut sublattice_ok = true;
    let frames = elastoflow::iteration::amplitudes::frame_list(&fam);
    for (_, frame) in &frames {
        let blk = elastoflow::blocks::build_block(&profiles, frame, &level.block, &grid)?;
        let psi = blk.psi_xi1(&grid);
        let phi = blk.varphi_xi1(&grid);
        let lam_n2 = (level.block.lambda as f64 * fam.n_lambda as f64).powi(2);
        let lap = psi
            .differentiate([2, 0, 0])
            .add(&psi.differentiate([0, 2, 0]))
            .add(&psi.differentiate([0, 0, 2]))
            .scale(-1.0);
        worst_lap = worst_lap.max(lap.max_coeff_diff(&phi.scale(lam_n2)) / (lam_n2 * phi.max_coeff()));
        for jt in 0..3 {
            let t = grid.time_at(jt * (grid.n_time - 1) / 2);
            let ph = blk.phi_xi(&grid, t);
            let g = gradient(&ph);
            let mut xdg = elastoflow::field::SpectralField::zeros(grid, elastoflow::field::Rank::Scalar);
            for c in 0..3 {
                xdg.axpy(blk.xi[c], &g.component_field(c));
            }
            let dt_exact = blk.phi_xi_dt(&grid, t, 1).scale(1.0 / level.block.mu);
            worst_transport =
                worst_transport.max(xdg.max_coeff_diff(&dt_exact) / ph.max_coeff().max(1e-300));
            let sq = blk.pair_squared(&grid, t);
            worst_mass = worst_mass.max((sq.mean(0).re - 1.0).abs());
            sublattice_ok &= blk.on_sublattice(&blk.pair(&grid, t));
        }
    }
    report.push(Check::below("block_laplacian_potential", CheckKind::ExactIdentity, worst_lap, 1e-13));
    report.push(Check::below("block_transport_identity", CheckKind::ExactIdentity, worst_transport, 1e-12));
    report.push(Check::below("block_pair_l2_mass", CheckKind::ExactIdentity, worst_mass, 1e-10));
    report.push(Check {
        name: "block_sublattice_support".into(),
        kind: CheckKind::ExactIdentity,
        value: if sublattice_ok { 1.0 } else { 0.0 },
        target: 1.0,
        tolerance: 0.0,
        pass: sublattice_ok,
    });
    finish(cfg, report)
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let fam = cfg.family()?;
    let tol = cfg.tolerances();
    let suite_cfg = verifier::LemmaSuiteConfig::default();
    let checks = verifier::check_lemma_suite(&fam, &suite_cfg, &tol)?;

    // raw norm samples as CSV
    std::fs::create_dir_all(cfg.out.join("sweeps"))?;
    let profiles = make_profiles(suite_cfg.profiles_bandwidth)?;
    let mut csv = String::from("lambda,sigma,r,mu,M,N,p,phi_par,phi_perp,psi_perp\n");
    for den in &suite_cfg.r_denominators {
        for (m, n) in [(0u32, 0u32), (1, 0), (0, 1)] {
            for p in [1.0, 2.0] {
                let mut b = suite_cfg.base.clone();
                b.r = elastoflow::exact::rat(1, *den);
                let s = elastoflow::blocks::measure_block_norms(&profiles, &b, m, n, p, false)?;
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{:.8e},{:.8e},{:.8e}\n",
                    s.lambda, s.sigma, s.r, s.mu, s.m_ord, s.n_ord, s.p, s.phi_par, s.phi_perp, s.psi_perp
                ));
            }
        }
    }
    std::fs::write(cfg.out.join("sweeps/block_norms.csv"), csv)?;

    let mut report = VerificationReport::default();
    report.extend(checks);
    finish(cfg, report)
}

fn cmd_init(cfg: &RunConfig) -> Result<()> {
    let grid = cfg.grid()?;
    let opts = StepOptions::default();
    let state = single_mode_state(
        grid,
        cfg.amp_v,
        cfg.amp_f,
        cfg.support,
        to_f64(&cfg.theta),
        &opts,
    )?;
    let dir = cfg.out.join("checkpoints/q0000");
    save_state(&state, &dir)?;
    let mut report = VerificationReport::default();
    report.extend(verifier::residual_checks(&state, to_f64(&cfg.theta), &cfg.tolerances())?);
    report.push(Check::info("stress_l1_total", state.total_stress_l1()?));
    println!("checkpoint → {}", dir.display());
    finish(cfg, report)
}

fn to_f64(r: &Rat) -> f64 {
    elastoflow::exact::to_f64(r)
}

fn cmd_step(cfg: &RunConfig) -> Result<()> {
    let grid = cfg.grid()?;
    let sched = cfg.schedule()?;
    let fam = cfg.family()?;
    let profiles = make_profiles(cfg.profile_bandwidth)?;
    let theta = to_f64(&cfg.theta);
    let tol = cfg.tolerances();
    // disk-backed stresses above this grid size to bound memory
    let opts = StepOptions {
        stress_dir: if cfg.grid_n >= 64 { Some(cfg.out.join("scratch")) } else { None },
        skip_checks: false,
    };
    let mut state = single_mode_state(grid, cfg.amp_v, cfg.amp_f, cfg.support, theta, &opts)?;
    save_state(&state, &cfg.out.join("checkpoints/q0000"))?;

    let mut report = VerificationReport::default();
    report.extend(verifier::residual_checks(&state, theta, &tol)?);

    for q in 0..cfg.q_steps {
        let t0 = std::time::Instant::now();
        let (next, step_report) = step(&state, &sched, q, &fam, &profiles, &opts)?;
        println!(
            "step q{} → q{}: {:.1}s, stress {:.4e} → {:.4e}",
            q,
            q + 1,
            t0.elapsed().as_secs_f64(),
            state.total_stress_l1()?,
            next.total_stress_l1()?
        );
        for c in step_report.checks {
            report.push(Check {
                name: format!("q{}_{}", q + 1, c.name),
                ..c
            });
        }
        report.extend(
            verifier::inductive_report(&state, &next, &sched, sched.level(q)?, sched.levels.get(q + 1).map(|l| l.delta))?
                .into_iter()
                .map(|c| Check { name: format!("q{}_{}", q + 1, c.name), ..c })
                .collect(),
        );
        let resid = verifier::residual_checks(&next, theta, &tol)?;
        report.extend(
            resid
                .into_iter()
                .map(|c| Check { name: format!("q{}_{}", q + 1, c.name), ..c })
                .collect(),
        );
        save_state(&next, &cfg.out.join(format!("checkpoints/q{:04}", q + 1)))?;
        state = next;
    }
    finish(cfg, report)
}

fn cmd_report(cfg: &RunConfig, state_dir: Option<PathBuf>) -> Result<()> {
    let dir = state_dir.unwrap_or_else(|| cfg.out.join("checkpoints/q0000"));
    let state = load_state(&dir)?;
    let mut report = VerificationReport::default();
    report.extend(verifier::residual_checks(&state, to_f64(&cfg.theta), &cfg.tolerances())?);
    let (rv, ri) = state.stress_l1()?;
    report.push(Check::info("stress_l1_rv", rv));
    for (i, r) in ri.iter().enumerate() {
        report.push(Check::info(&format!("stress_l1_r{}", i + 1), *r));
    }
    finish(cfg, report)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = RunConfig::from_sources(&cli)?;
    match &cli.cmd {
        Cmd::VerifyOperators => cmd_verify_operators(&cfg),
        Cmd::VerifyGeometry => cmd_verify_geometry(&cfg),
        Cmd::VerifyBlocks => cmd_verify_blocks(&cfg),
        Cmd::Sweep => cmd_sweep(&cfg),
        Cmd::Init => cmd_init(&cfg),
        Cmd::Step => cmd_step(&cfg),
        Cmd::Report { state } => cmd_report(&cfg, state.clone()),
    }
}
