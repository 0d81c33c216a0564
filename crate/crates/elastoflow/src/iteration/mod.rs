//! One full step of the main iteration: mollify the state, build amplitudes
//! from the mollified stresses, assemble the principal / incompressibility /
//! temporal perturbations, and produce the new fields together with every
//! stress piece. The discrete bookkeeping is arranged so that the updated
//! state satisfies the approximate system exactly (to rounding) under the same
//! 4th-order finite-difference time derivative the verifier applies.

pub mod amplitudes;
pub mod init;
pub mod mollify;
pub mod perturb;
pub mod stresses;

use crate::error::{Error, Result};
use crate::field::{Rank, SpectralField};
use crate::geometry::DirectionFamily;
use crate::grid::{GridSpec, TimeSupport};
use crate::report::Check;
use crate::schedule::ParameterSchedule;
use crate::snapshot;
use crate::time_field::TimeSampledField;
use std::path::PathBuf;

/// Tensor-valued time series, either in memory or slice files on disk.
/// Disk backing keeps the 64³ stress ladders out of RAM.
#[derive(Debug, Clone)]
pub enum FieldStore {
    Mem(TimeSampledField),
    Disk { dir: PathBuf, prefix: String, rank: Rank, grid: GridSpec, active: Vec<bool> },
}

impl FieldStore {
    pub fn mem(f: TimeSampledField) -> Self {
        FieldStore::Mem(f)
    }

    pub fn new_disk(dir: PathBuf, prefix: &str, rank: Rank, grid: GridSpec) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(FieldStore::Disk { dir, prefix: prefix.into(), rank, grid, active: vec![false; grid.n_time] })
    }

    pub fn grid(&self) -> GridSpec {
        match self {
            FieldStore::Mem(f) => f.grid,
            FieldStore::Disk { grid, .. } => *grid,
        }
    }

    pub fn rank(&self) -> Rank {
        match self {
            FieldStore::Mem(f) => f.rank,
            FieldStore::Disk { rank, .. } => *rank,
        }
    }

    pub fn active(&self, j: usize) -> bool {
        match self {
            FieldStore::Mem(f) => f.active(j),
            FieldStore::Disk { active, .. } => active[j],
        }
    }

    fn path(dir: &std::path::Path, prefix: &str, j: usize) -> PathBuf {
        dir.join(format!("{prefix}_{j:04}.bin"))
    }

    pub fn slice(&self, j: usize) -> Result<Option<SpectralField>> {
        match self {
            FieldStore::Mem(f) => Ok(f.slice(j).cloned()),
            FieldStore::Disk { dir, prefix, active, .. } => {
                if !active[j] {
                    return Ok(None);
                }
                let (f, _) = snapshot::read_snapshot(&Self::path(dir, prefix, j))?;
                Ok(Some(f))
            }
        }
    }

    pub fn set_slice(&mut self, j: usize, f: SpectralField) -> Result<()> {
        match self {
            FieldStore::Mem(ts) => {
                ts.set_slice(j, f);
                Ok(())
            }
            FieldStore::Disk { dir, prefix, active, .. } => {
                if f.max_coeff() <= crate::time_field::SLICE_ZERO_TOL {
                    active[j] = false;
                    return Ok(());
                }
                snapshot::write_snapshot(&Self::path(dir, prefix, j), &f, j as u32)?;
                active[j] = true;
                Ok(())
            }
        }
    }

    pub fn support(&self) -> TimeSupport {
        let g = self.grid();
        let flags: Vec<bool> = (0..g.n_time).map(|j| self.active(j)).collect();
        TimeSupport::from_flags(&flags, &g)
    }

    /// sup over time of a per-slice functional (zero slices skipped).
    pub fn sup_over_time(&self, f: impl Fn(&SpectralField) -> f64) -> Result<f64> {
        let g = self.grid();
        let mut m = 0.0f64;
        for j in 0..g.n_time {
            if let Some(s) = self.slice(j)? {
                m = m.max(f(&s));
            }
        }
        Ok(m)
    }

    pub fn norm_lp(&self, p: f64) -> Result<f64> {
        self.sup_over_time(|s| s.norm_lp(p))
    }
}

/// State of the approximate system at one level: velocity v, deformation
/// columns F¹..³, the symmetric trace-free stress R^v, the skew stresses
/// R¹..³, and the pressure.
///
/// Away from the temporal support the state sits at the trivial background
/// (v = 0, F = Id, R = 0, p = 1); absent F-slices mean the identity column
/// e_i and absent p-slices mean the constant 1. Use `f_slice` / `p_slice`
/// wherever the full fields are needed.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub q: u32,
    pub v: TimeSampledField,
    pub f: [TimeSampledField; 3],
    pub rv: FieldStore,
    pub ri: [FieldStore; 3],
    pub p: TimeSampledField,
}

/// The constant i-th identity column as a field.
pub fn identity_column(grid: GridSpec, i: usize) -> SpectralField {
    let mut f = SpectralField::zeros(grid, Rank::Vector3);
    let _ = f.set_coeff(i, [0, 0, 0], num_complex::Complex64::new(1.0, 0.0));
    f
}

/// Tolerances for the state class invariants.
pub const DIV_TOL: f64 = 1e-11;
pub const CLASS_TOL: f64 = 1e-12;

impl IterationState {
    pub fn grid(&self) -> GridSpec {
        self.v.grid
    }

    /// F^i at slice j, materializing the identity background when absent.
    pub fn f_slice(&self, i: usize, j: usize) -> SpectralField {
        match self.f[i].slice(j) {
            Some(s) => s.clone(),
            None => identity_column(self.grid(), i),
        }
    }

    /// F^i − other.F^i as a time series (background-aware on both sides).
    pub fn f_diff(&self, other: &IterationState, i: usize) -> TimeSampledField {
        let grid = self.grid();
        TimeSampledField::from_slices(grid, Rank::Vector3, |j, _| {
            match (self.f[i].slice(j), other.f[i].slice(j)) {
                (None, None) => SpectralField::zeros(grid, Rank::Vector3),
                _ => self.f_slice(i, j).sub(&other.f_slice(i, j)),
            }
        })
    }

    /// p at slice j, materializing the background constant 1 when absent.
    pub fn p_slice(&self, j: usize) -> SpectralField {
        match self.p.slice(j) {
            Some(s) => s.clone(),
            None => {
                let mut f = SpectralField::zeros(self.grid(), Rank::Scalar);
                let _ = f.set_coeff(0, [0, 0, 0], num_complex::Complex64::new(1.0, 0.0));
                f
            }
        }
    }

    /// Scale of the fields, for relative tolerances.
    fn field_scale(&self) -> f64 {
        let mut s = self.v.sup_over_time(|f| f.max_coeff());
        for fi in &self.f {
            s = s.max(fi.sup_over_time(|f| f.max_coeff()));
        }
        s.max(1.0)
    }

    /// div v = div F^i = 0; mean(v) = 0, mean(F^i) = e_i; R^v symmetric
    /// trace-free; R^i skew.
    pub fn validate(&self) -> Result<()> {
        let scale = self.field_scale();
        let nt = self.grid().n_time;
        for j in 0..nt {
            if let Some(s) = self.v.slice(j) {
                let d = crate::operators::divergence_vec(s).max_coeff();
                if d > DIV_TOL * scale {
                    return Err(Error::StateInvariant(format!("div v = {d:.2e} at slice {j}")));
                }
                for c in 0..3 {
                    if s.mean(c).norm() > 1e-11 * scale {
                        return Err(Error::StateInvariant("v has nonzero mean".into()));
                    }
                }
            }
            for (i, fi) in self.f.iter().enumerate() {
                if let Some(s) = fi.slice(j) {
                    let d = crate::operators::divergence_vec(s).max_coeff();
                    if d > DIV_TOL * scale {
                        return Err(Error::StateInvariant(format!(
                            "div F^{i} = {d:.2e} at slice {j}"
                        )));
                    }
                    for c in 0..3 {
                        let target = if c == i { 1.0 } else { 0.0 };
                        if (s.mean(c) - target).norm() > 1e-11 * scale {
                            return Err(Error::StateInvariant(format!(
                                "mean(F^{i}) differs from e_{i}"
                            )));
                        }
                    }
                }
            }
        }
        let rscale = self.rv.sup_over_time(|s| s.max_coeff())?.max(1e-300);
        self.rv.sup_over_time(|s| s.symmetry_error().max(s.trace_error()))
            .and_then(|e| {
                if e > CLASS_TOL * rscale.max(1.0) * 10.0 {
                    Err(Error::StateInvariant(format!("R^v class error {e:.2e}")))
                } else {
                    Ok(0.0)
                }
            })?;
        for (i, r) in self.ri.iter().enumerate() {
            let sc = r.sup_over_time(|s| s.max_coeff())?.max(1.0);
            let e = r.sup_over_time(|s| s.skew_error())?;
            if e > CLASS_TOL * sc * 10.0 {
                return Err(Error::StateInvariant(format!("R^{i} skew error {e:.2e}")));
            }
        }
        Ok(())
    }

    /// supp_t(v, F − Id, R^v, R^i): slices where any dynamic content lives.
    pub fn support(&self) -> Result<TimeSupport> {
        let g = self.grid();
        let mut flags = vec![false; g.n_time];
        for (j, flag) in flags.iter_mut().enumerate() {
            let mut on = self.v.active(j) || self.rv.active(j);
            for fi in &self.f {
                if let Some(s) = fi.slice(j) {
                    // F ≡ Id means only the constant mode; dynamic content is
                    // the mean-zero part
                    on |= s.mean_zero().max_coeff() > crate::time_field::SLICE_ZERO_TOL;
                }
            }
            for r in &self.ri {
                on |= r.active(j);
            }
            *flag = on;
        }
        Ok(TimeSupport::from_flags(&flags, &g))
    }

    /// ‖R^v‖_{L¹} and each ‖R^i‖_{L¹}.
    pub fn stress_l1(&self) -> Result<(f64, [f64; 3])> {
        let rv = self.rv.norm_lp(1.0)?;
        let mut ri = [0.0; 3];
        for (i, r) in self.ri.iter().enumerate() {
            ri[i] = r.norm_lp(1.0)?;
        }
        Ok((rv, ri))
    }

    pub fn total_stress_l1(&self) -> Result<f64> {
        let (rv, ri) = self.stress_l1()?;
        Ok(rv + ri.iter().sum::<f64>())
    }
}

/// Step configuration knobs.
#[derive(Debug, Clone, Default)]
pub struct StepOptions {
    /// Directory for disk-backed stress slices; None keeps them in memory.
    pub stress_dir: Option<PathBuf>,
    /// Skip the in-step exact-identity checks (they are cheap; default on).
    pub skip_checks: bool,
}

/// Measured output of one step.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub checks: Vec<Check>,
}

impl StepReport {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// One full iteration step q → q+1 at the given desk level.
pub fn step(
    state: &IterationState,
    sched: &ParameterSchedule,
    level_idx: usize,
    family: &DirectionFamily,
    profiles: &crate::blocks::ProfileSet,
    opts: &StepOptions,
) -> Result<(IterationState, StepReport)> {
    let grid = state.grid();
    let level = sched.level(level_idx)?;
    let dt = grid.dt();
    if level.ell < 4.0 * dt {
        return Err(Error::UnresolvableScale { scale: level.ell, min: 4.0 * dt });
    }
    let mut report = StepReport::default();

    // norms of the incoming stresses for the inductive record
    let (rv_l1, ri_l1) = state.stress_l1()?;
    report.push(Check::info("input_stress_l1_rv", rv_l1));
    for (i, r) in ri_l1.iter().enumerate() {
        report.push(Check::info(&format!("input_stress_l1_r{}", i + 1), *r));
    }

    // 1. mollify
    let mol = mollify::mollify_state(state, level.ell, opts)?;

    // 2. blocks for every frame at this level's parameters
    let blocks = amplitudes::build_level_blocks(family, profiles, &level.block, &grid)?;

    // 3. amplitude fields
    let amp = amplitudes::build_amplitudes(&mol, family, &blocks, level, &grid, &mut report)?;

    if !opts.skip_checks {
        amplitudes::check_cancellation(&mol, &amp, &blocks, family, &grid, &mut report)?;
    }

    // 4. perturbations
    let pert = perturb::build_perturbations(
        &amp,
        &blocks,
        family,
        &level.block,
        &grid,
        opts,
        state.q + 1,
        &mut report,
        !opts.skip_checks,
    )?;

    // 5. new fields and stresses
    let (state_prime, _) = stresses::assemble(
        state,
        &mol,
        &amp,
        &pert,
        &blocks,
        family,
        sched,
        level,
        opts,
        &mut report,
    )?;

    // iteration increments for the report
    let dv_l2 = state_prime.v.sub(&state.v).norm_lp(2.0);
    let dv_l1 = state_prime.v.sub(&state.v).norm_lp(1.0);
    let mut df_l2 = 0.0;
    let mut df_l1 = 0.0;
    for i in 0..3 {
        let d = state_prime.f_diff(state, i);
        df_l2 += d.norm_lp(2.0);
        df_l1 += d.norm_lp(1.0);
    }
    report.push(Check::info("increment_l2", dv_l2 + df_l2));
    report.push(Check::info("increment_l1", dv_l1 + df_l1));
    report.push(Check::info("increment_l2_vs_sqrt_delta", (dv_l2 + df_l2) / level.delta.sqrt()));
    let (rv1, ri1) = state_prime.stress_l1()?;
    report.push(Check::info("output_stress_l1_rv", rv1));
    for (i, r) in ri1.iter().enumerate() {
        report.push(Check::info(&format!("output_stress_l1_r{}", i + 1), *r));
    }
    let in_total = rv_l1 + ri_l1.iter().sum::<f64>();
    let out_total = rv1 + ri1.iter().sum::<f64>();
    report.push(Check::info("stress_ratio", out_total / in_total.max(1e-300)));

    // temporal support growth
    let in_supp = state.support()?;
    let out_supp = state_prime.support()?;
    let growth = support_growth(&in_supp, &out_supp);
    report.push(Check::info("support_growth", growth));

    Ok((state_prime, report))
}

/// Smallest ε with out ⊆ O_ε(in).
pub fn support_growth(input: &TimeSupport, output: &TimeSupport) -> f64 {
    if output.is_empty() {
        return 0.0;
    }
    if input.is_empty() {
        return f64::INFINITY;
    }
    let dist = |t: f64| -> f64 {
        input
            .intervals
            .iter()
            .map(|&(a, b)| {
                if t < a {
                    a - t
                } else if t > b {
                    t - b
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    output
        .intervals
        .iter()
        .map(|&(a, b)| dist(a).max(dist(b)))
        .fold(0.0, f64::max)
}

pub use init::init_state;

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct StateManifest {
    q: u32,
    grid_n: usize,
    n_time: usize,
    t_end: f64,
    fields: Vec<(String, Vec<bool>)>,
}

/// Writes the state as per-slice snapshots plus a JSON manifest.
pub fn save_state(state: &IterationState, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let grid = state.grid();
    let nt = grid.n_time;
    let mut fields: Vec<(String, Vec<bool>)> = Vec::new();
    let mut dump_ts = |name: &str, ts: &TimeSampledField| -> Result<()> {
        let mut active = vec![false; nt];
        for (j, a) in active.iter_mut().enumerate() {
            if let Some(s) = ts.slice(j) {
                snapshot::write_snapshot(&dir.join(format!("{name}_{j:04}.bin")), s, j as u32)?;
                *a = true;
            }
        }
        fields.push((name.to_string(), active));
        Ok(())
    };
    dump_ts("v", &state.v)?;
    for i in 0..3 {
        dump_ts(&format!("f{}", i + 1), &state.f[i])?;
    }
    dump_ts("p", &state.p)?;
    let mut dump_store = |name: &str, st: &FieldStore| -> Result<()> {
        let mut active = vec![false; nt];
        for (j, a) in active.iter_mut().enumerate() {
            if let Some(s) = st.slice(j)? {
                snapshot::write_snapshot(&dir.join(format!("{name}_{j:04}.bin")), &s, j as u32)?;
                *a = true;
            }
        }
        fields.push((name.to_string(), active));
        Ok(())
    };
    dump_store("rv", &state.rv)?;
    for i in 0..3 {
        dump_store(&format!("r{}", i + 1), &state.ri[i])?;
    }
    let manifest = StateManifest {
        q: state.q,
        grid_n: grid.n,
        n_time: nt,
        t_end: grid.t_end,
        fields,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap())?;
    Ok(())
}

/// Loads a checkpoint. Stress fields stay disk-backed (slices are read on
/// demand); the kinematic fields are materialized.
pub fn load_state(dir: &std::path::Path) -> Result<IterationState> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: StateManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    let grid = GridSpec::new(manifest.grid_n, manifest.n_time, manifest.t_end)?;
    let active_of = |name: &str| -> Result<Vec<bool>> {
        manifest
            .fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a.clone())
            .ok_or_else(|| Error::Format(format!("manifest missing field {name}")))
    };
    let load_ts = |name: &str, rank: Rank| -> Result<TimeSampledField> {
        let active = active_of(name)?;
        let mut ts = TimeSampledField::zeros(grid, rank);
        for (j, on) in active.iter().enumerate() {
            if *on {
                let (s, _) = snapshot::read_snapshot(&dir.join(format!("{name}_{j:04}.bin")))?;
                ts.set_slice(j, s);
            }
        }
        Ok(ts)
    };
    let mk_store = |name: &str| -> Result<FieldStore> {
        Ok(FieldStore::Disk {
            dir: dir.to_path_buf(),
            prefix: name.into(),
            rank: Rank::Tensor3x3,
            grid,
            active: active_of(name)?,
        })
    };
    Ok(IterationState {
        q: manifest.q,
        v: load_ts("v", Rank::Vector3)?,
        f: [
            load_ts("f1", Rank::Vector3)?,
            load_ts("f2", Rank::Vector3)?,
            load_ts("f3", Rank::Vector3)?,
        ],
        rv: mk_store("rv")?,
        ri: [mk_store("r1")?, mk_store("r2")?, mk_store("r3")?],
        p: load_ts("p", Rank::Scalar)?,
    })
}
