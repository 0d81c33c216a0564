//! Space-time Friedrichs mollification of the state, with the commutator
//! stresses that keep the mollified system exact:
//!   R_comm^v = v_ℓ⊗̂v_ℓ − ΣF_ℓ^i⊗̂F_ℓ^i − M[v⊗̂v − ΣF^i⊗̂F^i],
//!   R_comm^i = F_ℓ^i⊗v_ℓ − v_ℓ⊗F_ℓ^i − M[F^i⊗v − v⊗F^i],
//!   p_ℓ = M[p] − ⅓|v_ℓ|² + ⅓Σ|F_ℓ^i|² + ⅓M[|v|² − Σ|F^i|²].

use super::{FieldStore, IterationState, StepOptions};
use crate::error::{Error, Result};
use crate::field::{pad, pw, Rank, SpectralField};
use crate::operators::{mollify_space, time_weights};
use crate::time_field::TimeSampledField;

pub struct MollifiedState {
    pub ell: f64,
    pub vl: TimeSampledField,
    /// Mollified deviations F_ℓ − Id; use `fl_slice` for the full columns.
    pub fl: [TimeSampledField; 3],
    pub rvl: FieldStore,
    pub ril: [FieldStore; 3],
    /// Deviation p_ℓ − 1; use `pl_slice` for the full pressure.
    pub pl: TimeSampledField,
    pub rcomm_v: FieldStore,
    pub rcomm_i: [FieldStore; 3],
}

impl MollifiedState {
    /// Full mollified column F_ℓ^i = Id-column + deviation.
    pub fn fl_slice(&self, i: usize, j: usize) -> SpectralField {
        let mut f = super::identity_column(self.vl.grid, i);
        if let Some(d) = self.fl[i].slice(j) {
            f = f.add(d);
        }
        f
    }

    /// Full mollified pressure p_ℓ = 1 + deviation.
    pub fn pl_slice(&self, j: usize) -> SpectralField {
        let mut f = SpectralField::zeros(self.vl.grid, crate::field::Rank::Scalar);
        let _ = f.set_coeff(0, [0, 0, 0], num_complex::Complex64::new(1.0, 0.0));
        if let Some(d) = self.pl.slice(j) {
            f = f.add(d);
        }
        f
    }

    /// Slices carrying any mollified content.
    pub fn active_flags(&self) -> Vec<bool> {
        let nt = self.vl.grid.n_time;
        (0..nt)
            .map(|j| {
                self.vl.active(j)
                    || self.rvl.active(j)
                    || self.fl.iter().any(|f| f.active(j))
                    || self.ril.iter().any(|r| r.active(j))
            })
            .collect()
    }

    /// Slices where any mollified stress lives (drives the temporal cutoff).
    pub fn stress_flags(&self) -> Vec<bool> {
        let nt = self.vl.grid.n_time;
        (0..nt)
            .map(|j| self.rvl.active(j) || self.ril.iter().any(|r| r.active(j)))
            .collect()
    }
}

/// Applies one space-time mollification pass to a slice window of a store.
fn mollify_store(
    src: &FieldStore,
    ell: f64,
    weights: &[f64],
    opts: &StepOptions,
    name: &str,
    level: u32,
) -> Result<FieldStore> {
    let grid = src.grid();
    let mut out = super::init::make_store(opts, name, src.rank(), grid, level)?;
    let half = (weights.len() as i64 - 1) / 2;
    let nt = grid.n_time as i64;
    // ring of spatially mollified slices for window reuse
    let mut ring: Vec<Option<Option<SpectralField>>> = vec![None; grid.n_time];
    let fetch = |ring: &mut Vec<Option<Option<SpectralField>>>, m: usize| -> Result<Option<SpectralField>> {
        if ring[m].is_none() {
            let s = src.slice(m)?.map(|s| mollify_space(&s, ell));
            ring[m] = Some(s);
        }
        Ok(ring[m].as_ref().unwrap().clone())
    };
    for j in 0..nt {
        let mut acc: Option<SpectralField> = None;
        for (mi, wm) in weights.iter().enumerate() {
            let srcj = j + mi as i64 - half;
            if srcj < 0 || srcj >= nt {
                continue;
            }
            if let Some(s) = fetch(&mut ring, srcj as usize)? {
                match acc.as_mut() {
                    Some(a) => a.axpy(*wm, &s),
                    None => acc = Some(s.scale(*wm)),
                }
            }
        }
        // evict ring entries that are no longer reachable
        let done = j - half;
        if done >= 0 {
            ring[done as usize] = None;
        }
        if let Some(a) = acc {
            out.set_slice(j as usize, a)?;
        }
    }
    Ok(out)
}

pub fn mollify_state(state: &IterationState, ell: f64, opts: &StepOptions) -> Result<MollifiedState> {
    let grid = state.grid();
    let dt = grid.dt();
    let weights = time_weights(ell, dt)?;
    let half = (weights.len() - 1) / 2;

    // supports must stay clear of the time boundary so that discrete
    // convolution and the one-sided FD closures never interact
    let supp = state.support()?;
    let margin = ell + 4.0 * dt;
    if !supp.is_empty() {
        let (a, b) = (supp.intervals[0].0, supp.intervals.last().unwrap().1);
        if a < margin || b > grid.t_end - margin {
            return Err(Error::StateInvariant(format!(
                "temporal support [{a:.3}, {b:.3}] too close to the boundary for ℓ = {ell}"
            )));
        }
    }

    let q = state.q;
    let vl_store = mollify_store(&FieldStore::mem(state.v.clone()), ell, &weights, &StepOptions::default(), "vl", q)?;
    let vl = match vl_store {
        FieldStore::Mem(f) => f,
        _ => unreachable!(),
    };
    // F is mollified through its deviation from the identity background so
    // that the zero-extension in time is exact
    let mut fl_vec = Vec::new();
    for (i, fi) in state.f.iter().enumerate() {
        let dev = TimeSampledField::from_slices(grid, fi.rank, |j, _| {
            match fi.slice(j) {
                Some(s) => s.sub(&super::identity_column(grid, i)),
                None => SpectralField::zeros(grid, fi.rank),
            }
        });
        let s = mollify_store(&FieldStore::mem(dev), ell, &weights, &StepOptions::default(), "fl", q)?;
        match s {
            FieldStore::Mem(f) => fl_vec.push(f),
            _ => unreachable!(),
        }
    }
    let fl: [TimeSampledField; 3] = fl_vec.try_into().map_err(|_| Error::Format("fl".into()))?;

    let rvl = mollify_store(&state.rv, ell, &weights, opts, "rvl", q)?;
    let ril = [
        mollify_store(&state.ri[0], ell, &weights, opts, "r1l", q)?,
        mollify_store(&state.ri[1], ell, &weights, opts, "r2l", q)?,
        mollify_store(&state.ri[2], ell, &weights, opts, "r3l", q)?,
    ];

    // commutator stresses and p_ℓ: stream the quadratic products through the
    // same mollifier
    let nt = grid.n_time;
    let mut rcomm_v = super::init::make_store(opts, "rcomm_v", Rank::Tensor3x3, grid, q)?;
    let mut rcomm_i = [
        super::init::make_store(opts, "rcomm_1", Rank::Tensor3x3, grid, q)?,
        super::init::make_store(opts, "rcomm_2", Rank::Tensor3x3, grid, q)?,
        super::init::make_store(opts, "rcomm_3", Rank::Tensor3x3, grid, q)?,
    ];
    let mut pl = TimeSampledField::zeros(grid, Rank::Scalar);

    // ring of per-slice, spatially mollified products of the *unmollified*
    // state, as deviations from their trivial-background values so that the
    // temporal zero-extension is exact:
    //   sym  = v⊗̂v − ΣF⊗̂F           (background 0),
    //   skew = F^i⊗v − v⊗F^i         (background 0),
    //   trd  = |v|² − Σ|F|² + 3      (background 0),
    //   pd   = p − 1                 (background 0).
    struct Prod {
        sym: SpectralField,
        skew: [SpectralField; 3],
        trd: SpectralField,
    }
    let mut ring: Vec<Option<Option<Prod>>> = (0..nt).map(|_| None).collect();
    let compute_prod = |j: usize| -> Result<Option<Prod>> {
        let v_on = state.v.active(j);
        let f_dynamic = (0..3).any(|i| {
            state.f[i].slice(j).map(|s| s.mean_zero().max_coeff() > 1e-14).unwrap_or(false)
        });
        if !v_on && !f_dynamic {
            return Ok(None);
        }
        let vj = state.v.slice_or_zero(j);
        let pv = pad(&vj);
        let mut sym = pw::traceless_tensor_product(&pv, &pv);
        let mut trd = pw::dot(&pv, &pv);
        let _ = trd.set_coeff(0, [0, 0, 0], trd.coeff(0, [0, 0, 0]) + num_complex::Complex64::new(3.0, 0.0));
        let mut skew = Vec::new();
        for i in 0..3 {
            let fj = state.f_slice(i, j);
            let pf = pad(&fj);
            sym = sym.sub(&pw::traceless_tensor_product(&pf, &pf));
            trd = trd.sub(&pw::dot(&pf, &pf));
            skew.push(pw::tensor_product(&pf, &pv).sub(&pw::tensor_product(&pv, &pf)));
        }
        let mut skew_m = Vec::new();
        for s in &skew {
            skew_m.push(mollify_space(s, ell));
        }
        Ok(Some(Prod {
            sym: mollify_space(&sym, ell),
            skew: skew_m.try_into().map_err(|_| Error::Format("skew".into())).unwrap(),
            trd: mollify_space(&trd, ell),
        }))
    };

    for j in 0..nt {
        // mollified slices of the products
        let mut macc_sym: Option<SpectralField> = None;
        let mut macc_skew: [Option<SpectralField>; 3] = [None, None, None];
        let mut macc_tr: Option<SpectralField> = None;
        let mut macc_p: Option<SpectralField> = None;
        for (mi, wm) in weights.iter().enumerate() {
            let srcj = j as i64 + mi as i64 - half as i64;
            if srcj < 0 || srcj >= nt as i64 {
                continue;
            }
            let sj = srcj as usize;
            if ring[sj].is_none() {
                ring[sj] = Some(compute_prod(sj)?);
            }
            if let Some(prod) = ring[sj].as_ref().unwrap() {
                let add = |acc: &mut Option<SpectralField>, f: &SpectralField| match acc.as_mut() {
                    Some(a) => a.axpy(*wm, f),
                    None => *acc = Some(f.scale(*wm)),
                };
                add(&mut macc_sym, &prod.sym);
                for i in 0..3 {
                    add(&mut macc_skew[i], &prod.skew[i]);
                }
                add(&mut macc_tr, &prod.trd);
            }
            // pressure deviation p − 1 (zero off the support)
            if let Some(ps) = state.p.slice(sj) {
                let mut dev = ps.clone();
                let m0 = dev.coeff(0, [0, 0, 0]);
                let _ = dev.set_coeff(0, [0, 0, 0], m0 - num_complex::Complex64::new(1.0, 0.0));
                if dev.max_coeff() > crate::time_field::SLICE_ZERO_TOL {
                    let sm = mollify_space(&dev, ell);
                    match macc_p.as_mut() {
                        Some(a) => a.axpy(*wm, &sm),
                        None => macc_p = Some(sm.scale(*wm)),
                    }
                }
            }
        }
        let done = j as i64 - half as i64;
        if done >= 0 {
            ring[done as usize] = None;
        }

        // mollified-field products at slice j (full F_ℓ = Id + deviation);
        // their deviation from the trivial background mirrors the ring
        let vlj = vl.slice_or_zero(j);
        let pvl = pad(&vlj);
        let mut sym_l = pw::traceless_tensor_product(&pvl, &pvl);
        let mut trd_l = pw::dot(&pvl, &pvl);
        let _ = trd_l.set_coeff(0, [0, 0, 0], trd_l.coeff(0, [0, 0, 0]) + num_complex::Complex64::new(3.0, 0.0));
        let mut skew_l = Vec::new();
        for i in 0..3 {
            let fj = {
                let mut f = super::identity_column(grid, i);
                if let Some(d) = fl[i].slice(j) {
                    f = f.add(d);
                }
                f
            };
            let pf = pad(&fj);
            sym_l = sym_l.sub(&pw::traceless_tensor_product(&pf, &pf));
            trd_l = trd_l.sub(&pw::dot(&pf, &pf));
            skew_l.push(pw::tensor_product(&pf, &pvl).sub(&pw::tensor_product(&pvl, &pf)));
        }

        if let Some(m) = macc_sym {
            rcomm_v.set_slice(j, sym_l.sub(&m))?;
        } else if sym_l.max_coeff() > crate::time_field::SLICE_ZERO_TOL {
            rcomm_v.set_slice(j, sym_l)?;
        }
        for i in 0..3 {
            let val = match macc_skew[i].take() {
                Some(m) => skew_l[i].sub(&m),
                None => skew_l[i].clone(),
            };
            rcomm_i[i].set_slice(j, val)?;
        }
        // p_ℓ − 1 = M[p−1] − ⅓(trd_ℓ) + ⅓M[trd], with trd the trace product
        // shifted by its background
        let mut plj = trd_l.scale(-1.0 / 3.0);
        if let Some(m) = macc_tr {
            plj.axpy(1.0 / 3.0, &m);
        }
        if let Some(mp) = macc_p {
            plj = plj.add(&mp);
        }
        pl.set_slice(j, plj);
    }

    Ok(MollifiedState { ell, vl, fl, rvl, ril, pl, rcomm_v, rcomm_i })
}
