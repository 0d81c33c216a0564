//! Verification reports: named checks with values, targets, tolerances and
//! pass flags, serializable to JSON and CSV.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckKind {
    ExactIdentity,
    MeasuredEstimate,
    ExponentFit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    /// Stable identifier of what is being checked.
    pub name: String,
    pub kind: CheckKind,
    /// Measured value (residual, ratio, exponent, ...).
    pub value: f64,
    /// Target the value is compared against.
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// value within tolerance of target (absolute).
    pub fn near(name: &str, kind: CheckKind, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            value,
            target,
            tolerance: tol,
            pass: (value - target).abs() <= tol && value.is_finite(),
        }
    }

    /// value ≤ tolerance (residual-style; target 0).
    pub fn below(name: &str, kind: CheckKind, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            value,
            target: 0.0,
            tolerance: tol,
            pass: value <= tol && value.is_finite(),
        }
    }

    /// Records a measured quantity without a pass/fail verdict.
    pub fn info(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            kind: CheckKind::MeasuredEstimate,
            value,
            target: f64::NAN,
            tolerance: f64::INFINITY,
            pass: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub grid_n: usize,
    pub grid_n_time: usize,
    pub t_end: f64,
    pub family_hash: String,
    pub schedule: String,
    pub seed: u64,
    pub tolerance_profile: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub provenance: Provenance,
}

impl VerificationReport {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, cs: Vec<Check>) {
        self.checks.extend(cs);
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Summary table, one line per check.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,kind,value,target,tolerance,pass\n");
        for c in &self.checks {
            s.push_str(&format!(
                "{},{:?},{:.6e},{:.6e},{:.3e},{}\n",
                c.name, c.kind, c.value, c.target, c.tolerance, c.pass
            ));
        }
        s
    }
}

/// 64-bit FNV-1a over bytes, for provenance hashes of family tables.
pub fn fnv1a(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
