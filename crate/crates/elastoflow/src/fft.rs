//! Shared 3D FFT driver built on rustfft's 1D plans.
//!
//! Conventions: a field f(x) = Σ_k f̂_k e^{ik·x} is stored by its coefficients
//! f̂_k. `inverse` (no scaling) produces grid samples from packed coefficients;
//! `forward` divides by n³ so the two maps are mutually inverse.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans_for(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// In-place 3D transform over an n×n×n cube stored z-contiguous.
fn transform3(data: &mut [Complex64], n: usize, forward: bool) {
    debug_assert_eq!(data.len(), n * n * n);
    let plans = plans_for(n);
    let fft = if forward { &plans.forward } else { &plans.inverse };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];

    // z lines are contiguous
    for chunk in data.chunks_exact_mut(n) {
        fft.process_with_scratch(chunk, &mut scratch);
    }
    // y lines, stride n
    for ix in 0..n {
        for iz in 0..n {
            let base = ix * n * n + iz;
            for iy in 0..n {
                line[iy] = data[base + iy * n];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for iy in 0..n {
                data[base + iy * n] = line[iy];
            }
        }
    }
    // x lines, stride n²
    for iy in 0..n {
        for iz in 0..n {
            let base = iy * n + iz;
            for ix in 0..n {
                line[ix] = data[base + ix * n * n];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for ix in 0..n {
                data[base + ix * n * n] = line[ix];
            }
        }
    }
}

/// Coefficients (packed layout) → grid samples. No scaling.
pub fn coeffs_to_grid(data: &mut [Complex64], n: usize) {
    transform3(data, n, false);
}

/// Grid samples → coefficients (packed layout). Scales by 1/n³.
pub fn grid_to_coeffs(data: &mut [Complex64], n: usize) {
    transform3(data, n, true);
    let scale = 1.0 / (n * n * n) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}
