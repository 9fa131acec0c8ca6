//! Central-difference verification of analytic gradients.

use crate::params::{ParamId, ParamSet};
use ndarray::ArrayD;
use rand::Rng;
use trajmia_core::{seeding, Scalar};

/// Outcome of a finite-difference sweep.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub checked: usize,
    /// `(param name, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares `analytic` gradients against central differences of `loss` on
/// `n_coords` randomly selected parameter coordinates.
///
/// `loss` must be a pure function of the parameter values (fixed inputs,
/// fixed dropout masks). The relative error of a coordinate is
/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn check_gradients<F: Scalar>(
    params: &mut ParamSet<F>,
    mut loss: impl FnMut(&ParamSet<F>) -> F,
    analytic: &[(ParamId, ArrayD<F>)],
    n_coords: usize,
    step: f64,
    seed: u64,
) -> GradCheckReport {
    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for (id, grad) in analytic {
        for i in 0..grad.len() {
            coords.push((*id, i));
        }
    }
    assert!(!coords.is_empty(), "no analytic gradients to check");

    let mut rng = seeding::rng(seed, seeding::streams::GRAD_CHECK);
    let selected: Vec<(ParamId, usize)> = if coords.len() <= n_coords {
        coords
    } else {
        (0..n_coords).map(|_| coords[rng.random_range(0..coords.len())]).collect()
    };

    let h = F::of_f64(step);
    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut worst = None;

    for (id, flat_idx) in &selected {
        // Logical (row-major) order is used on both sides, so layout of the
        // gradient arrays does not matter.
        let a = analytic
            .iter()
            .find(|(p, _)| p == id)
            .map(|(_, g)| g.iter().nth(*flat_idx).copied().unwrap().as_f64())
            .expect("selected coordinate has analytic gradient");

        let original = {
            let v = params.value_mut(*id);
            let slice = v.as_slice_mut().expect("standard layout");
            let orig = slice[*flat_idx];
            slice[*flat_idx] = orig + h;
            orig
        };
        let loss_plus = loss(params).as_f64();
        {
            let v = params.value_mut(*id);
            v.as_slice_mut().unwrap()[*flat_idx] = original - h;
        }
        let loss_minus = loss(params).as_f64();
        {
            let v = params.value_mut(*id);
            v.as_slice_mut().unwrap()[*flat_idx] = original;
        }

        let numeric = (loss_plus - loss_minus) / (2.0 * step);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        sum_rel += rel;
        if rel > max_rel {
            max_rel = rel;
            worst = Some((params.name(*id).to_string(), *flat_idx, a, numeric));
        }
    }

    GradCheckReport {
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / selected.len() as f64,
        checked: selected.len(),
        worst,
    }
}
