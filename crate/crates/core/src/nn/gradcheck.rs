//! Central finite-difference verification of backpropagated gradients.

use super::model::{Mode, NetworkModel};
use crate::error::Result;
use crate::rng::Rng64;

/// Outcome of [`gradient_check`]. An entry fails when both its relative
/// and its absolute error exceed the tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub checked: usize,
    pub failures: usize,
    pub worst_relative: f64,
    pub worst_absolute: f64,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Step and pass thresholds of [`gradient_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientTolerance {
    pub step: f64,
    pub relative: f64,
    pub absolute: f64,
}

impl Default for GradientTolerance {
    fn default() -> Self {
        Self {
            step: 1e-5,
            relative: 1e-4,
            absolute: 1e-7,
        }
    }
}

/// Compares every analytic partial derivative of the regularized loss with
/// `(L(theta + h) - L(theta - h)) / 2h` with `h = tol.step`. Dropout masks are replayed from
/// `mask_seed` so both sides see the same network.
pub fn gradient_check(
    model: &mut NetworkModel,
    batch: &[f64],
    labels: &[usize],
    lambda: f64,
    mask_seed: u64,
    tol: GradientTolerance,
) -> Result<GradientCheck> {
    let h = tol.step;
    let (_, grads) = model.loss_and_gradients(
        batch,
        labels,
        lambda,
        Mode::Train(&mut Rng64::new(mask_seed)),
    )?;
    let mut report = GradientCheck {
        checked: 0,
        failures: 0,
        worst_relative: 0.0,
        worst_absolute: 0.0,
    };
    for (t, g) in grads.iter().enumerate() {
        for (j, &analytic) in g.iter().enumerate() {
            let orig = model.parameters()[t][j];
            model.parameters_mut()[t][j] = orig + h;
            let up = model.loss(
                batch,
                labels,
                lambda,
                Mode::Train(&mut Rng64::new(mask_seed)),
            );
            model.parameters_mut()[t][j] = orig - h;
            let down = model.loss(
                batch,
                labels,
                lambda,
                Mode::Train(&mut Rng64::new(mask_seed)),
            );
            model.parameters_mut()[t][j] = orig;
            let numeric = (up? - down?) / (2.0 * h);
            let abs = (numeric - analytic).abs();
            let rel = abs / numeric.abs().max(analytic.abs()).max(f64::MIN_POSITIVE);
            report.checked += 1;
            if rel > tol.relative && abs > tol.absolute {
                report.failures += 1;
            }
            report.worst_absolute = report.worst_absolute.max(abs);
            if abs > tol.absolute {
                report.worst_relative = report.worst_relative.max(rel);
            }
        }
    }
    Ok(report)
}
