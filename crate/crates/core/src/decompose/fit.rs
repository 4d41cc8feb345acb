//! Bounded Levenberg–Marquardt fit of one superquadric to SDF samples.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::{DecomposeError, FitBounds};
use crate::geometry::{Pose, Vec3};
use crate::sdfgrid::SdfGrid;
use crate::superquadric::Superquadric;

const N: usize = 11;
type Params = SVector<f64, N>;

/// One SDF sample: voxel center, grid value and base weight.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub point: Vec3,
    pub value: f64,
    pub weight: f64,
}

/// Weight falloff, in voxels, away from the surface. Distance approximations
/// degrade with depth inside thin parts, so near-surface voxels dominate.
const WEIGHT_FALLOFF_VOXELS: f64 = 2.0;

pub(crate) fn samples_from(grid: &SdfGrid, voxels: &[usize]) -> Vec<Sample> {
    let falloff = WEIGHT_FALLOFF_VOXELS * grid.spacing();
    voxels
        .iter()
        .map(|&i| {
            let value = grid.value(i);
            Sample {
                point: grid.center(i),
                value,
                weight: (-value.abs() / falloff).exp(),
            }
        })
        .collect()
}

/// Parameter vector `[ax, ay, az, e1, e2, tx, ty, tz, wx, wy, wz]`, where the
/// rotation is `exp([w]) · base`.
#[derive(Debug, Clone, Copy)]
struct State {
    x: Params,
    base: Matrix3<f64>,
}

impl State {
    fn from_sq(sq: &Superquadric) -> Self {
        let mut x = Params::zeros();
        x[0] = sq.axes.x;
        x[1] = sq.axes.y;
        x[2] = sq.axes.z;
        x[3] = sq.eps1;
        x[4] = sq.eps2;
        x[5] = sq.pose.translation.x;
        x[6] = sq.pose.translation.y;
        x[7] = sq.pose.translation.z;
        Self {
            x,
            base: sq.pose.rotation,
        }
    }

    fn rotation(&self, x: &Params) -> Matrix3<f64> {
        let w = Vector3::new(x[8], x[9], x[10]);
        nalgebra::Rotation3::new(w).into_inner() * self.base
    }

    fn superquadric(&self, x: &Params) -> Superquadric {
        let r = orthonormalize(&self.rotation(x));
        Superquadric {
            axes: Vec3::new(x[0], x[1], x[2]),
            eps1: x[3],
            eps2: x[4],
            pose: Pose {
                rotation: r,
                translation: Vec3::new(x[5], x[6], x[7]),
            },
        }
    }

    /// Folds the rotation increment into the base rotation.
    fn rebase(&mut self) {
        self.base = orthonormalize(&self.rotation(&self.x));
        self.x[8] = 0.0;
        self.x[9] = 0.0;
        self.x[10] = 0.0;
    }
}

fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}

fn model(sq: &Superquadric, p: &Vec3, delta: f64) -> f64 {
    sq.gradient_distance(p).clamp(-delta, delta)
}

/// Weighted sum of squared residuals; `weights` multiply the base weights.
pub(crate) fn cost(
    sq: &Superquadric,
    samples: &[Sample],
    weights: Option<&[f64]>,
    delta: f64,
) -> f64 {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let w = s.weight * weights.map_or(1.0, |u| u[i]);
            let r = s.value - model(sq, &s.point, delta);
            w * r * r
        })
        .sum()
}

pub(crate) fn rms_residual(sq: &Superquadric, samples: &[Sample], delta: f64) -> f64 {
    let ss: f64 = samples
        .iter()
        .map(|s| (s.value - model(sq, &s.point, delta)).powi(2))
        .sum();
    (ss / samples.len() as f64).sqrt()
}

pub(crate) fn residuals(sq: &Superquadric, samples: &[Sample], delta: f64) -> Vec<f64> {
    samples
        .iter()
        .map(|s| s.value - model(sq, &s.point, delta))
        .collect()
}

fn clamp_to_bounds(x: &mut Params, bounds: &FitBounds) {
    for k in 0..3 {
        x[k] = x[k].clamp(bounds.axes[0], bounds.axes[1]);
    }
    for k in 3..5 {
        x[k] = x[k].clamp(bounds.exponents[0], bounds.exponents[1]);
    }
}

/// Minimizes the weighted squared SDF residual over `samples`, starting at
/// `init`. Returns the best iterate and its weighted cost.
pub(crate) fn levenberg_marquardt(
    samples: &[Sample],
    weights: Option<&[f64]>,
    init: &Superquadric,
    bounds: &FitBounds,
    delta: f64,
    max_iterations: usize,
) -> Result<(Superquadric, f64), DecomposeError> {
    let mut state = State::from_sq(init);
    clamp_to_bounds(&mut state.x, bounds);
    let mut sq = state.superquadric(&state.x);
    let mut current = cost(&sq, samples, weights, delta);
    if !current.is_finite() {
        return Err(DecomposeError::Numerical {
            last: Box::new(*init),
        });
    }
    let n = samples.len();
    let sqrt_w: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.weight * weights.map_or(1.0, |u| u[i])).sqrt())
        .collect();
    let mut lambda = 1e-3;
    let mut r = vec![0.0; n];
    let mut jac = vec![[0.0; N]; n];

    for _ in 0..max_iterations {
        for (i, s) in samples.iter().enumerate() {
            r[i] = sqrt_w[i] * (s.value - model(&sq, &s.point, delta));
        }
        for j in 0..N {
            let scale = if j < 8 {
                state.x[j].abs().max(1e-3)
            } else {
                1.0
            };
            let mut h = 1e-6 * scale;
            let mut xp = state.x;
            let upper = match j {
                0..=2 => bounds.axes[1],
                3 | 4 => bounds.exponents[1],
                _ => f64::INFINITY,
            };
            if xp[j] + h > upper {
                h = -h;
            }
            xp[j] += h;
            let sqp = state.superquadric(&xp);
            for (i, s) in samples.iter().enumerate() {
                let rp = sqrt_w[i] * (s.value - model(&sqp, &s.point, delta));
                jac[i][j] = (rp - r[i]) / h;
            }
        }
        let mut a = SMatrix::<f64, N, N>::zeros();
        let mut g = Params::zeros();
        for i in 0..n {
            let row = Params::from_row_slice(&jac[i]);
            a += row * row.transpose();
            g += row * r[i];
        }
        if !a.iter().all(|v| v.is_finite()) || !g.iter().all(|v| v.is_finite()) {
            return Err(DecomposeError::Numerical { last: Box::new(sq) });
        }

        let mut improved = false;
        let mut step_norm = 0.0;
        for _ in 0..12 {
            let mut damped = a;
            for k in 0..N {
                damped[(k, k)] += lambda * a[(k, k)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-g));
            let mut trial = state.x + step;
            clamp_to_bounds(&mut trial, bounds);
            let trial_sq = state.superquadric(&trial);
            let trial_cost = cost(&trial_sq, samples, weights, delta);
            if trial_cost.is_finite() && trial_cost < current {
                step_norm = (trial - state.x).norm();
                let gain = (current - trial_cost) / current.max(f64::MIN_POSITIVE);
                state.x = trial;
                state.rebase();
                sq = state.superquadric(&state.x);
                current = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = gain > 1e-10;
                break;
            }
            lambda *= 4.0;
        }
        if !improved || step_norm < 1e-12 {
            break;
        }
    }
    Ok((sq, current))
}
