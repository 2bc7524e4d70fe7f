//! Closed-loop simulation of a linear plant under false-data injection.
//!
//! The plant `x' = Ax + Bu + w`, `y = Cx + v` is controlled by `u = −K x̂`
//! with the predictor observer `x̂' = A x̂ + B u + L (ŷ − C x̂)`. The controller
//! receives `ŷ = y + a`, where the attacker may set `a ≠ 0` only on steps the
//! authentication policy leaves unauthenticated. A windowed residual-energy
//! detector raises alarms. The shipped attackers know the authentication
//! schedule and keep the detector silent, in the noise-free prediction, on
//! every step including the authenticated ones.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::AuthPolicy;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum QocError {
    #[error("dimension mismatch: {0}")]
    Dimension(alloc::string::String),
    #[error("attack is nonzero on authenticated step {step}")]
    AuthenticatedInjection { step: usize },
    #[error("invalid policy: l = {l}, f = {f}")]
    Policy { l: u32, f: u32 },
    #[error("the (A, C) pair is not observable")]
    Unobservable,
    #[error("{0}")]
    Invalid(alloc::string::String),
}

/// Windowed residual energy `g[k] = Σ r[j]ᵀ W r[j]` over the last `window`
/// steps, with `W` the inverse measurement-noise covariance (identity when
/// that is singular). An alarm fires when `g[k] > threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window: usize,
    pub threshold: f64,
}

/// Matrices are row-major nested vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub plant_id: alloc::string::String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub process_noise: Vec<Vec<f64>>,
    pub measurement_noise: Vec<Vec<f64>>,
    /// Observer gain, `n × q`.
    pub observer_gain: Vec<Vec<f64>>,
    /// Feedback gain, `m × n`.
    pub feedback_gain: Vec<Vec<f64>>,
    pub detector: DetectorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttackStrategy {
    None,
    /// Maximizes the next estimation error within `margin` of the detector budget.
    Greedy { margin: f64 },
    /// Random residual direction and radius within `margin` of the budget,
    /// drawn from `seed`.
    Random { margin: f64, seed: u64 },
    /// Fixed injections, one vector per step (missing steps are zero).
    Scripted { attack: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    pub x: Vec<Vec<f64>>,
    pub x_hat: Vec<Vec<f64>>,
    pub error: Vec<Vec<f64>>,
    pub attack: Vec<Vec<f64>>,
    pub residual_energy: Vec<f64>,
    pub alarms: Vec<bool>,
    pub authenticated: Vec<bool>,
}

impl Trajectories {
    pub fn error_norms(&self) -> Vec<f64> {
        self.error.iter().map(|e| libm::sqrt(e.iter().map(|v| v * v).sum())).collect()
    }

    pub fn max_error(&self) -> f64 {
        self.error_norms().into_iter().fold(0.0, f64::max)
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<DMatrix<f64>, QocError> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(QocError::Dimension(alloc::format!("{name} should be {r}×{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Symmetric square root, clipping negative eigenvalues to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| libm::sqrt(x.max(0.0))));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

struct Plant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    w_sqrt: DMatrix<f64>,
    v_sqrt: DMatrix<f64>,
    l: DMatrix<f64>,
    k: DMatrix<f64>,
    weight: DMatrix<f64>,
    weight_inv_sqrt: DMatrix<f64>,
}

impl Plant {
    fn new(p: &PlantModel) -> Result<Plant, QocError> {
        let n = p.a.len();
        let m = p.b.first().map_or(0, Vec::len);
        let q = p.c.len();
        if n == 0 || q == 0 {
            return Err(QocError::Dimension("empty state or output".into()));
        }
        if p.detector.window == 0 || !(p.detector.threshold > 0.0) {
            return Err(QocError::Invalid("detector needs a window ≥ 1 and a positive threshold".into()));
        }
        let meas = matrix("measurement_noise", &p.measurement_noise, q, q)?;
        let weight = meas.clone().try_inverse().filter(|_| meas.determinant().abs() > 1e-300).unwrap_or_else(|| DMatrix::identity(q, q));
        let weight_inv_sqrt = sqrt_psd(&weight.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(q, q)));
        Ok(Plant {
            a: matrix("A", &p.a, n, n)?,
            b: matrix("B", &p.b, n, m)?,
            c: matrix("C", &p.c, q, n)?,
            w_sqrt: sqrt_psd(&matrix("process_noise", &p.process_noise, n, n)?),
            v_sqrt: sqrt_psd(&meas),
            l: matrix("observer_gain", &p.observer_gain, n, q)?,
            k: matrix("feedback_gain", &p.feedback_gain, m, n)?,
            weight,
            weight_inv_sqrt,
        })
    }
}

fn authenticated(policy: Option<&AuthPolicy>, k: usize) -> bool {
    match policy {
        None => false,
        Some(p) => {
            let s = p.s.unwrap_or(0) as usize;
            k >= s && (k - s) % (p.l as usize) < (p.f as usize)
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Runs `horizon` steps from `x = x̂ = 0`, drawing noise from `seed`.
/// Attacks are active from step 0; `policy = None` means no authentication.
pub fn simulate_closed_loop(
    plant: &PlantModel,
    policy: Option<&AuthPolicy>,
    strategy: &AttackStrategy,
    horizon: usize,
    seed: u64,
) -> Result<Trajectories, QocError> {
    let pm = Plant::new(plant)?;
    if let Some(p) = policy {
        p.check().map_err(|_| QocError::Policy { l: p.l, f: p.f })?;
    }
    let n = pm.a.nrows();
    let q = pm.c.nrows();
    // attacker coins have their own stream so the noise realization is shared
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    let mut coins = ChaCha8Rng::seed_from_u64(match strategy {
        AttackStrategy::Random { seed, .. } => *seed,
        _ => 0,
    });
    let win = plant.detector.window;
    let tau = plant.detector.threshold;

    let mut x = DVector::zeros(n);
    let mut xh = DVector::zeros(n);
    let mut energies: Vec<f64> = Vec::new();
    let mut out = Trajectories::default();
    for k in 0..horizon {
        let auth = authenticated(policy, k);
        let w = &pm.w_sqrt * gaussian(&mut noise, n);
        let v = &pm.v_sqrt * gaussian(&mut noise, q);
        let y = &pm.c * &x + &v;
        let e = &x - &xh;

        let attack = match strategy {
            AttackStrategy::None => DVector::zeros(q),
            AttackStrategy::Scripted { attack } => match attack.get(k) {
                Some(a) if a.len() != q => return Err(QocError::Dimension(alloc::format!("attack at step {k} should have {q} entries"))),
                Some(a) => {
                    let a = DVector::from_column_slice(a);
                    if auth && a.iter().any(|&x| x != 0.0) {
                        return Err(QocError::AuthenticatedInjection { step: k });
                    }
                    a
                }
                None => DVector::zeros(q),
            },
            _ if auth => DVector::zeros(q),
            AttackStrategy::Greedy { margin } | AttackStrategy::Random { margin, .. } => {
                let planner = Planner::new(&pm, policy, win, margin * tau);
                let c = &pm.a * &e + &w;
                let dirs = match strategy {
                    AttackStrategy::Random { .. } => {
                        let d = gaussian(&mut coins, q);
                        let frac: f64 = coins.random();
                        if d.norm() > 0.0 { vec![(d.normalize(), frac)] } else { Vec::new() }
                    }
                    _ => planner.greedy_directions(&c),
                };
                let z = planner.choose(&c, k, &mut energies, &dirs);
                &pm.weight_inv_sqrt * z - &pm.c * &e - &v
            }
        };

        let y_hat = &y + &attack;
        let r = &y_hat - &pm.c * &xh;
        energies.push((r.transpose() * &pm.weight * &r)[(0, 0)]);
        let g: f64 = energies.iter().rev().take(win).sum();

        out.x.push(rows(&x));
        out.x_hat.push(rows(&xh));
        out.error.push(rows(&e));
        out.attack.push(rows(&attack));
        out.residual_energy.push(g);
        out.alarms.push(g > tau);
        out.authenticated.push(auth);

        let u = -(&pm.k * &xh);
        x = &pm.a * &x + &pm.b * &u + w;
        xh = &pm.a * &xh + &pm.b * &u + &pm.l * r;
    }
    Ok(out)
}

/// Schedule-aware attacker core. It knows the authentication pattern and
/// only injects what it can hide: after every injection there must remain a
/// noise-free continuation that keeps each detector window within `cap`
/// through the end of the next authenticated block.
struct Planner<'a> {
    pm: &'a Plant,
    policy: Option<&'a AuthPolicy>,
    window: usize,
    cap: f64,
    // error response to a normalized residual z: e' = A e − M z
    m: DMatrix<f64>,
    m_pinv: DMatrix<f64>,
    closed: DMatrix<f64>,
}

impl<'a> Planner<'a> {
    fn new(pm: &'a Plant, policy: Option<&'a AuthPolicy>, window: usize, cap: f64) -> Self {
        let m = &pm.l * &pm.weight_inv_sqrt;
        let m_pinv = m.clone().pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()));
        let closed = &pm.a - &pm.l * &pm.c;
        Planner { pm, policy, window, cap, m, m_pinv, closed }
    }

    fn budget(&self, hist: &[f64]) -> f64 {
        (self.cap - hist.iter().rev().take(self.window - 1).sum::<f64>()).max(0.0)
    }

    fn over(&self, hist: &[f64]) -> bool {
        hist.iter().rev().take(self.window).sum::<f64>() > self.cap * (1.0 + 1e-12)
    }

    /// Signed top singular direction of `M` and the directions along and
    /// against `Mᵀc`, each at full radius.
    fn greedy_directions(&self, c: &DVector<f64>) -> Vec<(DVector<f64>, f64)> {
        let mut dirs = Vec::new();
        let svd = self.m.clone().svd(false, true);
        if let Some(vt) = svd.v_t {
            let sv = &svd.singular_values;
            if let Some(i) = (0..sv.len()).max_by(|&i, &j| sv[i].total_cmp(&sv[j])) {
                let d = vt.row(i).transpose();
                dirs.push((-d.clone(), 1.0));
                dirs.push((d, 1.0));
            }
        }
        let toward = self.m.transpose() * c;
        if toward.norm() > 0.0 {
            let d = toward.normalize();
            dirs.push((-d.clone(), 1.0));
            dirs.push((d, 1.0));
        }
        dirs
    }

    /// Normalized residual within `radius` that brings the next error closest to zero.
    fn hide(&self, c: &DVector<f64>, radius: f64) -> DVector<f64> {
        let z = &self.m_pinv * c;
        let norm = z.norm();
        if norm <= radius { z } else { z * (radius / norm) }
    }

    /// Whether hiding from error `e` at step `k` keeps the detector silent
    /// through the next authenticated block. `hist` is restored on return.
    fn recoverable(&self, e: DVector<f64>, k: usize, hist: &mut Vec<f64>) -> bool {
        let Some(p) = self.policy else { return true };
        let Some(start) = (k..=k + p.l as usize).find(|&j| authenticated(self.policy, j)) else { return true };
        let block_end = (start..).find(|&j| !authenticated(self.policy, j)).unwrap_or(start + p.l as usize);
        let base = hist.len();
        let mut e = e;
        let mut ok = true;
        for j in k..block_end + self.window - 1 {
            if authenticated(self.policy, j) {
                let r = &self.pm.c * &e;
                hist.push((r.transpose() * &self.pm.weight * &r)[(0, 0)]);
                e = &self.closed * e;
            } else {
                let c = &self.pm.a * &e;
                let z = self.hide(&c, libm::sqrt(self.budget(hist)));
                hist.push(z.norm_squared());
                e = c - &self.m * z;
            }
            if self.over(hist) {
                ok = false;
                break;
            }
        }
        hist.truncate(base);
        ok
    }

    fn feasible(&self, c: &DVector<f64>, z: &DVector<f64>, k: usize, hist: &mut Vec<f64>) -> bool {
        hist.push(z.norm_squared());
        let ok = self.recoverable(c - &self.m * z, k + 1, hist);
        hist.pop();
        ok
    }

    /// Largest hideable injection along each direction, keeping the one that
    /// leaves the largest next error. Falls back to hiding when nothing is safe.
    fn choose(&self, c: &DVector<f64>, k: usize, hist: &mut Vec<f64>, dirs: &[(DVector<f64>, f64)]) -> DVector<f64> {
        let radius = libm::sqrt(self.budget(hist));
        let zero = DVector::zeros(self.m.ncols());
        if !self.feasible(c, &zero, k, hist) {
            return self.hide(c, radius);
        }
        let mut best = (c.norm(), zero);
        for (d, frac) in dirs {
            let top = radius * frac;
            let rho = if self.feasible(c, &(d * top), k, hist) {
                top
            } else {
                let (mut lo, mut hi) = (0.0, top);
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if self.feasible(c, &(d * mid), k, hist) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            let z = d * rho;
            let val = (c - &self.m * &z).norm();
            if val > best.0 {
                best = (val, z);
            }
        }
        best.1
    }
}

/// Largest estimation-error norm found over one greedy attack and
/// `samples − 1` random attacks, all on the noise stream of `seed`.
///
/// This is a lower estimate of the true worst case: the attacks are
/// heuristics, not a reachability computation. Sample `i` draws its attacker
/// coins from `seed + i`, so adding samples never lowers the result. With
/// process or measurement noise the attackers plan on the noise-free
/// prediction, so noise can still push a planned-silent step over the threshold.
pub fn estimate_qoc_bound(plant: &PlantModel, l: u32, f: u32, samples: usize, horizon: usize, seed: u64) -> Result<f64, QocError> {
    let policy = AuthPolicy::new(0, f, l);
    policy.check().map_err(|_| QocError::Policy { l, f })?;
    if samples == 0 {
        return Err(QocError::Invalid("at least one sample is needed".into()));
    }
    const MARGIN: f64 = 1.0 - 1e-6;
    let mut best = simulate_closed_loop(plant, Some(&policy), &AttackStrategy::Greedy { margin: MARGIN }, horizon, seed)?.max_error();
    for i in 1..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let strategy = AttackStrategy::Random { margin: rng.random_range(0.5..MARGIN), seed: rng.random() };
        best = best.max(simulate_closed_loop(plant, Some(&policy), &strategy, horizon, seed)?.max_error());
    }
    Ok(best)
}

/// `min(ψ, q_un)`: the observability index of `(A, C)` against the number of
/// eigenvalues of `A` on or outside the unit circle.
pub fn minimal_block_length(plant: &PlantModel) -> Result<u32, QocError> {
    let n = plant.a.len();
    let a = matrix("A", &plant.a, n, n)?;
    let q = plant.c.len();
    let c = matrix("C", &plant.c, q, n)?;
    let mut stacked = DMatrix::<f64>::zeros(0, n);
    let mut block = c.clone();
    let mut psi = None;
    for k in 1..=n {
        let r = stacked.nrows();
        stacked = stacked.insert_rows(r, q, 0.0);
        stacked.view_mut((r, 0), (q, n)).copy_from(&block);
        if stacked.rank(1e-9) == n {
            psi = Some(k as u32);
            break;
        }
        block = &block * &a;
    }
    let psi = psi.ok_or(QocError::Unobservable)?;
    let unstable = a.complex_eigenvalues().iter().filter(|z| libm::hypot(z.re, z.im) >= 1.0 - 1e-12).count() as u32;
    Ok(psi.min(unstable))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn scalar(a: f64, l_obs: f64, tau: f64, noise: f64) -> PlantModel {
        PlantModel {
            plant_id: "scalar".into(),
            a: vec![vec![a]],
            b: vec![vec![1.0]],
            c: vec![vec![1.0]],
            process_noise: vec![vec![noise]],
            measurement_noise: vec![vec![noise]],
            observer_gain: vec![vec![l_obs]],
            feedback_gain: vec![vec![a - 0.5]],
            detector: DetectorConfig { window: 1, threshold: tau },
        }
    }

    /// Worst stealthy error of a noise-free scalar loop under policy (0, f, l)
    /// with a one-step detector, from magnitudes alone. Unauthenticated steps
    /// grow the error by at most `|a|e + |L|R`, authenticated steps shrink it by
    /// `|a − L|` and expose it, so the error entering a block must stay within
    /// what the block's residuals tolerate. Working backwards gives the largest
    /// hideable error at every step of a run.
    fn stealthy_oracle(a: f64, l_obs: f64, tau: f64, l: u32, f: u32) -> f64 {
        let (r, rho, gain) = (tau.sqrt(), (a - l_obs).abs(), l_obs.abs());
        let entry = if rho <= 1.0 { r } else { r / rho.powi(f as i32 - 1) };
        let run = (l - f) as usize;
        let mut bound = vec![entry; run + 1];
        for j in (0..run).rev() {
            bound[j] = (bound[j + 1] + gain * r) / a.abs();
        }
        let (mut e, mut worst) = (0.0f64, 0.0f64);
        for _ in 0..500 {
            for _ in 0..f {
                worst = worst.max(e);
                e *= rho;
            }
            for j in 0..run {
                worst = worst.max(e);
                e = (a.abs() * e + gain * r).min(bound[j + 1]);
            }
        }
        worst
    }

    #[test]
    fn nominal_loop_error_vanishes() {
        let t = simulate_closed_loop(&scalar(1.05, 0.8, 1.0, 0.0), None, &AttackStrategy::None, 50, 0).unwrap();
        assert!(t.max_error() == 0.0);
        assert!(t.alarms.iter().all(|&a| !a));
    }

    #[test]
    fn unauthenticated_unstable_plant_diverges() {
        let t = simulate_closed_loop(&scalar(1.05, 0.8, 1.0, 0.0), None, &AttackStrategy::Greedy { margin: 0.99 }, 250, 0).unwrap();
        assert!(t.max_error() > 1e4);
        assert!(t.alarms.iter().all(|&a| !a));
    }

    #[test]
    fn full_authentication_removes_the_attack() {
        let p = scalar(1.05, 0.8, 1.0, 0.01);
        let all = AuthPolicy::new(0, 1, 1);
        let clean = simulate_closed_loop(&p, Some(&all), &AttackStrategy::None, 80, 4).unwrap();
        for s in [AttackStrategy::Greedy { margin: 0.99 }, AttackStrategy::Random { margin: 0.99, seed: 1 }] {
            let t = simulate_closed_loop(&p, Some(&all), &s, 80, 4).unwrap();
            assert_eq!(t, clean);
        }
    }

    #[test]
    fn scripted_injection_on_authenticated_step_is_rejected() {
        let p = scalar(1.05, 0.8, 1.0, 0.0);
        let policy = AuthPolicy::new(0, 1, 2);
        let bad = AttackStrategy::Scripted { attack: vec![vec![0.0], vec![1.0], vec![1.0]] };
        assert_eq!(simulate_closed_loop(&p, Some(&policy), &bad, 5, 0), Err(QocError::AuthenticatedInjection { step: 2 }));
    }

    #[test]
    fn scalar_greedy_bound_meets_the_stealthy_oracle() {
        for (a, l_obs, l, f) in [(1.05, 0.8, 4, 1), (1.1, 1.0, 3, 2), (0.9, 0.5, 5, 1), (1.2, 1.5, 6, 2), (1.3, 0.9, 4, 1)] {
            let est = estimate_qoc_bound(&scalar(a, l_obs, 4.0, 0.0), l, f, 1, 400, 0).unwrap();
            let exact = stealthy_oracle(a, l_obs, 4.0, l, f);
            assert!((est - exact).abs() <= 0.05 * exact, "a={a} l={l} f={f}: {est} vs {exact}");
        }
    }

    #[test]
    fn more_samples_never_lower_the_estimate() {
        let p = scalar(1.05, 0.8, 1.0, 0.02);
        let mut last = 0.0;
        for n in [1, 2, 4, 8] {
            let e = estimate_qoc_bound(&p, 3, 1, n, 100, 9).unwrap();
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn block_length_examples() {
        assert_eq!(minimal_block_length(&scalar(1.1, 0.5, 1.0, 0.0)).unwrap(), 1);
        let mut di = scalar(1.0, 0.5, 1.0, 0.0);
        di.a = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        di.c = vec![vec![1.0, 0.0]];
        assert_eq!(minimal_block_length(&di).unwrap(), 2);
        assert_eq!(minimal_block_length(&scalar(0.5, 0.2, 1.0, 0.0)).unwrap(), 0);
        di.c = vec![vec![0.0, 1.0]];
        assert_eq!(minimal_block_length(&di), Err(QocError::Unobservable));
    }
}
