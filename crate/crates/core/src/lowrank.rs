//! Pooled factored least squares: fit `Θ = B·W` with column-orthonormal `B`
//! (d×k) and per-task coefficients `W` (k×T) minimizing the pooled squared
//! error `Σ_t Σ_n (x_{n,t}ᵀ·B·w_t − r_{n,t})²`.
//!
//! The solver is alternating least squares. Each task's data is compressed once
//! through a thin QR (`X_t = Q_t·R_t`), after which both half-steps are
//! least-squares solves on systems with at most `min(n_t, d)` rows per task and
//! exactly the same minimizers and objective values as on the raw data. A
//! brute-force grid oracle certifies small instances.

use crate::error::{Error, Result};
use crate::numerics::{dot, least_squares, sample_haar_orthonormal, Mat, OrthonormalBasis, Rng};

/// Per-task designs and rewards pooled for a joint fit. All tasks share the
/// ambient dimension `d`; individual tasks may be empty.
#[derive(Debug, Clone)]
pub struct PooledBatch {
    dim: usize,
    tasks: Vec<TaskSamples>,
}

#[derive(Debug, Clone, Default)]
struct TaskSamples {
    rows: Vec<f64>, // row-major n_t × d
    rewards: Vec<f64>,
}

impl PooledBatch {
    pub fn new(dim: usize, num_tasks: usize) -> Self {
        PooledBatch {
            dim,
            tasks: vec![TaskSamples::default(); num_tasks],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn samples_for(&self, task: usize) -> usize {
        self.tasks[task].rewards.len()
    }

    pub fn total_samples(&self) -> usize {
        self.tasks.iter().map(|t| t.rewards.len()).sum()
    }

    pub fn push_sample(&mut self, task: usize, context: &[f64], reward: f64) -> Result<()> {
        if task >= self.tasks.len() {
            return Err(Error::invalid(format!("task index {task} out of range")));
        }
        if context.len() != self.dim {
            return Err(Error::invalid(format!(
                "context length {} does not match dimension {}",
                context.len(),
                self.dim
            )));
        }
        if !context.iter().all(|v| v.is_finite()) || !reward.is_finite() {
            return Err(Error::invalid("sample entries must be finite"));
        }
        self.tasks[task].rows.extend_from_slice(context);
        self.tasks[task].rewards.push(reward);
        Ok(())
    }

    pub fn clear(&mut self) {
        for t in &mut self.tasks {
            t.rows.clear();
            t.rewards.clear();
        }
    }

    /// Design matrix of one task (`n_t × d`).
    pub fn design(&self, task: usize) -> Mat {
        let t = &self.tasks[task];
        Mat::from_row_major(t.rewards.len(), self.dim, t.rows.clone())
            .expect("batch rows are validated on push")
    }

    pub fn rewards(&self, task: usize) -> &[f64] {
        &self.tasks[task].rewards
    }
}

/// Estimated factorization: column-orthonormal `B̂` plus coefficients `Ŵ`
/// whose columns give `θ̂_t = B̂·ŵ_t`.
#[derive(Debug, Clone)]
pub struct FactorPair {
    pub b_hat: OrthonormalBasis,
    pub w_hat: Mat,
}

/// Outcome of a fit. `loss` is the pooled objective evaluated at the returned
/// pair on the raw data.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 200,
            tol: 1e-9,
            restarts: 4,
        }
    }
}

const UNDERDETERMINED_RIDGE: f64 = 1e-8;
// Above this unknown count the pooled B half-step switches from a direct
// orthogonal solve to warm-started conjugate gradients.
const DIRECT_SOLVE_MAX_UNKNOWNS: usize = 512;

/// Exact orthogonal compression of one task: `‖X·θ − r‖² = ‖R·θ − z‖² + rho`
/// for every θ, with `R` having `min(n_t, d)` rows.
struct CompressedTask {
    r: Mat,
    z: Vec<f64>,
    rho: f64,
}

fn compress_task(design: &Mat, rewards: &[f64]) -> CompressedTask {
    let n = design.rows();
    let d = design.cols();
    if n == 0 {
        return CompressedTask {
            r: Mat::zeros(0, d),
            z: Vec::new(),
            rho: 0.0,
        };
    }
    let qr = design.to_na().qr();
    let q = qr.q(); // n × min(n, d)
    let r = qr.r(); // min(n, d) × d
    let y = nalgebra::DVector::from_column_slice(rewards);
    let z_na = q.transpose() * &y;
    let rho = (&y - q * &z_na).norm_squared();
    CompressedTask {
        r: Mat::from_na(&r),
        z: z_na.iter().cloned().collect(),
        rho: rho.max(0.0),
    }
}

/// Objective `Σ_t ‖X_t·B·w_t − r_t‖²` evaluated on the raw batch.
pub fn pooled_loss(batch: &PooledBatch, b: &Mat, w: &Mat) -> f64 {
    let d = batch.dim;
    let mut loss = 0.0;
    for (t, task) in batch.tasks.iter().enumerate() {
        if task.rewards.is_empty() {
            continue;
        }
        let theta = b.mul_vec(&w.col(t));
        for (i, &r) in task.rewards.iter().enumerate() {
            let row = &task.rows[i * d..(i + 1) * d];
            let resid = dot(row, &theta) - r;
            loss += resid * resid;
        }
    }
    loss
}

fn compressed_loss(tasks: &[CompressedTask], b: &Mat, w: &Mat) -> f64 {
    let mut loss = 0.0;
    for (t, ct) in tasks.iter().enumerate() {
        loss += ct.rho;
        if ct.z.is_empty() {
            continue;
        }
        let theta = b.mul_vec(&w.col(t));
        let pred = ct.r.mul_vec(&theta);
        for (p, z) in pred.iter().zip(&ct.z) {
            let resid = p - z;
            loss += resid * resid;
        }
    }
    loss
}

/// W half-step: per-task least squares on features `R_t·B`.
fn solve_w(tasks: &[CompressedTask], b: &Mat, ridge: f64) -> Result<Mat> {
    let k = b.cols();
    let mut w = Mat::zeros(k, tasks.len());
    for (t, ct) in tasks.iter().enumerate() {
        if ct.z.is_empty() {
            continue;
        }
        let features = ct.r.matmul(b);
        let wt = least_squares(&features, &ct.z, ridge)?;
        for (i, v) in wt.iter().enumerate() {
            w.set(i, t, *v);
        }
    }
    Ok(w)
}

/// B half-step: pooled least squares over all tasks with `W` fixed. Returns the
/// raw (not yet re-orthonormalized) `B`.
fn solve_b(tasks: &[CompressedTask], w: &Mat, b_warm: &Mat, ridge: f64) -> Result<Mat> {
    let d = b_warm.rows();
    let k = b_warm.cols();
    if d * k <= DIRECT_SOLVE_MAX_UNKNOWNS {
        solve_b_direct(tasks, w, d, k, ridge)
    } else {
        solve_b_cg(tasks, w, b_warm, ridge)
    }
}

fn solve_b_direct(
    tasks: &[CompressedTask],
    w: &Mat,
    d: usize,
    k: usize,
    ridge: f64,
) -> Result<Mat> {
    let total_rows: usize = tasks.iter().map(|t| t.z.len()).sum();
    if total_rows == 0 {
        return Ok(Mat::zeros(d, k));
    }
    // Compressed sample (u, z) of task t contributes the row kron(u, w_t)
    // against the row-major vec(B).
    let mut design = Mat::zeros(total_rows, d * k);
    let mut rhs = Vec::with_capacity(total_rows);
    let mut row_idx = 0;
    for (t, ct) in tasks.iter().enumerate() {
        let wt = w.col(t);
        for (i, &z) in ct.z.iter().enumerate() {
            let u = ct.r.row(i);
            for (a, &ua) in u.iter().enumerate() {
                for (bi, &wb) in wt.iter().enumerate() {
                    design.set(row_idx, a * k + bi, ua * wb);
                }
            }
            rhs.push(z);
            row_idx += 1;
        }
    }
    let vec_b = least_squares(&design, &rhs, ridge)?;
    Mat::from_row_major(d, k, vec_b)
        .map_err(|_| Error::numerical("B half-step produced non-finite entries"))
}

/// Conjugate gradients on the normal equations of the pooled B system, warm
/// started at the current B. Every CG iteration decreases the quadratic
/// objective, so truncation never breaks the descent property of the outer
/// alternation.
fn solve_b_cg(tasks: &[CompressedTask], w: &Mat, b_warm: &Mat, ridge: f64) -> Result<Mat> {
    let d = b_warm.rows();
    let k = b_warm.cols();
    let frob2 = |m: &Mat| m.data().iter().map(|v| v * v).sum::<f64>();
    let matvec = |m: &Mat| -> Mat {
        let mut out = Mat::zeros(d, k);
        for (t, ct) in tasks.iter().enumerate() {
            if ct.z.is_empty() {
                continue;
            }
            let wt = w.col(t);
            let f = ct.r.matmul(m); // rows × k
            let s = f.mul_vec(&wt); // rows
            let y = ct.r.tr_mul_vec(&s); // d
            out.add_scaled_outer(1.0, &y, &wt);
        }
        if ridge > 0.0 {
            for (o, mi) in out.data_mut().iter_mut().zip(m.data()) {
                *o += ridge * mi;
            }
        }
        out
    };

    let mut rhs = Mat::zeros(d, k);
    for (t, ct) in tasks.iter().enumerate() {
        if ct.z.is_empty() {
            continue;
        }
        let y = ct.r.tr_mul_vec(&ct.z);
        rhs.add_scaled_outer(1.0, &y, &w.col(t));
    }

    let mut x = b_warm.clone();
    let ax = matvec(&x);
    let mut resid = rhs.clone();
    for (r, a) in resid.data_mut().iter_mut().zip(ax.data()) {
        *r -= a;
    }
    let mut p = resid.clone();
    let mut rs = frob2(&resid);
    let rhs_norm = frob2(&rhs).max(1e-300);
    let max_iters = (d * k).min(64);
    for _ in 0..max_iters {
        if rs <= 1e-24 * rhs_norm {
            break;
        }
        let ap = matvec(&p);
        let denom: f64 = p.data().iter().zip(ap.data()).map(|(a, b)| a * b).sum();
        if denom <= 0.0 || denom.is_nan() {
            break;
        }
        let alpha = rs / denom;
        for (xi, pi) in x.data_mut().iter_mut().zip(p.data()) {
            *xi += alpha * pi;
        }
        for (ri, api) in resid.data_mut().iter_mut().zip(ap.data()) {
            *ri -= alpha * api;
        }
        let rs_new = frob2(&resid);
        let beta = rs_new / rs;
        rs = rs_new;
        for (pi, ri) in p.data_mut().iter_mut().zip(resid.data()) {
            *pi = ri + beta * *pi;
        }
    }
    if !x.is_finite() {
        return Err(Error::numerical("B half-step diverged"));
    }
    Ok(x)
}

/// Re-gauge `(B_raw, W)` to `(Q, R·W)` with orthonormal `Q`; the product `B·W`
/// is preserved exactly, so the objective does not move.
fn orthonormalize(b_raw: &Mat, w: &Mat) -> Result<(Mat, Mat)> {
    let k = b_raw.cols();
    let qr = b_raw.to_na().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
            for c in 0..r.ncols() {
                r[(j, c)] = -r[(j, c)];
            }
        }
    }
    let q_mat = Mat::from_na(&q);
    let w_new = Mat::from_na(&r).matmul(w);
    Ok((q_mat, w_new))
}

/// Alternating least squares for the pooled factored objective.
///
/// Fix `B` and solve every `w_t` by per-task least squares on features
/// `R_t·B`; fix `W` and solve `B` by pooled least squares; re-orthonormalize
/// `B`; repeat until the relative loss decrease drops below `opts.tol` or
/// `opts.max_iters` is reached. The best of `opts.restarts` Haar-seeded
/// initializations wins, and the returned loss is no larger than any iterate
/// visited. Inner solves carry a 1e-8 ridge only while the pooled system is
/// under-determined (`Σ n_t < dk + kT`).
pub fn fit_factored_erm(
    batch: &PooledBatch,
    k: usize,
    rng: &Rng,
    opts: FitOptions,
) -> Result<(FactorPair, FitReport)> {
    let d = batch.dim();
    let t_count = batch.num_tasks();
    if t_count == 0 {
        return Err(Error::invalid("fit_factored_erm: batch has no tasks"));
    }
    if k == 0 || k > d {
        return Err(Error::invalid(format!(
            "fit_factored_erm: need 1 <= k <= d, got k = {k}, d = {d}"
        )));
    }
    if batch.total_samples() == 0 {
        return Err(Error::invalid("fit_factored_erm: batch has no samples"));
    }

    let tasks: Vec<CompressedTask> = (0..t_count)
        .map(|t| compress_task(&batch.design(t), batch.rewards(t)))
        .collect();
    let ridge = if batch.total_samples() < d * k + k * t_count {
        UNDERDETERMINED_RIDGE
    } else {
        0.0
    };

    let mut best: Option<(f64, Mat, Mat, usize, bool)> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng_r = rng.derive_child(&format!("restart:{restart}"));
        let mut b = sample_haar_orthonormal(d, k, &mut rng_r)?.mat().clone();
        let mut w = Mat::zeros(k, t_count);
        let mut prev_loss = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        for iter in 0..opts.max_iters.max(1) {
            iterations = iter + 1;
            w = solve_w(&tasks, &b, ridge)?;
            let loss = compressed_loss(&tasks, &b, &w);
            if !loss.is_finite() {
                return Err(Error::numerical(
                    "fit_factored_erm: objective became non-finite",
                ));
            }
            if loss > prev_loss + monotonicity_slack(prev_loss, ridge, k, &w) {
                return Err(Error::numerical(format!(
                    "fit_factored_erm: objective increased from {prev_loss} to {loss}"
                )));
            }
            if prev_loss.is_finite() && prev_loss - loss <= opts.tol * prev_loss.max(1e-300) {
                prev_loss = loss.min(prev_loss);
                converged = true;
                break;
            }
            prev_loss = loss;
            let b_raw = solve_b(&tasks, &w, &b, ridge)?;
            let (b_next, w_next) = orthonormalize(&b_raw, &w)?;
            b = b_next;
            w = w_next;
        }
        // The loop ends either right after a W step (converged) or after a
        // B step; in both cases monotonicity makes the current pair the best
        // iterate of this restart.
        let final_loss = compressed_loss(&tasks, &b, &w).min(prev_loss);
        let better = match &best {
            None => true,
            Some((best_loss, ..)) => final_loss < *best_loss,
        };
        if better {
            best = Some((final_loss, b, w, iterations, converged));
        }
    }

    let (_, b, w, iterations, converged) = best.expect("at least one restart runs");
    let raw_loss = pooled_loss(batch, &b, &w);
    let pair = FactorPair {
        b_hat: OrthonormalBasis::new(b)?,
        w_hat: w,
    };
    Ok((
        pair,
        FitReport {
            loss: raw_loss,
            iterations,
            converged,
        },
    ))
}

fn monotonicity_slack(prev_loss: f64, ridge: f64, k: usize, w: &Mat) -> f64 {
    let w_frob2: f64 = w.data().iter().map(|v| v * v).sum();
    ridge * (k as f64 + w_frob2)
        + 1e-9
            * (1.0
                + if prev_loss.is_finite() {
                    prev_loss
                } else {
                    0.0
                })
}

/// Coefficient matrix `Θ̂ = B̂·Ŵ`; column `t` is `θ̂_t`.
pub fn coefficients(fp: &FactorPair) -> Mat {
    fp.b_hat.mat().matmul(&fp.w_hat)
}

/// Exhaustive rank-one oracle for `d ≤ 3`: enumerate unit directions on an
/// angle-uniform grid of `grid` candidates in total, solve every `w_t` in
/// closed form, and return the best. This deliberately works on the raw
/// samples and shares no code with the iterative path it certifies.
pub fn brute_force_factored_erm(
    batch: &PooledBatch,
    k: usize,
    grid: usize,
) -> Result<(FactorPair, f64)> {
    let d = batch.dim();
    if k != 1 {
        return Err(Error::Unsupported(format!(
            "brute_force_factored_erm supports k = 1 only, got {k}"
        )));
    }
    if d == 0 || d > 3 {
        return Err(Error::Unsupported(format!(
            "brute_force_factored_erm supports d <= 3 only, got {d}"
        )));
    }
    if grid < 100 {
        return Err(Error::invalid(
            "brute_force_factored_erm: grid must be >= 100",
        ));
    }
    if batch.total_samples() == 0 {
        return Err(Error::invalid("brute_force_factored_erm: empty batch"));
    }

    let candidates: Vec<Vec<f64>> = match d {
        1 => vec![vec![1.0]],
        2 => (0..grid)
            .map(|j| {
                let phi = std::f64::consts::PI * j as f64 / grid as f64;
                vec![phi.cos(), phi.sin()]
            })
            .collect(),
        _ => {
            // Lines in R^3: polar angle over (0, π), azimuth over [0, π).
            let m = (grid as f64).sqrt().floor() as usize;
            let mut out = Vec::with_capacity(m * m);
            for i in 0..m {
                let phi = std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
                for j in 0..m {
                    let psi = std::f64::consts::PI * j as f64 / m as f64;
                    out.push(vec![
                        phi.sin() * psi.cos(),
                        phi.sin() * psi.sin(),
                        phi.cos(),
                    ]);
                }
            }
            out
        }
    };

    let t_count = batch.num_tasks();
    let dim = batch.dim();
    let mut best_loss = f64::INFINITY;
    let mut best_b = candidates[0].clone();
    let mut best_w = vec![0.0; t_count];
    let mut w_scratch = vec![0.0; t_count];
    for b in &candidates {
        let mut loss = 0.0;
        for (t, task) in batch.tasks.iter().enumerate() {
            if task.rewards.is_empty() {
                w_scratch[t] = 0.0;
                continue;
            }
            // 1-D least squares in closed form: w = ⟨f, r⟩ / ⟨f, f⟩.
            let mut num = 0.0;
            let mut den = 0.0;
            let mut r2 = 0.0;
            for (i, &r) in task.rewards.iter().enumerate() {
                let row = &task.rows[i * dim..(i + 1) * dim];
                let f = dot(row, b);
                num += f * r;
                den += f * f;
                r2 += r * r;
            }
            let w = if den > 0.0 { num / den } else { 0.0 };
            w_scratch[t] = w;
            loss += r2 - 2.0 * w * num + w * w * den;
        }
        if loss < best_loss {
            best_loss = loss;
            best_b.clone_from_slice(b);
            best_w.clone_from_slice(&w_scratch);
        }
    }

    let pair = FactorPair {
        b_hat: OrthonormalBasis::from_vector(&best_b)?,
        w_hat: Mat::from_row_major(1, t_count, best_w)?,
    };
    Ok((pair, best_loss.max(0.0)))
}
