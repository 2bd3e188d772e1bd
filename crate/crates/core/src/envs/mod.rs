//! Bandit environments: synthetic finite-action, synthetic infinite-action
//! (ellipsoid action sets), and MNIST pairwise-digit tasks.
//!
//! The environment owns the ground truth (`B`, `W`, `Θ = B·W`) and the reward
//! noise. Policies only ever see [`RoundContexts`] and [`Feedback`]; the regret
//! oracle ([`instant_regret`]) and the reward generator ([`pull`]) take the full
//! [`DrawnRound`], whose hidden part never reaches a policy. That shape is what
//! enforces the information hygiene between player and environment.

mod idx;
mod mnist;

pub use idx::{parse_idx, serialize_idx, IdxData, IDX_MAGIC_IMAGES, IDX_MAGIC_LABELS};
pub use mnist::{build_mnist_tasks, build_mnist_tasks_with_pca, MnistTasks};

use crate::error::{Error, Result};
use crate::numerics::{
    dot, norm, sample_gaussian, sample_haar_orthonormal, sample_sphere, Mat, OrthonormalBasis, Rng,
};
use std::sync::Arc;

// Fixed spectrum band for finite-action context covariances: eigenvalues of
// Σ_t must lie in [COV_BAND_LO/d, COV_BAND_HI/d].
const COV_BAND_LO: f64 = 0.1;
const COV_BAND_HI: f64 = 10.0;
// Diversity target for infinite-action coefficient draws and the redraw cap.
const DIVERSITY_NU: f64 = 0.1;
const DIVERSITY_ATTEMPTS: usize = 1000;

/// Ground-truth bandit instance; the environment's secret.
#[derive(Debug, Clone)]
pub struct HiddenInstance {
    seed: u64,
    b: OrthonormalBasis,
    w: Mat,
    theta: Mat,
    kind: InstanceKind,
    noise_scale: f64,
}

#[derive(Debug, Clone)]
pub enum InstanceKind {
    /// K Gaussian contexts per task per round.
    Finite {
        num_actions: usize,
        cov_chol: Vec<Arc<Mat>>,
    },
    /// Ellipsoid action set `{a : aᵀQ_t⁻¹a ≤ 1}` per task.
    Infinite {
        q: Vec<Arc<Mat>>,
        q_inv: Vec<Arc<Mat>>,
        lambda0: f64,
        optimal_values: Vec<f64>,
    },
    /// One image from each digit of the task's pair per round, reward 1 for
    /// picking the larger digit.
    Mnist(MnistTasks),
}

/// One chosen action per task: an index into the offered contexts
/// (finite/MNIST) or an explicit vector (infinite).
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Index(usize),
    Vector(Vec<f64>),
}

/// What a policy sees for one task in one round.
#[derive(Debug, Clone)]
pub enum TaskContexts {
    /// Offered context vectors, one per action.
    Actions(Vec<Vec<f64>>),
    /// Descriptor of the (round-independent) ellipsoid action set.
    Ellipsoid { q: Arc<Mat>, lambda0: f64 },
}

#[derive(Debug, Clone)]
pub struct RoundContexts {
    pub round: usize,
    pub tasks: Vec<TaskContexts>,
}

/// Per-task rewards for the committed actions of one round.
#[derive(Debug, Clone)]
pub struct Feedback {
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone)]
enum RoundSecret {
    None,
    /// Digit labels of the offered MNIST images, in presentation order.
    MnistLabels(Vec<[u8; 2]>),
}

/// A drawn round: the public contexts plus whatever the environment must
/// remember to score it. Only `contexts` is for policy consumption.
#[derive(Debug, Clone)]
pub struct DrawnRound {
    pub contexts: RoundContexts,
    secret: RoundSecret,
}

impl HiddenInstance {
    pub(crate) fn from_parts(
        seed: u64,
        b: OrthonormalBasis,
        w: Mat,
        kind: InstanceKind,
    ) -> Result<Self> {
        let theta = b.mat().matmul(&w);
        let inst = HiddenInstance {
            seed,
            b,
            w,
            theta,
            kind,
            noise_scale: 1.0,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Context dimension as seen by policies.
    pub fn dim(&self) -> usize {
        match &self.kind {
            InstanceKind::Mnist(m) => m.dim(),
            _ => self.theta.rows(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        match &self.kind {
            InstanceKind::Mnist(m) => m.num_tasks(),
            _ => self.theta.cols(),
        }
    }

    /// Number of offered actions per round, where that is fixed.
    pub fn num_actions(&self) -> Option<usize> {
        match &self.kind {
            InstanceKind::Finite { num_actions, .. } => Some(*num_actions),
            InstanceKind::Mnist(_) => Some(2),
            InstanceKind::Infinite { .. } => None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> &InstanceKind {
        &self.kind
    }

    /// Ground-truth coefficients, for the harness-side regret oracle and for
    /// tests. Policies never receive this.
    pub fn theta(&self) -> &Mat {
        &self.theta
    }

    pub fn basis(&self) -> &OrthonormalBasis {
        &self.b
    }

    pub fn coefficients(&self) -> &Mat {
        &self.w
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Test hook: scale the reward noise (0 disables it).
    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        self.noise_scale = scale;
        self
    }

    pub fn lambda0(&self) -> Option<f64> {
        match &self.kind {
            InstanceKind::Infinite { lambda0, .. } => Some(*lambda0),
            _ => None,
        }
    }

    /// Check every structural invariant of the instance.
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            InstanceKind::Mnist(m) => m.validate(),
            InstanceKind::Finite {
                num_actions,
                cov_chol,
            } => {
                self.validate_theta()?;
                if *num_actions < 2 {
                    return Err(Error::invalid("finite instances need K >= 2"));
                }
                if cov_chol.len() != self.num_tasks() {
                    return Err(Error::invalid("one covariance factor per task required"));
                }
                let d = self.theta.rows() as f64;
                for chol in cov_chol {
                    let sigma = chol.matmul(&chol.transpose());
                    let (lo, hi) = eigenvalue_range(&sigma);
                    if lo < COV_BAND_LO / d - 1e-12 || hi > COV_BAND_HI / d + 1e-12 {
                        return Err(Error::ConstraintViolation(format!(
                            "context covariance spectrum [{lo}, {hi}] leaves the Θ(1/d) band"
                        )));
                    }
                }
                Ok(())
            }
            InstanceKind::Infinite {
                q,
                q_inv,
                lambda0,
                optimal_values,
            } => {
                self.validate_theta()?;
                let t_count = self.num_tasks();
                if q.len() != t_count || q_inv.len() != t_count || optimal_values.len() != t_count {
                    return Err(Error::invalid("per-task ellipsoid data incomplete"));
                }
                for qt in q {
                    let (lo, _) = eigenvalue_range(qt);
                    if lo < lambda0 - 1e-9 {
                        return Err(Error::ConstraintViolation(format!(
                            "λ_min(Q) = {lo} below λ0 = {lambda0}"
                        )));
                    }
                }
                let k = self.w.rows();
                for t in 0..t_count {
                    if norm(&self.w.col(t)) < 1e-9 {
                        return Err(Error::ConstraintViolation(format!(
                            "coefficient w_{t} is numerically zero"
                        )));
                    }
                }
                if t_count >= k {
                    let gram = scaled_coefficient_gram(&self.w);
                    let (lo, _) = eigenvalue_range(&gram);
                    if lo < DIVERSITY_NU / k as f64 - 1e-9 {
                        return Err(Error::ConstraintViolation(format!(
                            "task diversity λ_min(W·Wᵀ/T) = {lo} below {}",
                            DIVERSITY_NU / k as f64
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    fn validate_theta(&self) -> Result<()> {
        let prod = self.b.mat().matmul(&self.w);
        let mut max_diff = 0.0_f64;
        for (a, b) in prod.data().iter().zip(self.theta.data()) {
            max_diff = max_diff.max((a - b).abs());
        }
        if max_diff > 1e-12 {
            return Err(Error::ConstraintViolation(format!(
                "Θ deviates from B·W by {max_diff:e}"
            )));
        }
        Ok(())
    }
}

fn eigenvalue_range(sym: &Mat) -> (f64, f64) {
    let eig = sym.to_na().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// `W·Wᵀ / T` for the diversity check.
fn scaled_coefficient_gram(w: &Mat) -> Mat {
    let mut gram = w.matmul(&w.transpose());
    gram.scale(1.0 / w.cols() as f64);
    gram
}

/// Synthetic finite-action instance: Haar `B`, unit-sphere `w_t`, contexts
/// `N(0, I/d)` for every task, standard normal reward noise.
pub fn gen_finite(
    d: usize,
    k: usize,
    num_tasks: usize,
    num_actions: usize,
    seed: u64,
) -> Result<HiddenInstance> {
    if k == 0 || k > d {
        return Err(Error::invalid(format!(
            "gen_finite: need 1 <= k <= d, got k = {k}, d = {d}"
        )));
    }
    if num_actions < 2 {
        return Err(Error::invalid("gen_finite: need K >= 2"));
    }
    if num_tasks == 0 {
        return Err(Error::invalid("gen_finite: need T >= 1"));
    }
    let root = Rng::new(seed);
    let b = sample_haar_orthonormal(d, k, &mut root.derive_child("B"))?;
    let mut w_rng = root.derive_child("W");
    let cols: Vec<Vec<f64>> = (0..num_tasks)
        .map(|_| sample_sphere(k, 1.0, &mut w_rng))
        .collect::<Result<_>>()?;
    let w = Mat::from_cols(&cols)?;
    let mut chol = Mat::zeros(d, d);
    let s = 1.0 / (d as f64).sqrt();
    for i in 0..d {
        chol.set(i, i, s);
    }
    let shared = Arc::new(chol);
    HiddenInstance::from_parts(
        seed,
        b,
        w,
        InstanceKind::Finite {
            num_actions,
            cov_chol: vec![shared; num_tasks],
        },
    )
}

/// Synthetic infinite-action instance: Haar `B`, unit-sphere `w_t` redrawn
/// until the task-diversity condition `λ_min(W·Wᵀ/T) ≥ 0.1/k` holds, action
/// sets `Q_t = λ0·I`.
pub fn gen_infinite(
    d: usize,
    k: usize,
    num_tasks: usize,
    lambda0: f64,
    seed: u64,
) -> Result<HiddenInstance> {
    if k == 0 || k > d {
        return Err(Error::invalid(format!(
            "gen_infinite: need 1 <= k <= d, got k = {k}, d = {d}"
        )));
    }
    if num_tasks < k {
        return Err(Error::invalid(format!(
            "gen_infinite: T = {num_tasks} < k = {k} cannot satisfy the task-diversity assumption"
        )));
    }
    if lambda0 <= 0.0 || lambda0.is_nan() || lambda0.is_infinite() {
        return Err(Error::invalid("gen_infinite: λ0 must be positive"));
    }
    let root = Rng::new(seed);
    let b = sample_haar_orthonormal(d, k, &mut root.derive_child("B"))?;
    let mut w = None;
    for attempt in 0..DIVERSITY_ATTEMPTS {
        let mut w_rng = root.derive_child(&format!("W:attempt:{attempt}"));
        let cols: Vec<Vec<f64>> = (0..num_tasks)
            .map(|_| sample_sphere(k, 1.0, &mut w_rng))
            .collect::<Result<_>>()?;
        let candidate = Mat::from_cols(&cols)?;
        let (lo, _) = eigenvalue_range(&scaled_coefficient_gram(&candidate));
        if lo >= DIVERSITY_NU / k as f64 {
            w = Some(candidate);
            break;
        }
    }
    let w = w.ok_or_else(|| {
        Error::invalid(format!(
            "gen_infinite: no coefficient draw met the diversity target in {DIVERSITY_ATTEMPTS} attempts"
        ))
    })?;

    let mut q = Mat::zeros(d, d);
    let mut q_inv = Mat::zeros(d, d);
    for i in 0..d {
        q.set(i, i, lambda0);
        q_inv.set(i, i, 1.0 / lambda0);
    }
    let theta = b.mat().matmul(&w);
    let optimal_values: Vec<f64> = (0..num_tasks)
        .map(|t| ellipsoid_argmax(&theta.col(t), &q).map(|r| r.value))
        .collect::<Result<_>>()?;
    let q = Arc::new(q);
    let q_inv = Arc::new(q_inv);
    HiddenInstance::from_parts(
        seed,
        b,
        w,
        InstanceKind::Infinite {
            q: vec![q; num_tasks],
            q_inv: vec![q_inv; num_tasks],
            lambda0,
            optimal_values,
        },
    )
}

/// Draw the offered contexts for round `n`. Deterministic in
/// `(instance, n, rng seed)` regardless of call order.
pub fn draw_round(inst: &HiddenInstance, n: usize, rng: &Rng) -> Result<DrawnRound> {
    let round_rng = rng.derive_child(&format!("round:{n}"));
    match &inst.kind {
        InstanceKind::Finite {
            num_actions,
            cov_chol,
        } => {
            let d = inst.dim();
            let mean = vec![0.0; d];
            let mut tasks = Vec::with_capacity(inst.num_tasks());
            for (t, chol) in cov_chol.iter().enumerate() {
                let mut task_rng = round_rng.derive_child(&format!("task:{t}"));
                let actions: Vec<Vec<f64>> = (0..*num_actions)
                    .map(|_| sample_gaussian(&mean, chol, &mut task_rng))
                    .collect::<Result<_>>()?;
                tasks.push(TaskContexts::Actions(actions));
            }
            Ok(DrawnRound {
                contexts: RoundContexts { round: n, tasks },
                secret: RoundSecret::None,
            })
        }
        InstanceKind::Infinite { q, lambda0, .. } => {
            let tasks = (0..inst.num_tasks())
                .map(|t| TaskContexts::Ellipsoid {
                    q: Arc::clone(&q[t]),
                    lambda0: *lambda0,
                })
                .collect();
            Ok(DrawnRound {
                contexts: RoundContexts { round: n, tasks },
                secret: RoundSecret::None,
            })
        }
        InstanceKind::Mnist(m) => {
            // Mix the instance seed in so distinct instances have independent
            // image streams even under a shared environment seed.
            let stream = rng.derive_child(&format!("mnist:{}/round:{n}", inst.seed));
            let mut tasks = Vec::with_capacity(m.num_tasks());
            let mut labels = Vec::with_capacity(m.num_tasks());
            for t in 0..m.num_tasks() {
                let mut task_rng = stream.derive_child(&format!("task:{t}"));
                let (pair, lab) = m.draw_pair(t, &mut task_rng)?;
                tasks.push(TaskContexts::Actions(pair));
                labels.push(lab);
            }
            Ok(DrawnRound {
                contexts: RoundContexts { round: n, tasks },
                secret: RoundSecret::MnistLabels(labels),
            })
        }
    }
}

fn resolve_chosen<'a>(
    contexts: &'a TaskContexts,
    action: &'a Action,
    task: usize,
) -> Result<&'a [f64]> {
    match (contexts, action) {
        (TaskContexts::Actions(offers), Action::Index(i)) => offers
            .get(*i)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::invalid(format!("task {task}: action index {i} out of range"))),
        (TaskContexts::Ellipsoid { .. }, Action::Vector(v)) => Ok(v.as_slice()),
        _ => Err(Error::invalid(format!(
            "task {task}: action kind does not match the offered contexts"
        ))),
    }
}

/// Commit one action per task and receive rewards. Synthetic rewards are
/// `⟨a, θ_t⟩` plus scaled standard normal noise; MNIST rewards are the
/// deterministic larger-digit indicator.
pub fn pull(
    inst: &HiddenInstance,
    drawn: &DrawnRound,
    actions: &[Action],
    rng: &Rng,
) -> Result<Feedback> {
    let t_count = inst.num_tasks();
    if actions.len() != t_count {
        return Err(Error::invalid(format!(
            "pull: {} actions for {t_count} tasks",
            actions.len()
        )));
    }
    let mut noise_rng = rng.derive_child(&format!("noise:{}", drawn.contexts.round));
    let mut rewards = Vec::with_capacity(t_count);
    match &inst.kind {
        InstanceKind::Mnist(_) => {
            let RoundSecret::MnistLabels(labels) = &drawn.secret else {
                return Err(Error::invalid(
                    "pull: round was not drawn from this instance",
                ));
            };
            for (t, action) in actions.iter().enumerate() {
                let Action::Index(i) = action else {
                    return Err(Error::invalid(format!(
                        "task {t}: MNIST actions are indices"
                    )));
                };
                if *i >= 2 {
                    return Err(Error::invalid(format!(
                        "task {t}: action index {i} out of range"
                    )));
                }
                let pair = labels[t];
                let larger = pair[0].max(pair[1]);
                rewards.push(if pair[*i] == larger { 1.0 } else { 0.0 });
            }
        }
        InstanceKind::Finite { .. } => {
            for (t, action) in actions.iter().enumerate() {
                let chosen = resolve_chosen(&drawn.contexts.tasks[t], action, t)?;
                let mean = dot(chosen, &inst.theta.col(t));
                rewards.push(mean + inst.noise_scale * noise_rng.standard_normal());
            }
        }
        InstanceKind::Infinite { q_inv, .. } => {
            for (t, action) in actions.iter().enumerate() {
                let chosen = resolve_chosen(&drawn.contexts.tasks[t], action, t)?;
                let qa = q_inv[t].mul_vec(chosen);
                let quad = dot(chosen, &qa);
                if quad > 1.0 + 1e-9 {
                    return Err(Error::ConstraintViolation(format!(
                        "task {t}: action has aᵀQ⁻¹a = {quad} > 1"
                    )));
                }
                let mean = dot(chosen, &inst.theta.col(t));
                rewards.push(mean + inst.noise_scale * noise_rng.standard_normal());
            }
        }
    }
    Ok(Feedback { rewards })
}

/// Per-task instantaneous regret of the committed actions: best available
/// expected reward minus the chosen expected reward.
pub fn instant_regret(
    inst: &HiddenInstance,
    drawn: &DrawnRound,
    actions: &[Action],
) -> Result<Vec<f64>> {
    let t_count = inst.num_tasks();
    if actions.len() != t_count {
        return Err(Error::invalid(format!(
            "instant_regret: {} actions for {t_count} tasks",
            actions.len()
        )));
    }
    let mut out = Vec::with_capacity(t_count);
    match &inst.kind {
        InstanceKind::Mnist(_) => {
            let RoundSecret::MnistLabels(labels) = &drawn.secret else {
                return Err(Error::invalid(
                    "instant_regret: round was not drawn from this instance",
                ));
            };
            for (t, action) in actions.iter().enumerate() {
                let Action::Index(i) = action else {
                    return Err(Error::invalid(format!(
                        "task {t}: MNIST actions are indices"
                    )));
                };
                if *i >= 2 {
                    return Err(Error::invalid(format!(
                        "task {t}: action index {i} out of range"
                    )));
                }
                let pair = labels[t];
                let larger = pair[0].max(pair[1]);
                out.push(if pair[*i] == larger { 0.0 } else { 1.0 });
            }
        }
        InstanceKind::Finite { .. } => {
            for (t, action) in actions.iter().enumerate() {
                let theta = inst.theta.col(t);
                let TaskContexts::Actions(offers) = &drawn.contexts.tasks[t] else {
                    return Err(Error::invalid("finite round lacks offered contexts"));
                };
                let chosen = resolve_chosen(&drawn.contexts.tasks[t], action, t)?;
                let best = offers
                    .iter()
                    .map(|x| dot(x, &theta))
                    .fold(f64::NEG_INFINITY, f64::max);
                out.push((best - dot(chosen, &theta)).max(0.0));
            }
        }
        InstanceKind::Infinite {
            optimal_values,
            q_inv,
            ..
        } => {
            for (t, action) in actions.iter().enumerate() {
                let chosen = resolve_chosen(&drawn.contexts.tasks[t], action, t)?;
                let qa = q_inv[t].mul_vec(chosen);
                if dot(chosen, &qa) > 1.0 + 1e-9 {
                    return Err(Error::ConstraintViolation(format!(
                        "task {t}: infeasible action in regret accounting"
                    )));
                }
                out.push((optimal_values[t] - dot(chosen, &inst.theta.col(t))).max(0.0));
            }
        }
    }
    Ok(out)
}

/// Result of maximizing `⟨a, θ⟩` over the ellipsoid `{a : aᵀQ⁻¹a ≤ 1}`.
#[derive(Debug, Clone)]
pub struct EllipsoidArgmax {
    pub action: Vec<f64>,
    pub value: f64,
    /// Set when θ = 0, where every feasible action is optimal.
    pub degenerate: bool,
}

/// Closed-form maximizer `a* = Q·θ / √(θᵀQθ)` with value `√(θᵀQθ)`; the
/// returned action sits exactly on the ellipsoid boundary.
pub fn ellipsoid_argmax(theta: &[f64], q: &Mat) -> Result<EllipsoidArgmax> {
    let d = theta.len();
    if q.rows() != d || q.cols() != d {
        return Err(Error::invalid(format!(
            "ellipsoid_argmax: Q is {}x{} but θ has length {d}",
            q.rows(),
            q.cols()
        )));
    }
    let scale = q.max_abs().max(1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            if (q.at(i, j) - q.at(j, i)).abs() > 1e-8 * scale {
                return Err(Error::invalid("ellipsoid_argmax: Q must be symmetric"));
            }
        }
    }
    if norm(theta) == 0.0 {
        return Ok(EllipsoidArgmax {
            action: vec![0.0; d],
            value: 0.0,
            degenerate: true,
        });
    }
    let qtheta = q.mul_vec(theta);
    let quad = dot(theta, &qtheta);
    if quad <= 0.0 || quad.is_nan() {
        return Err(Error::invalid(
            "ellipsoid_argmax: Q is not positive definite along θ",
        ));
    }
    let s = quad.sqrt();
    Ok(EllipsoidArgmax {
        action: qtheta.iter().map(|v| v / s).collect(),
        value: s,
        degenerate: false,
    })
}
