//! Pairwise-digit bandit tasks built from MNIST-format data. One task per
//! unordered digit pair (i, j); each round offers one image of each digit in
//! random order, and picking the larger digit earns reward 1.

use super::idx::IdxData;
use super::{HiddenInstance, InstanceKind};
use crate::error::{Error, Result};
use crate::numerics::{top_k_eig, Mat, OrthonormalBasis, Rng};
use std::sync::Arc;

// At most this many images per digit feed the optional projection estimate.
const PCA_SAMPLE_PER_DIGIT: usize = 256;

#[derive(Debug, Clone)]
pub struct MnistTasks {
    image_len: usize,
    payload: Arc<Vec<u8>>,
    /// Per selected digit, the indices of its images in the payload.
    pools: Vec<(u8, Vec<usize>)>,
    pairs: Vec<(u8, u8)>,
    /// Optional projection (image_len × dim) applied to scaled pixels.
    projection: Option<Arc<Mat>>,
    dim: usize,
}

impl MnistTasks {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_tasks(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(u8, u8)] {
        &self.pairs
    }

    pub fn pool_size(&self, digit: u8) -> Option<usize> {
        self.pools
            .iter()
            .find(|(d, _)| *d == digit)
            .map(|(_, v)| v.len())
    }

    pub(super) fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::invalid("MNIST instance has no tasks"));
        }
        for (d, pool) in &self.pools {
            if pool.is_empty() {
                return Err(Error::invalid(format!("digit {d} has an empty image pool")));
            }
        }
        for (i, j) in &self.pairs {
            if i >= j {
                return Err(Error::invalid(format!(
                    "task pair ({i}, {j}) is not ordered"
                )));
            }
        }
        Ok(())
    }

    fn pool(&self, digit: u8) -> &[usize] {
        &self
            .pools
            .iter()
            .find(|(d, _)| *d == digit)
            .expect("pairs reference existing pools")
            .1
    }

    fn image_vector(&self, index: usize) -> Vec<f64> {
        let start = index * self.image_len;
        let raw = &self.payload[start..start + self.image_len];
        let scaled: Vec<f64> = raw.iter().map(|&b| f64::from(b) / 255.0).collect();
        match &self.projection {
            None => scaled,
            Some(p) => p.tr_mul_vec(&scaled),
        }
    }

    /// Draw one image of each digit of task `t`, uniformly with replacement,
    /// presented in random order. Returns the two context vectors and their
    /// digit labels in presentation order.
    pub(super) fn draw_pair(&self, t: usize, rng: &mut Rng) -> Result<(Vec<Vec<f64>>, [u8; 2])> {
        let (i, j) = *self
            .pairs
            .get(t)
            .ok_or_else(|| Error::invalid(format!("task index {t} out of range")))?;
        let pool_i = self.pool(i);
        let pool_j = self.pool(j);
        let img_i = pool_i[rng.index(pool_i.len())];
        let img_j = pool_j[rng.index(pool_j.len())];
        let swap = rng.uniform() < 0.5;
        let (first, second, labels) = if swap {
            (img_j, img_i, [j, i])
        } else {
            (img_i, img_j, [i, j])
        };
        Ok((
            vec![self.image_vector(first), self.image_vector(second)],
            labels,
        ))
    }
}

fn build_pools(images: &IdxData, labels: &IdxData, digits: &[u8]) -> Result<Vec<(u8, Vec<usize>)>> {
    if images.dims.len() != 3 {
        return Err(Error::invalid("image data must have 3 dimensions"));
    }
    if labels.dims.len() != 1 {
        return Err(Error::invalid("label data must have 1 dimension"));
    }
    if images.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let mut sorted: Vec<u8> = digits.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < 2 {
        return Err(Error::invalid("need at least two distinct digits"));
    }
    if sorted.iter().any(|d| *d > 9) {
        return Err(Error::invalid("digits must lie in 0..=9"));
    }
    let mut pools: Vec<(u8, Vec<usize>)> = sorted.iter().map(|&d| (d, Vec::new())).collect();
    for (idx, &label) in labels.payload.iter().enumerate() {
        if let Some((_, pool)) = pools.iter_mut().find(|(d, _)| *d == label) {
            pool.push(idx);
        }
    }
    for (d, pool) in &pools {
        if pool.is_empty() {
            return Err(Error::invalid(format!("no images available for digit {d}")));
        }
    }
    Ok(pools)
}

fn assemble(
    images: &IdxData,
    pools: Vec<(u8, Vec<usize>)>,
    projection: Option<Arc<Mat>>,
    dim: usize,
    seed: u64,
) -> Result<HiddenInstance> {
    let image_len = images.record_len();
    let pairs: Vec<(u8, u8)> = {
        let ds: Vec<u8> = pools.iter().map(|(d, _)| *d).collect();
        let mut out = Vec::new();
        for a in 0..ds.len() {
            for b in (a + 1)..ds.len() {
                out.push((ds[a], ds[b]));
            }
        }
        out
    };
    let num_tasks = pairs.len();
    let tasks = MnistTasks {
        image_len,
        payload: Arc::new(images.payload.clone()),
        pools,
        pairs,
        projection,
        dim,
    };
    // The true per-task coefficients are undefined for real data; the regret
    // oracle works from labels instead, so B/W/Θ are inert placeholders.
    let mut e1 = Mat::zeros(dim, 1);
    e1.set(0, 0, 1.0);
    let b = OrthonormalBasis::new(e1)?;
    let w = Mat::zeros(1, num_tasks);
    HiddenInstance::from_parts(seed, b, w, InstanceKind::Mnist(tasks))
}

/// Build one task per unordered pair of `digits` (lexicographic order), with
/// raw pixels scaled to [0, 1] as contexts. `T = C(|digits|, 2)`.
pub fn build_mnist_tasks(
    images: &IdxData,
    labels: &IdxData,
    digits: &[u8],
    seed: u64,
) -> Result<HiddenInstance> {
    let pools = build_pools(images, labels, digits)?;
    let dim = images.record_len();
    assemble(images, pools, None, dim, seed)
}

/// Same tasks, but contexts are projected to `pca_dim` leading directions of
/// the (uncentered) pixel second-moment matrix, estimated from a seeded
/// subsample of each pool.
pub fn build_mnist_tasks_with_pca(
    images: &IdxData,
    labels: &IdxData,
    digits: &[u8],
    seed: u64,
    pca_dim: usize,
) -> Result<HiddenInstance> {
    let pools = build_pools(images, labels, digits)?;
    let image_len = images.record_len();
    if pca_dim == 0 || pca_dim > image_len {
        return Err(Error::invalid(format!(
            "pca dimension {pca_dim} out of range 1..={image_len}"
        )));
    }
    let mut rng = Rng::new(seed).derive_child("pca");
    let mut moment = Mat::zeros(image_len, image_len);
    let mut count = 0usize;
    for (_, pool) in &pools {
        for _ in 0..PCA_SAMPLE_PER_DIGIT.min(pool.len()) {
            let idx = pool[rng.index(pool.len())];
            let start = idx * image_len;
            let x: Vec<f64> = images.payload[start..start + image_len]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect();
            moment.add_scaled_outer(1.0, &x, &x);
            count += 1;
        }
    }
    moment.scale(1.0 / count as f64);
    let (basis, _) = top_k_eig(&moment, pca_dim)?;
    let projection = Arc::new(basis.mat().clone());
    assemble(images, pools, Some(projection), pca_dim, seed)
}
