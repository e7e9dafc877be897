//! Pretrained-network boundary.
//!
//! Content loss needs a [`FeatureExtractor`], face loss and verification need
//! an [`Embedder`]. Both consume one C×H×W RGB image in [0,1] and expose a
//! vector-Jacobian product so they can sit inside a training objective.
//! Adapters for pretrained weights implement these traits; the stubs here
//! are seed-pinned linear maps so every piece of loss math stays testable
//! without downloading anything.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3, ArrayView3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, derived_rng, rng_from_seed};

pub const EMBEDDING_DIM: usize = 512;
pub const FACE_SIZE: usize = 160;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("embedding has non-finite entries".into()));
        }
        Ok(Embedding(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> Embedding {
        Embedding(self.0.iter().map(|x| x * k).collect())
    }
}

pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> String;

    /// Flattened feature map at the configured layer.
    fn features(&self, image: ArrayView3<f64>) -> Result<Array1<f64>>;

    /// Gradient of `<grad, features(image)>` with respect to the image.
    fn vjp(&self, image: ArrayView3<f64>, grad: &Array1<f64>) -> Result<Array3<f64>>;
}

pub trait Embedder: Send + Sync {
    fn name(&self) -> String;

    fn embed(&self, image: ArrayView3<f64>) -> Result<Embedding>;

    /// Embedding for an image with known provenance. Replay backends key on
    /// the label; image backends ignore it.
    fn embed_labeled(&self, image: ArrayView3<f64>, _label: Option<&str>) -> Result<Embedding> {
        self.embed(image)
    }

    /// Gradient of `<grad, embed(image)>` with respect to the image.
    fn vjp(&self, _image: ArrayView3<f64>, _grad: &[f64]) -> Result<Array3<f64>> {
        Err(Error::Backend(format!("{} is not differentiable", self.name())))
    }
}

fn check_face(image: &ArrayView3<f64>, who: &str) -> Result<()> {
    if image.dim() != (3, FACE_SIZE, FACE_SIZE) {
        return Err(Error::Backend(format!(
            "{who} expects a 3x{FACE_SIZE}x{FACE_SIZE} image, got {:?}",
            image.dim()
        )));
    }
    Ok(())
}

/// Average over non-overlapping `p`×`p` patches: C×H×W → C×(H/p)×(W/p).
fn avg_pool(image: &ArrayView3<f64>, p: usize) -> Array3<f64> {
    let (c, h, w) = image.dim();
    let (ph, pw) = (h / p, w / p);
    let area = (p * p) as f64;
    Array3::from_shape_fn((c, ph, pw), |(ch, y, x)| {
        let mut acc = 0.0;
        for dy in 0..p {
            for dx in 0..p {
                acc += image[[ch, y * p + dy, x * p + dx]];
            }
        }
        acc / area
    })
}

/// Adjoint of [`avg_pool`].
fn avg_pool_adjoint(grad: &Array3<f64>, p: usize, h: usize, w: usize) -> Array3<f64> {
    let c = grad.dim().0;
    let area = (p * p) as f64;
    Array3::from_shape_fn((c, h, w), |(ch, y, x)| grad[[ch, y / p, x / p]] / area)
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64, scale: f64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

/// Average-pooled 8×8 patches, each projected from RGB to 8 channels by a
/// fixed Gaussian matrix.
#[derive(Debug, Clone)]
pub struct StubFeatureExtractor {
    patch: usize,
    projection: Array2<f64>,
}

impl StubFeatureExtractor {
    pub const CHANNELS: usize = 8;

    pub fn new(seed: u64) -> Self {
        StubFeatureExtractor {
            patch: 8,
            projection: gaussian_matrix(Self::CHANNELS, 3, derive_seed(seed, "stub/features"), 1.0),
        }
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    pub fn patch(&self) -> usize {
        self.patch
    }
}

impl FeatureExtractor for StubFeatureExtractor {
    fn name(&self) -> String {
        "stub-features".into()
    }

    fn features(&self, image: ArrayView3<f64>) -> Result<Array1<f64>> {
        check_face(&image, "feature extractor")?;
        let pooled = avg_pool(&image, self.patch);
        let (c, ph, pw) = pooled.dim();
        let flat = pooled.into_shape_with_order((c, ph * pw)).expect("contiguous");
        let feats = self.projection.dot(&flat);
        Ok(Array1::from_iter(feats.iter().copied()))
    }

    fn vjp(&self, image: ArrayView3<f64>, grad: &Array1<f64>) -> Result<Array3<f64>> {
        check_face(&image, "feature extractor")?;
        let (_, h, w) = image.dim();
        let (ph, pw) = (h / self.patch, w / self.patch);
        let g = grad
            .view()
            .into_shape_with_order((Self::CHANNELS, ph * pw))
            .map_err(|e| Error::Backend(e.to_string()))?;
        let pooled_grad = self.projection.t().dot(&g).into_shape_with_order((3, ph, pw)).expect("contiguous");
        Ok(avg_pool_adjoint(&pooled_grad, self.patch, h, w))
    }
}

/// 16×16 average pooling (300 values) followed by a fixed 512×300 Gaussian
/// projection.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    patch: usize,
    projection: Array2<f64>,
}

impl StubEmbedder {
    pub fn new(seed: u64) -> Self {
        let patch = 16;
        let inputs = 3 * (FACE_SIZE / patch) * (FACE_SIZE / patch);
        StubEmbedder {
            patch,
            projection: gaussian_matrix(EMBEDDING_DIM, inputs, derive_seed(seed, "stub/embedder"), (inputs as f64).sqrt().recip()),
        }
    }

    fn pooled(&self, image: &ArrayView3<f64>) -> Array1<f64> {
        let pooled = avg_pool(image, self.patch);
        Array1::from_iter(pooled.iter().copied())
    }
}

impl Embedder for StubEmbedder {
    fn name(&self) -> String {
        "stub-embedder".into()
    }

    fn embed(&self, image: ArrayView3<f64>) -> Result<Embedding> {
        check_face(&image, "embedder")?;
        Embedding::new(self.projection.dot(&self.pooled(&image)).to_vec())
    }

    fn vjp(&self, image: ArrayView3<f64>, grad: &[f64]) -> Result<Array3<f64>> {
        check_face(&image, "embedder")?;
        if grad.len() != EMBEDDING_DIM {
            return Err(Error::Backend(format!("embedding gradient has length {}", grad.len())));
        }
        let g = Array1::from_vec(grad.to_vec());
        let side = FACE_SIZE / self.patch;
        let pooled_grad = self.projection.t().dot(&g).into_shape_with_order((3, side, side)).expect("contiguous");
        Ok(avg_pool_adjoint(&pooled_grad, self.patch, FACE_SIZE, FACE_SIZE))
    }
}

/// Content-addressed random embeddings: each distinct image gets an
/// independent Gaussian vector. Models an embedder with no identity signal.
#[derive(Debug, Clone)]
pub struct RandomEmbedder {
    seed: u64,
}

impl RandomEmbedder {
    pub fn new(seed: u64) -> Self {
        RandomEmbedder { seed }
    }
}

impl Embedder for RandomEmbedder {
    fn name(&self) -> String {
        "random-embedder".into()
    }

    fn embed(&self, image: ArrayView3<f64>) -> Result<Embedding> {
        let mut sum = crate::tensor::Checksum::default();
        sum.update(image.iter().copied());
        let mut rng = rng_from_seed(self.seed ^ sum.value());
        Embedding::new((0..EMBEDDING_DIM).map(|_| StandardNormal.sample(&mut rng)).collect())
    }
}

/// Replays stored embeddings keyed by subject label.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReplayEmbedder {
    pub table: BTreeMap<String, Embedding>,
}

impl ReplayEmbedder {
    /// One well-separated vector per subject: exact one-hot vectors while they
    /// fit in the embedding dimension, seeded Gaussian vectors beyond that.
    pub fn perfect<'a>(subjects: impl IntoIterator<Item = &'a str>) -> Self {
        let mut table = BTreeMap::new();
        for (i, s) in subjects.into_iter().enumerate() {
            let v = if i < EMBEDDING_DIM {
                let mut v = vec![0.0; EMBEDDING_DIM];
                v[i] = 1.0;
                v
            } else {
                let mut rng = derived_rng(i as u64, "replay");
                (0..EMBEDDING_DIM).map(|_| rng.random::<f64>() - 0.5).collect()
            };
            table.insert(s.to_string(), Embedding(v));
        }
        ReplayEmbedder { table }
    }
}

impl Embedder for ReplayEmbedder {
    fn name(&self) -> String {
        "replay-embedder".into()
    }

    fn embed(&self, _image: ArrayView3<f64>) -> Result<Embedding> {
        Err(Error::Backend("replay embedder needs a subject label".into()))
    }

    fn embed_labeled(&self, _image: ArrayView3<f64>, label: Option<&str>) -> Result<Embedding> {
        let label = label.ok_or_else(|| Error::Backend("replay embedder needs a subject label".into()))?;
        self.table
            .get(label)
            .cloned()
            .ok_or_else(|| Error::Backend(format!("no stored embedding for {label:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn face(seed: u64) -> Array3<f64> {
        let mut rng = rng_from_seed(seed);
        Array3::from_shape_simple_fn((3, FACE_SIZE, FACE_SIZE), || rng.random::<f64>())
    }

    #[test]
    fn stub_embedder_is_linear_and_512_wide() {
        let e = StubEmbedder::new(1);
        let (a, b) = (face(1), face(2));
        let ea = e.embed(a.view()).unwrap();
        assert_eq!(ea.dim(), EMBEDDING_DIM);
        let eb = e.embed(b.view()).unwrap();
        let esum = e.embed((&a + &b).view()).unwrap();
        for i in 0..EMBEDDING_DIM {
            assert!((esum.0[i] - ea.0[i] - eb.0[i]).abs() < 1e-9);
        }
        assert_eq!(ea, e.embed(a.view()).unwrap());
        assert!(e.embed(Array3::zeros((3, 40, 40)).view()).is_err());
    }

    #[test]
    fn vjp_is_adjoint_of_forward() {
        // <g, J x> == <J^T g, x> for the linear stubs.
        let x = face(3);
        let e = StubEmbedder::new(2);
        let g: Vec<f64> = (0..EMBEDDING_DIM).map(|i| (i as f64 * 0.37).sin()).collect();
        let lhs: f64 = e.embed(x.view()).unwrap().0.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs = (e.vjp(x.view(), &g).unwrap() * &x).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));

        let f = StubFeatureExtractor::new(2);
        let feats = f.features(x.view()).unwrap();
        let g = Array1::from_shape_fn(feats.len(), |i| (i as f64 * 0.11).cos());
        let lhs = feats.dot(&g);
        let rhs = (f.vjp(x.view(), &g).unwrap() * &x).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn replay_and_random_embedders() {
        let r = ReplayEmbedder::perfect(["a", "b"]);
        let img = face(4);
        assert_eq!(r.embed_labeled(img.view(), Some("b")).unwrap().0[1], 1.0);
        assert!(r.embed(img.view()).is_err());
        assert!(r.embed_labeled(img.view(), Some("zzz")).is_err());
        let rnd = RandomEmbedder::new(1);
        assert_eq!(rnd.embed(img.view()).unwrap(), rnd.embed(img.view()).unwrap());
        assert_ne!(rnd.embed(img.view()).unwrap(), rnd.embed(face(5).view()).unwrap());
    }
}
