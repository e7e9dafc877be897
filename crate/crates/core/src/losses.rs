//! Training objectives and their weighted composition.
//!
//! Batched terms take N×C×H×W tensors and return the batch-mean value with
//! the gradient with respect to `sr`. Backend terms (content, face) need RGB
//! faces at the backend's input size.

use std::collections::BTreeMap;

use ndarray::{Array1, Array3, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::backends::{Embedder, Embedding, FeatureExtractor};
use crate::error::{Error, Result};
use crate::models::sigmoid;
use crate::tensor::{Float, Tensor};

pub const PIXEL: &str = "pixel";
pub const ADVERSARIAL: &str = "adversarial";
pub const CONTENT: &str = "content";
pub const FACE: &str = "face";
pub const TERMS: [&str; 4] = [PIXEL, ADVERSARIAL, CONTENT, FACE];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub pixel: f64,
    pub adversarial: f64,
    pub content: f64,
    pub face: f64,
}

impl LossWeights {
    pub const MSE: LossWeights = LossWeights { pixel: 1.0, adversarial: 0.0, content: 0.0, face: 0.0 };

    /// MSE plus a 1e-3 adversarial term and a rescaled feature-space term.
    pub const SRGAN: LossWeights = LossWeights { pixel: 1.0, adversarial: 1e-3, content: 6e-3, face: 0.0 };

    pub fn with_face(mut self, w: f64) -> Self {
        self.face = w;
        self
    }

    pub fn get(&self, term: &str) -> f64 {
        match term {
            PIXEL => self.pixel,
            ADVERSARIAL => self.adversarial,
            CONTENT => self.content,
            FACE => self.face,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.pixel, self.adversarial, self.content, self.face];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Backend handles for the terms that need a pretrained network.
#[derive(Clone, Copy, Default)]
pub struct Backends<'a> {
    pub features: Option<&'a dyn FeatureExtractor>,
    pub embedder: Option<&'a dyn Embedder>,
}

impl<'a> Backends<'a> {
    pub fn check(&self, weights: &LossWeights) -> Result<()> {
        weights.validate()?;
        if weights.content > 0.0 && self.features.is_none() {
            return Err(Error::Config("content weight is nonzero but no feature extractor is configured".into()));
        }
        if weights.face > 0.0 && self.embedder.is_none() {
            return Err(Error::Config("face weight is nonzero but no embedder is configured".into()));
        }
        Ok(())
    }
}

/// Per-term values (unweighted) and their weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: BTreeMap<String, f64>,
    pub total: f64,
}

fn same_shape<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Argument(format!("shape mismatch: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

pub fn pixel_loss<F: Float>(sr: &Tensor<F>, hr: &Tensor<F>) -> Result<f64> {
    same_shape(sr, hr)?;
    if sr.is_empty() {
        return Err(Error::Argument("empty tensors".into()));
    }
    let sum: f64 = sr.iter().zip(hr.iter()).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    Ok(sum / sr.len() as f64)
}

pub fn pixel_term<F: Float>(sr: &Tensor<F>, hr: &Tensor<F>) -> Result<(f64, Tensor<F>)> {
    let value = pixel_loss(sr, hr)?;
    let k = F::lit(2.0 / sr.len() as f64);
    Ok((value, (sr - hr).mapv(|d| d * k)))
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Numeric(format!("discriminator output {p} is outside (0,1)")));
    }
    Ok(())
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// `(gen_loss, disc_loss)` from discriminator probabilities.
///
/// `disc_loss = ½·(mean(−log d_real) + mean(−log(1−d_fake)))` and the
/// non-saturating `gen_loss = mean(−log d_fake)`.
pub fn adversarial_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Argument("adversarial loss needs at least one real and one fake output".into()));
    }
    for &p in d_real.iter().chain(d_fake) {
        check_probability(p)?;
    }
    let gen = mean(d_fake.iter().map(|p| -p.ln()));
    let disc = 0.5 * (mean(d_real.iter().map(|p| -p.ln())) + mean(d_fake.iter().map(|p| -(1.0 - p).ln())));
    Ok((gen, disc))
}

/// `−log σ(z)` without overflow.
fn neg_log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Same values as [`adversarial_losses`] evaluated on logits, stable for
/// saturated discriminators.
pub fn adversarial_losses_from_logits(real: &[f64], fake: &[f64]) -> Result<(f64, f64)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Argument("adversarial loss needs at least one real and one fake output".into()));
    }
    let gen = mean(fake.iter().map(|&z| neg_log_sigmoid(z)));
    let disc = 0.5 * (mean(real.iter().map(|&z| neg_log_sigmoid(z))) + mean(fake.iter().map(|&z| neg_log_sigmoid(-z))));
    Ok((gen, disc))
}

/// Gradients of the discriminator loss with respect to the real and fake logits.
pub fn disc_logit_grads(real: &[f64], fake: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    (
        real.iter().map(|&z| 0.5 * (sigmoid(z) - 1.0) / nr).collect(),
        fake.iter().map(|&z| 0.5 * sigmoid(z) / nf).collect(),
    )
}

/// Gradient of the generator loss with respect to the fake logits.
pub fn gen_logit_grads(fake: &[f64]) -> Vec<f64> {
    let n = fake.len() as f64;
    fake.iter().map(|&z| (sigmoid(z) - 1.0) / n).collect()
}

/// Mean squared distance between feature maps of two RGB images.
pub fn content_loss(sr: ArrayView3<f64>, hr: ArrayView3<f64>, feat: &dyn FeatureExtractor) -> Result<f64> {
    let (a, b) = (feat.features(sr)?, feat.features(hr)?);
    Ok((&a - &b).mapv(|d| d * d).mean().unwrap_or(0.0))
}

fn sample<F: Float>(t: &Tensor<F>, n: usize) -> Array3<f64> {
    t.index_axis(Axis(0), n).mapv(|v| v.as_f64())
}

fn write_sample<F: Float>(out: &mut Tensor<F>, n: usize, g: &Array3<f64>) {
    out.index_axis_mut(Axis(0), n).zip_mut_with(g, |o, &v| *o = F::lit(v));
}

pub fn content_term<F: Float>(sr: &Tensor<F>, hr: &Tensor<F>, feat: &dyn FeatureExtractor) -> Result<(f64, Tensor<F>)> {
    same_shape(sr, hr)?;
    let batch = sr.dim().0;
    let mut grad = Tensor::<F>::zeros(sr.raw_dim());
    let mut total = 0.0;
    for n in 0..batch {
        let (s, h) = (sample(sr, n), sample(hr, n));
        let (fs, fh) = (feat.features(s.view())?, feat.features(h.view())?);
        let diff: Array1<f64> = &fs - &fh;
        let len = diff.len() as f64;
        total += diff.mapv(|d| d * d).sum() / len;
        let g = feat.vjp(s.view(), &diff.mapv(|d| 2.0 * d / (len * batch as f64)))?;
        write_sample(&mut grad, n, &g);
    }
    Ok((total / batch as f64, grad))
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Argument(format!("embedding sizes differ: {} vs {}", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric("zero-norm embedding".into()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `1 − cos(φ(sr), φ(hr))`, in [0,2].
pub fn face_loss(sr: ArrayView3<f64>, hr: ArrayView3<f64>, embedder: &dyn Embedder) -> Result<f64> {
    let (a, b) = (embedder.embed(sr)?, embedder.embed(hr)?);
    Ok(1.0 - cosine_similarity(&a, &b)?)
}

/// Batch-mean face loss. `ids` name the samples in zero-norm diagnostics.
pub fn face_term<F: Float>(
    sr: &Tensor<F>,
    hr: &Tensor<F>,
    embedder: &dyn Embedder,
    ids: Option<&[String]>,
) -> Result<(f64, Tensor<F>)> {
    same_shape(sr, hr)?;
    let batch = sr.dim().0;
    let mut grad = Tensor::<F>::zeros(sr.raw_dim());
    let mut total = 0.0;
    for n in 0..batch {
        let (s, h) = (sample(sr, n), sample(hr, n));
        let (a, b) = (embedder.embed(s.view())?, embedder.embed(h.view())?);
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            let id = ids.and_then(|ids| ids.get(n)).cloned().unwrap_or_else(|| format!("#{n}"));
            return Err(Error::Numeric(format!("zero-norm embedding for sample {id}")));
        }
        let cos = cosine_similarity(&a, &b)?;
        total += 1.0 - cos;
        // d(1 − cos)/da = −(b/(|a||b|) − cos·a/|a|²)
        let k = batch as f64;
        let da: Vec<f64> = a
            .0
            .iter()
            .zip(&b.0)
            .map(|(x, y)| -(y / (na * nb) - cos * x / (na * na)) / k)
            .collect();
        let g = embedder.vjp(s.view(), &da)?;
        write_sample(&mut grad, n, &g);
    }
    Ok((total / batch as f64, grad))
}

/// Pixel, content and face terms with the weighted gradient with respect to
/// `sr`. Terms with zero weight are skipped.
pub fn image_terms<F: Float>(
    sr: &Tensor<F>,
    hr: &Tensor<F>,
    weights: &LossWeights,
    backends: &Backends<'_>,
    ids: Option<&[String]>,
) -> Result<(BTreeMap<String, f64>, Tensor<F>)> {
    same_shape(sr, hr)?;
    let mut terms = BTreeMap::new();
    let mut grad = Tensor::<F>::zeros(sr.raw_dim());
    let mut add = |name: &str, w: f64, (v, g): (f64, Tensor<F>)| {
        terms.insert(name.to_string(), v);
        let w = F::lit(w);
        grad.zip_mut_with(&g, |acc, &x| *acc += w * x);
    };
    if weights.pixel > 0.0 {
        add(PIXEL, weights.pixel, pixel_term(sr, hr)?);
    }
    if weights.content > 0.0 {
        let feat = backends.features.ok_or_else(|| Error::Config("content term needs a feature extractor".into()))?;
        add(CONTENT, weights.content, content_term(sr, hr, feat)?);
    }
    if weights.face > 0.0 {
        let emb = backends.embedder.ok_or_else(|| Error::Config("face term needs an embedder".into()))?;
        add(FACE, weights.face, face_term(sr, hr, emb, ids)?);
    }
    Ok((terms, grad))
}

/// Weighted sum of the enabled terms. `d_fake` holds discriminator
/// probabilities for the SR images and is required when the adversarial
/// weight is positive.
pub fn composite<F: Float>(
    sr: &Tensor<F>,
    hr: &Tensor<F>,
    d_fake: Option<&[f64]>,
    weights: &LossWeights,
    backends: &Backends<'_>,
) -> Result<LossBreakdown> {
    backends.check(weights)?;
    let (mut terms, _) = image_terms(sr, hr, weights, backends, None)?;
    if weights.adversarial > 0.0 {
        let d_fake = d_fake.ok_or_else(|| Error::Config("adversarial term needs discriminator outputs".into()))?;
        for &p in d_fake {
            check_probability(p)?;
        }
        if d_fake.is_empty() {
            return Err(Error::Argument("no discriminator outputs".into()));
        }
        terms.insert(ADVERSARIAL.into(), mean(d_fake.iter().map(|p| -p.ln())));
    }
    let total = terms.iter().map(|(k, v)| weights.get(k) * v).sum();
    Ok(LossBreakdown { terms, total })
}
