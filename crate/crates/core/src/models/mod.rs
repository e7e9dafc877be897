//! The super-resolution network families and their CoordConv / FaceLoss
//! variants.
//!
//! A [`SRModelSpec`] fully determines a computation graph. `Coord` variants
//! put a [`CoordChannels`](crate::nn::CoordChannels) layer in front of the
//! first convolution only; `FaceLoss` variants share the graph of their base
//! model and differ only in the training objective.

mod checkpoint;
mod nets;
mod registry;
mod upscaler;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::imaging::{resize, Image, ResizeMethod};
use crate::nn::{self, Layer};
use crate::rng::derived_rng;
use crate::tensor::{Float, Tensor};

pub use checkpoint::{checkpoint_file_name, load_checkpoint, save_checkpoint, Checkpoint};
pub use registry::{canonical_names, registry_lookup, slug, ModelChoice, BICUBIC};
pub use upscaler::Upscaler;

pub const SCALE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Family {
    Srcnn,
    SubCnn,
    Fsrcnn,
    Srgan,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Srcnn => "SRCNN",
            Family::SubCnn => "SubCNN",
            Family::Fsrcnn => "FSRCNN",
            Family::Srgan => "SRGAN",
        }
    }

    /// Channel each family is trained on.
    pub fn channel(self) -> Channel {
        match self {
            Family::Srcnn | Family::SubCnn => Channel::Y,
            Family::Fsrcnn | Family::Srgan => Channel::Rgb,
        }
    }

    /// Whether the network consumes an input already interpolated to the output size.
    pub fn pre_upsampling(self) -> bool {
        matches!(self, Family::Srcnn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Y,
    #[serde(rename = "RGB")]
    Rgb,
}

impl Channel {
    pub fn count(self) -> usize {
        match self {
            Channel::Y => 1,
            Channel::Rgb => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Y => "Y",
            Channel::Rgb => "RGB",
        }
    }
}

/// Layer widths. Defaults follow the published configurations of each family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    /// 9-1-5 kernels with `n1`/`n2` filters.
    Srcnn { n1: usize, n2: usize },
    /// Two feature convolutions then a sub-pixel output convolution.
    SubCnn { n1: usize, n2: usize },
    /// Feature width `d`, shrink width `s`, `m` mapping layers.
    Fsrcnn { d: usize, s: usize, m: usize },
    /// Residual generator and a strided discriminator of eight convolutions.
    Srgan {
        blocks: usize,
        filters: usize,
        disc_filters: usize,
    },
}

impl Arch {
    pub fn default_for(family: Family) -> Arch {
        match family {
            Family::Srcnn => Arch::Srcnn { n1: 64, n2: 32 },
            Family::SubCnn => Arch::SubCnn { n1: 64, n2: 32 },
            Family::Fsrcnn => Arch::Fsrcnn { d: 56, s: 12, m: 4 },
            Family::Srgan => Arch::Srgan {
                blocks: 16,
                filters: 64,
                disc_filters: 64,
            },
        }
    }

    fn family(&self) -> Family {
        match self {
            Arch::Srcnn { .. } => Family::Srcnn,
            Arch::SubCnn { .. } => Family::SubCnn,
            Arch::Fsrcnn { .. } => Family::Fsrcnn,
            Arch::Srgan { .. } => Family::Srgan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SRModelSpec {
    pub family: Family,
    pub coord: bool,
    pub faceloss: bool,
    pub scale: usize,
    pub channel: Channel,
    pub arch: Arch,
}

impl SRModelSpec {
    pub fn new(family: Family, coord: bool, faceloss: bool) -> Self {
        SRModelSpec {
            family,
            coord,
            faceloss,
            scale: SCALE,
            channel: family.channel(),
            arch: Arch::default_for(family),
        }
    }

    pub fn with_arch(mut self, arch: Arch) -> Self {
        self.arch = arch;
        self
    }

    /// Canonical display name, e.g. `FSRCNN Coord FaceLoss`.
    pub fn name(&self) -> String {
        let mut name = self.family.label().to_string();
        if self.coord {
            name.push_str(" Coord");
        }
        if self.faceloss {
            name.push_str(" FaceLoss");
        }
        name
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale != SCALE {
            return arg(format!("{}: only x{SCALE} upscaling is supported, got x{}", self.name(), self.scale));
        }
        if self.channel != self.family.channel() {
            return arg(format!(
                "{}: family trains on {}, spec says {}",
                self.name(),
                self.family.channel().label(),
                self.channel.label()
            ));
        }
        if self.arch.family() != self.family {
            return arg(format!("{}: layer configuration belongs to another family", self.name()));
        }
        let widths: Vec<usize> = match self.arch {
            Arch::Srcnn { n1, n2 } | Arch::SubCnn { n1, n2 } => vec![n1, n2],
            Arch::Fsrcnn { d, s, m } => vec![d, s, m.max(1)],
            Arch::Srgan { blocks, filters, disc_filters } => vec![blocks.max(1), filters, disc_filters],
        };
        if widths.contains(&0) {
            return arg(format!("{}: layer widths must be positive", self.name()));
        }
        Ok(())
    }
}

/// Super-resolution network. `forward`/`infer` follow the family's input
/// contract; [`Generator::prepare_input`] maps a 40×40 LR batch onto it.
pub struct Generator<F: Float> {
    spec: SRModelSpec,
    net: Box<dyn Layer<F>>,
}

impl<F: Float> Generator<F> {
    pub fn spec(&self) -> &SRModelSpec {
        &self.spec
    }

    pub fn network(&self) -> &dyn Layer<F> {
        self.net.as_ref()
    }

    pub fn network_mut(&mut self) -> &mut dyn Layer<F> {
        self.net.as_mut()
    }

    pub fn param_count(&self) -> usize {
        nn::param_count(self.net.as_ref())
    }

    pub fn checksum(&self) -> u64 {
        nn::param_checksum(self.net.as_ref())
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        let c = self.spec.channel.count();
        if x.dim().1 != c {
            return arg(format!("{}: expected {c} input channels, got {:?}", self.spec.name(), x.dim()));
        }
        Ok(())
    }

    /// Bicubic pre-upsampling for pre-upsampling families; identity otherwise.
    pub fn prepare_input(&self, lr: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(lr)?;
        if !self.spec.family.pre_upsampling() {
            return Ok(lr.clone());
        }
        bicubic_upscale(lr, self.spec.scale)
    }

    /// Training-mode pass on an already prepared batch.
    pub fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(x)?;
        self.net.forward(x)
    }

    pub fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        self.net.backward(grad)
    }

    /// Evaluation-mode pass on a prepared batch; output clamped to [0,1].
    pub fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(x)?;
        Ok(self.net.infer(x)?.mapv(|v| v.max(F::zero()).min(F::one())))
    }

    /// LR batch (any spatial size) to SR batch at `scale`× the size.
    pub fn upscale(&self, lr: &Tensor<F>) -> Result<Tensor<F>> {
        self.infer(&self.prepare_input(lr)?)
    }
}

/// Discriminator producing one logit per image.
pub struct Discriminator<F: Float> {
    net: Box<dyn Layer<F>>,
}

impl<F: Float> Discriminator<F> {
    pub fn network(&self) -> &dyn Layer<F> {
        self.net.as_ref()
    }

    pub fn network_mut(&mut self) -> &mut dyn Layer<F> {
        self.net.as_mut()
    }

    pub fn param_count(&self) -> usize {
        nn::param_count(self.net.as_ref())
    }

    pub fn checksum(&self) -> u64 {
        nn::param_checksum(self.net.as_ref())
    }

    /// Training-mode logits, shape N×1×1×1.
    pub fn forward_logits(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.net.forward(x)
    }

    pub fn backward(&mut self, grad_logits: &Tensor<F>) -> Result<Tensor<F>> {
        self.net.backward(grad_logits)
    }

    /// Evaluation-mode probabilities of "real", one per image, in (0,1).
    pub fn probabilities(&self, x: &Tensor<F>) -> Result<Vec<f64>> {
        let logits = self.net.infer(x)?;
        Ok(logits.iter().map(|&z| sigmoid(z.as_f64())).collect())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub struct BuiltModel<F: Float> {
    pub generator: Generator<F>,
    pub discriminator: Option<Discriminator<F>>,
}

/// Builds the generator (and discriminator for SRGAN) with weights drawn from `seed`.
pub fn build<F: Float>(spec: &SRModelSpec, seed: u64) -> Result<BuiltModel<F>> {
    spec.validate()?;
    let mut rng = derived_rng(seed, "init/generator");
    let c = spec.channel.count();
    let net: Box<dyn Layer<F>> = match spec.arch {
        Arch::Srcnn { n1, n2 } => Box::new(nets::srcnn(c, n1, n2, spec.coord, &mut rng)),
        Arch::SubCnn { n1, n2 } => Box::new(nets::subcnn(c, n1, n2, spec.scale, spec.coord, &mut rng)),
        Arch::Fsrcnn { d, s, m } => Box::new(nets::fsrcnn(c, d, s, m, spec.scale, spec.coord, &mut rng)),
        Arch::Srgan { blocks, filters, .. } => Box::new(nets::SrganGenerator::new(c, filters, blocks, spec.coord, &mut rng)),
    };
    let discriminator = match spec.arch {
        Arch::Srgan { disc_filters, .. } => {
            let mut drng = derived_rng(seed, "init/discriminator");
            Some(Discriminator {
                net: Box::new(nets::discriminator(c, disc_filters, &mut drng)),
            })
        }
        _ => None,
    };
    Ok(BuiltModel {
        generator: Generator { spec: *spec, net },
        discriminator,
    })
}

fn bicubic_upscale<F: Float>(lr: &Tensor<F>, scale: usize) -> Result<Tensor<F>> {
    let (n, c, h, w) = lr.dim();
    let mut out = Tensor::zeros((n, c, h * scale, w * scale));
    for b in 0..n {
        for ch in 0..c {
            let plane = lr.index_axis(Axis(0), b).index_axis(Axis(0), ch).mapv(|v| v.as_f64() as f32);
            let img = Image::from_luma(plane.view())?;
            let up = resize(&img, h * scale, w * scale, ResizeMethod::Bicubic)?;
            out.index_axis_mut(Axis(0), b)
                .index_axis_mut(Axis(0), ch)
                .assign(&up.channel(0).mapv(|v| F::lit(v as f64)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
