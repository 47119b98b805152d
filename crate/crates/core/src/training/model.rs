use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_positions, LossMetric, TrainingError};
use crate::hierarchy::{build_hierarchy_with, ConvTopology, MeshHierarchy, DEFAULT_BASIS_CLAMP};
use crate::mesh::{Face, Mesh, Point};
use crate::ops::{
    activation, activation_backward, init_vc_conv, init_vd, vc_conv, vc_conv_backward, vd_backward,
    vd_res, Activation, FeatureMap, VcConvParams, VdParams,
};

/// Network shape. Level `l` has `widths[l]` features per vertex; level 0 is
/// the full mesh and carries xyz, so `widths[0]` must be 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub level_ratios: Vec<f64>,
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_clamp")]
    pub basis_clamp: (usize, usize),
}

fn default_clamp() -> (usize, usize) {
    DEFAULT_BASIS_CLAMP
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            level_ratios: vec![1.0, 0.25, 0.0625, 0.0156],
            widths: vec![3, 16, 32, 64],
            activation: Activation::default(),
            basis_clamp: DEFAULT_BASIS_CLAMP,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: String| Err(TrainingError::InvalidConfig(m));
        if self.level_ratios.len() < 2 {
            return bad("at least two levels are required".into());
        }
        if self.widths.len() != self.level_ratios.len() {
            return bad(format!(
                "{} widths for {} levels",
                self.widths.len(),
                self.level_ratios.len()
            ));
        }
        if self.widths[0] != 3 {
            return bad("the first width must be 3".into());
        }
        if self.widths.contains(&0) {
            return bad("widths must be positive".into());
        }
        if let Activation::Elu { alpha } = self.activation {
            if !(alpha.is_finite() && alpha > 0.0) {
                return bad(format!("ELU alpha must be positive, got {alpha}"));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.level_ratios.len()
    }
}

/// Maps positions to network features: `(p - mean_i) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<Point>,
    pub scale: f64,
}

impl Normalizer {
    pub fn identity(vertex_count: usize) -> Self {
        Self {
            mean: vec![[0.0; 3]; vertex_count],
            scale: 1.0,
        }
    }

    /// Per-vertex mean of `samples` and the RMS deviation from it. Falls back
    /// to the mean shape's RMS radius, then to 1, when the deviation is zero.
    pub fn fit(samples: &[&[Point]]) -> Result<Self, TrainingError> {
        let first = samples
            .first()
            .ok_or_else(|| TrainingError::InvalidConfig("no samples to fit".into()))?;
        let n = first.len();
        let mut mean = vec![[0.0; 3]; n];
        for s in samples {
            if s.len() != n {
                return Err(TrainingError::CountMismatch {
                    left: n,
                    right: s.len(),
                });
            }
            for (m, p) in mean.iter_mut().zip(s.iter()) {
                for c in 0..3 {
                    m[c] += p[c];
                }
            }
        }
        let inv = 1.0 / samples.len() as f64;
        mean.iter_mut().flatten().for_each(|v| *v *= inv);

        let mut sq = 0.0;
        for s in samples {
            for (m, p) in mean.iter().zip(s.iter()) {
                sq += (0..3).map(|c| (p[c] - m[c]).powi(2)).sum::<f64>();
            }
        }
        let mut scale = (sq / (samples.len() * n).max(1) as f64).sqrt();
        if !(scale > 1e-12) {
            let centroid = mean.iter().fold([0.0; 3], |acc, p| {
                [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]
            });
            let c = centroid.map(|v| v / n.max(1) as f64);
            let r2: f64 = mean
                .iter()
                .map(|p| (0..3).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>())
                .sum();
            scale = (r2 / n.max(1) as f64).sqrt();
        }
        if !(scale > 1e-12) || !scale.is_finite() {
            scale = 1.0;
        }
        Ok(Self { mean, scale })
    }

    pub fn normalize(&self, positions: &[Point]) -> FeatureMap {
        let rows: Vec<Point> = positions
            .iter()
            .zip(&self.mean)
            .map(|(p, m)| [0, 1, 2].map(|c| (p[c] - m[c]) / self.scale))
            .collect();
        FeatureMap::from_rows(&rows)
    }

    pub fn denormalize(&self, features: &FeatureMap) -> Vec<Point> {
        (0..features.rows())
            .map(|i| {
                let f = features.row(i);
                let m = self.mean[i];
                [0, 1, 2].map(|c| m[c] + self.scale * f[c])
            })
            .collect()
    }
}

/// `act(vc_conv(x)) + vd_res(x)` between two adjacent levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub conv: VcConvParams,
    pub skip: VdParams,
}

impl Block {
    fn zeros_like(&self) -> Self {
        Self {
            conv: self.conv.zeros_like(),
            skip: self.skip.zeros_like(),
        }
    }

    fn tensors(&self) -> [Option<&Vec<f64>>; 5] {
        [
            Some(&self.conv.basis),
            Some(&self.conv.coeffs),
            Some(&self.conv.bias),
            Some(&self.skip.density),
            self.skip.mix.as_ref(),
        ]
    }

    fn tensors_mut(&mut self) -> [Option<&mut Vec<f64>>; 5] {
        [
            Some(&mut self.conv.basis),
            Some(&mut self.conv.coeffs),
            Some(&mut self.conv.bias),
            Some(&mut self.skip.density),
            self.skip.mix.as_mut(),
        ]
    }
}

const TENSOR_NAMES: [&str; 5] = [
    "conv.basis",
    "conv.coeffs",
    "conv.bias",
    "skip.density",
    "skip.mix",
];

/// All trainable tensors. `encoder[l]` maps level `l` to `l + 1` and
/// `decoder[l]` maps level `l + 1` back to `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub encoder: Vec<Block>,
    pub decoder: Vec<Block>,
}

impl Parameters {
    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.iter().map(Block::zeros_like).collect(),
            decoder: self.decoder.iter().map(Block::zeros_like).collect(),
        }
    }

    fn blocks(&self) -> impl Iterator<Item = (&'static str, usize, &Block)> {
        let enc = self
            .encoder
            .iter()
            .enumerate()
            .map(|(l, b)| ("encoder", l, b));
        let dec = self
            .decoder
            .iter()
            .enumerate()
            .map(|(l, b)| ("decoder", l, b));
        enc.chain(dec)
    }

    /// Tensors in a fixed order with stable names such as `encoder.0.conv.basis`.
    pub fn named_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (part, l, block) in self.blocks() {
            for (name, t) in TENSOR_NAMES.iter().zip(block.tensors()) {
                if let Some(t) = t {
                    out.push((format!("{part}.{l}.{name}"), t.as_slice()));
                }
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        let enc = self
            .encoder
            .iter_mut()
            .enumerate()
            .map(|(l, b)| ("encoder", l, b));
        let dec = self
            .decoder
            .iter_mut()
            .enumerate()
            .map(|(l, b)| ("decoder", l, b));
        for (part, l, block) in enc.chain(dec) {
            for (name, t) in TENSOR_NAMES.iter().zip(block.tensors_mut()) {
                if let Some(t) = t {
                    out.push((format!("{part}.{l}.{name}"), t));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.named_tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for (_, t) in self.named_tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length");
    }

    pub fn add_assign(&mut self, other: &Parameters) {
        for ((_, a), (_, b)) in self
            .named_tensors_mut()
            .into_iter()
            .zip(other.named_tensors())
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.named_tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub architecture: Architecture,
    pub hierarchy: MeshHierarchy,
    /// Face list shared by every mesh the model accepts.
    pub faces: Vec<Face>,
    pub normalizer: Normalizer,
    pub params: Parameters,
}

struct BlockTrace {
    input: FeatureMap,
    pre_activation: FeatureMap,
}

impl Model {
    /// Fresh model for meshes sharing `reference`'s topology. Parameters are
    /// drawn from a ChaCha8 stream keyed by `seed`: encoder blocks from the
    /// finest level up, then decoder blocks from the coarsest level down.
    pub fn new(
        architecture: Architecture,
        reference: &Mesh,
        normalizer: Normalizer,
        seed: u64,
    ) -> Result<Self, TrainingError> {
        architecture.validate()?;
        if normalizer.mean.len() != reference.vertex_count() {
            return Err(TrainingError::CountMismatch {
                left: reference.vertex_count(),
                right: normalizer.mean.len(),
            });
        }
        let hierarchy = build_hierarchy_with(
            reference,
            &architecture.level_ratios,
            architecture.basis_clamp,
        )?;
        Self::with_hierarchy(
            architecture,
            hierarchy,
            reference.faces().to_vec(),
            normalizer,
            seed,
        )
    }

    /// Like [`Model::new`] with a prebuilt hierarchy.
    pub fn with_hierarchy(
        architecture: Architecture,
        hierarchy: MeshHierarchy,
        faces: Vec<Face>,
        normalizer: Normalizer,
        seed: u64,
    ) -> Result<Self, TrainingError> {
        architecture.validate()?;
        hierarchy.validate()?;
        if hierarchy.levels.len() != architecture.levels() {
            return Err(TrainingError::TopologyMismatch(format!(
                "hierarchy has {} levels, architecture {}",
                hierarchy.levels.len(),
                architecture.levels()
            )));
        }
        if normalizer.mean.len() != hierarchy.vertex_count() {
            return Err(TrainingError::CountMismatch {
                left: hierarchy.vertex_count(),
                right: normalizer.mean.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = &architecture.widths;
        let encoder: Vec<Block> = hierarchy
            .transitions
            .iter()
            .enumerate()
            .map(|(l, tr)| Block {
                conv: init_vc_conv(&mut rng, &tr.conv, w[l], w[l + 1]),
                skip: init_vd(&mut rng, &tr.pool, w[l], w[l + 1]),
            })
            .collect();
        let mut decoder: Vec<Block> = hierarchy
            .transitions
            .iter()
            .enumerate()
            .rev()
            .map(|(l, tr)| Block {
                conv: init_vc_conv(&mut rng, &tr.trans_conv, w[l + 1], w[l]),
                skip: init_vd(&mut rng, &tr.unpool, w[l + 1], w[l]),
            })
            .collect();
        decoder.reverse();
        Ok(Self {
            architecture,
            hierarchy,
            faces,
            normalizer,
            params: Parameters { encoder, decoder },
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.hierarchy.vertex_count()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Blocks in evaluation order: (is_decoder, level).
    fn schedule(&self) -> Vec<(bool, usize)> {
        let l = self.hierarchy.transitions.len();
        (0..l)
            .map(|t| (false, t))
            .chain((0..l).rev().map(|t| (true, t)))
            .collect()
    }

    fn block_parts<'a>(
        &'a self,
        params: &'a Parameters,
        decoder: bool,
        level: usize,
    ) -> (
        &'a Block,
        &'a ConvTopology,
        &'a ConvTopology,
        Option<Activation>,
    ) {
        let tr = &self.hierarchy.transitions[level];
        let act = Some(self.architecture.activation);
        if decoder {
            let act = if level == 0 { None } else { act };
            (&params.decoder[level], &tr.trans_conv, &tr.unpool, act)
        } else {
            (&params.encoder[level], &tr.conv, &tr.pool, act)
        }
    }

    fn forward_features(
        &self,
        params: &Parameters,
        x: FeatureMap,
        mut trace: Option<&mut Vec<BlockTrace>>,
    ) -> Result<FeatureMap, TrainingError> {
        let mut x = x;
        for (decoder, level) in self.schedule() {
            let (block, conv_topo, skip_topo, act) = self.block_parts(params, decoder, level);
            let pre = vc_conv(&block.conv, conv_topo, &x)?;
            let mut y = match act {
                Some(a) => activation(a, &pre),
                None => pre.clone(),
            };
            y.add_assign(&vd_res(&block.skip, skip_topo, &x)?);
            if let Some(t) = trace.as_deref_mut() {
                t.push(BlockTrace {
                    input: x,
                    pre_activation: pre,
                });
            }
            x = y;
        }
        Ok(x)
    }

    fn check_vertices(&self, count: usize) -> Result<(), TrainingError> {
        if count == self.vertex_count() {
            Ok(())
        } else {
            Err(TrainingError::CountMismatch {
                left: self.vertex_count(),
                right: count,
            })
        }
    }

    pub fn reconstruct_positions(&self, input: &[Point]) -> Result<Vec<Point>, TrainingError> {
        self.check_vertices(input.len())?;
        let y = self.forward_features(&self.params, self.normalizer.normalize(input), None)?;
        if !y.is_finite() {
            return Err(TrainingError::Divergence {
                step: 0,
                what: "non-finite reconstruction".into(),
            });
        }
        Ok(self.normalizer.denormalize(&y))
    }

    /// Reconstruction of `mesh`, which must share the model's face list.
    pub fn reconstruct(&self, mesh: &Mesh) -> Result<Mesh, TrainingError> {
        if mesh.faces() != self.faces.as_slice() {
            return Err(TrainingError::TopologyMismatch(
                "mesh faces differ from the model's".into(),
            ));
        }
        Ok(mesh.with_positions(self.reconstruct_positions(mesh.positions())?)?)
    }

    /// Loss of one (input, target) pair and its gradient for every parameter.
    pub fn loss_and_grad(
        &self,
        input: &[Point],
        target: &[Point],
        metric: LossMetric,
    ) -> Result<(f64, Parameters), TrainingError> {
        self.loss_and_grad_with(&self.params, input, target, metric)
    }

    pub fn loss_and_grad_with(
        &self,
        params: &Parameters,
        input: &[Point],
        target: &[Point],
        metric: LossMetric,
    ) -> Result<(f64, Parameters), TrainingError> {
        self.check_vertices(input.len())?;
        let mut trace = Vec::new();
        let y =
            self.forward_features(params, self.normalizer.normalize(input), Some(&mut trace))?;
        let out = self.normalizer.denormalize(&y);
        let (value, grad) = loss_positions(&out, target, metric)?;
        if !value.is_finite() {
            return Err(TrainingError::Divergence {
                step: 0,
                what: "non-finite loss".into(),
            });
        }
        let scaled: Vec<Point> = grad
            .iter()
            .map(|g| g.map(|v| v * self.normalizer.scale))
            .collect();
        let mut dy = FeatureMap::from_rows(&scaled);
        let mut grads = params.zeros_like();

        for ((decoder, level), step) in self.schedule().into_iter().zip(trace).rev() {
            let (block, conv_topo, skip_topo, act) = self.block_parts(params, decoder, level);
            let dpre = match act {
                Some(a) => activation_backward(a, &step.pre_activation, &dy),
                None => dy.clone(),
            };
            let (mut dx, gconv) = vc_conv_backward(&block.conv, conv_topo, &step.input, &dpre)?;
            let (dx_skip, gskip) = vd_backward(&block.skip, skip_topo, &step.input, &dy)?;
            dx.add_assign(&dx_skip);
            let slot = if decoder {
                &mut grads.decoder[level]
            } else {
                &mut grads.encoder[level]
            };
            *slot = Block {
                conv: gconv,
                skip: gskip,
            };
            dy = dx;
        }
        Ok((value, grads))
    }
}
