//! The attention-guided scoring network.
//!
//! A primary branch (feature network, score head, decoder) predicts all
//! attributes. Its feature channels are split in half to build cracking and
//! contamination attention maps; each map weights the input image for an
//! attribute branch with its own feature network, single-score head and
//! decoder. A fusion head scores the concatenated features of all three.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{
    load_checkpoint, save_checkpoint, Branch, CheckpointError, DiffError, Graph, ParamInfo, ParamStore, Part, Real,
    Tensor, UpsampleMode, Var,
};
use crate::score::ScoreVector;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("feature channel count {0} must be a positive multiple of 4")]
    BadChannelCount(usize),
    #[error("input size {0} must be a positive multiple of 4")]
    BadInputSize(usize),
    #[error("image is {found:?}, model expects {expected}x{expected}")]
    InputShape { expected: usize, found: (usize, usize) },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint holds no model configuration: {0}")]
    MissingConfig(serde_json::Error),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_size: usize,
    pub feature_channels: usize,
    pub classifier_hidden: usize,
    pub overall_hidden: usize,
    pub upsample: UpsampleMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { input_size: 640, feature_channels: 32, classifier_hidden: 64, overall_hidden: 16, upsample: UpsampleMode::Bilinear }
    }
}

impl ModelConfig {
    /// The decoder halves the channel count twice, so `C` must divide by 4.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.feature_channels == 0 || self.feature_channels % 4 != 0 {
            return Err(ModelError::BadChannelCount(self.feature_channels));
        }
        if self.input_size == 0 || self.input_size % 4 != 0 {
            return Err(ModelError::BadInputSize(self.input_size));
        }
        Ok(())
    }

    pub fn feature_size(&self) -> usize {
        self.input_size / 4
    }
}

/// The two attention-guided attribute branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeBranch {
    Cracking,
    Contamination,
}

impl AttributeBranch {
    pub const BOTH: [AttributeBranch; 2] = [AttributeBranch::Cracking, AttributeBranch::Contamination];

    pub fn branch(self) -> Branch {
        match self {
            AttributeBranch::Cracking => Branch::Cracking,
            AttributeBranch::Contamination => Branch::Contamination,
        }
    }

    /// Primary feature channels feeding this branch's attention map.
    pub fn channels(self, c: usize) -> std::ops::Range<usize> {
        match self {
            AttributeBranch::Cracking => 0..c / 2,
            AttributeBranch::Contamination => c / 2..c,
        }
    }

    /// Column of the score vector this branch regresses.
    pub fn score_index(self) -> usize {
        match self {
            AttributeBranch::Cracking => 2,
            AttributeBranch::Contamination => 3,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

pub(crate) fn prefix(branch: Branch) -> &'static str {
    match branch {
        Branch::Primary => "primary",
        Branch::Cracking => "cracking",
        Branch::Contamination => "contamination",
        Branch::Fusion => "fusion",
    }
}

/// Builds every parameter of the network with He-normal weights and zero
/// biases, deterministically from `seed`.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamStore<f32>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let c = config.feature_channels;
    let (hid, ohid) = (config.classifier_hidden, config.overall_hidden);

    let mut add = |store: &mut ParamStore<f32>, name: String, shape: &[usize], fan_in: usize, info: ParamInfo| {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let w = Tensor::from_fn(shape, |_| normal.sample(&mut rng) as f32);
        store.insert(format!("{name}.w"), w, info)?;
        // Conv kernels are [F, C, kh, kw]; transposed kernels [Cin, Cout, kh, kw]
        // and linear weights [D, E] both put the output width second.
        let bias_len = if shape.len() == 4 && !name.contains("tconv") { shape[0] } else { shape[1] };
        store.insert(format!("{name}.b"), Tensor::zeros(&[bias_len]), info)
    };

    for branch in [Branch::Primary, Branch::Cracking, Branch::Contamination] {
        let p = prefix(branch);
        let enc = ParamInfo { branch, part: Part::Encoder };
        add(&mut store, format!("{p}.enc.conv0"), &[c, 1, 3, 3], 9, enc)?;
        for layer in ["rb1.conv1", "rb1.conv2", "rb2.conv1", "rb2.conv2"] {
            add(&mut store, format!("{p}.enc.{layer}"), &[c, c, 3, 3], 9 * c, enc)?;
        }
        add(&mut store, format!("{p}.enc.rb1.proj"), &[c, c, 1, 1], c, enc)?;

        let dec = ParamInfo { branch, part: Part::Decoder };
        add(&mut store, format!("{p}.dec.tconv1"), &[c, c / 2, 4, 4], 4 * c, dec)?;
        add(&mut store, format!("{p}.dec.tconv2"), &[c / 2, c / 4, 4, 4], 2 * c, dec)?;
        add(&mut store, format!("{p}.dec.conv"), &[1, c / 4, 3, 3], 9 * c / 4, dec)?;

        let cls = ParamInfo { branch, part: Part::Classifier };
        let outputs = if branch == Branch::Primary { 4 } else { 1 };
        add(&mut store, format!("{p}.cls.fc1"), &[c, hid], c, cls)?;
        add(&mut store, format!("{p}.cls.fc2"), &[hid, outputs], hid, cls)?;
    }
    let fus = ParamInfo { branch: Branch::Fusion, part: Part::Classifier };
    add(&mut store, "fusion.cls.fc1".into(), &[3 * c, hid], 3 * c, fus)?;
    add(&mut store, "fusion.cls.fc2".into(), &[hid, 4], hid, fus)?;
    for branch in [Branch::Primary, Branch::Fusion] {
        let info = ParamInfo { branch, part: Part::Classifier };
        let p = prefix(branch);
        add(&mut store, format!("{p}.cls.ov1"), &[4, ohid], 4, info)?;
        add(&mut store, format!("{p}.cls.ov2"), &[ohid, 1], ohid, info)?;
    }
    Ok(store)
}

/// Network builder over one graph. Parameters whose [`ParamInfo`] fails
/// `trainable` enter the graph as constants.
pub struct Net<'a, T: Real> {
    pub graph: &'a mut Graph<T>,
    store: &'a ParamStore<T>,
    config: &'a ModelConfig,
    trainable: &'a dyn Fn(ParamInfo) -> bool,
}

/// Node handles of one full forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub image: Var,
    pub primary_features: Var,
    pub primary_attrs: Var,
    pub primary_overall: Var,
    pub primary_recon: Var,
    pub attention: [Var; 2],
    pub attn_inputs: [Var; 2],
    pub attr_features: [Var; 2],
    pub attr_preds: [Var; 2],
    pub attr_recons: [Var; 2],
    pub fusion_attrs: Var,
    pub fusion_overall: Var,
}

impl<'a, T: Real> Net<'a, T> {
    pub fn new(
        graph: &'a mut Graph<T>,
        store: &'a ParamStore<T>,
        config: &'a ModelConfig,
        trainable: &'a dyn Fn(ParamInfo) -> bool,
    ) -> Self {
        Net { graph, store, config, trainable }
    }

    fn p(&mut self, name: &str) -> Result<Var, ModelError> {
        let info = self.store.info(name).ok_or_else(|| DiffError::UnknownParam(name.to_string()))?;
        Ok(self.graph.param(self.store, name, (self.trainable)(info))?)
    }

    fn conv(&mut self, x: Var, name: &str, stride: usize, pad: usize) -> Result<Var, ModelError> {
        let (w, b) = (self.p(&format!("{name}.w"))?, self.p(&format!("{name}.b"))?);
        Ok(self.graph.conv2d(x, w, Some(b), stride, pad)?)
    }

    fn tconv(&mut self, x: Var, name: &str) -> Result<Var, ModelError> {
        let (w, b) = (self.p(&format!("{name}.w"))?, self.p(&format!("{name}.b"))?);
        Ok(self.graph.conv_transpose2d(x, w, Some(b), 2, 1)?)
    }

    fn fc(&mut self, x: Var, name: &str) -> Result<Var, ModelError> {
        let (w, b) = (self.p(&format!("{name}.w"))?, self.p(&format!("{name}.b"))?);
        Ok(self.graph.linear(x, w, b)?)
    }

    /// Uploads `[N,H,W]` images as a constant `[N,1,H,W]` input.
    pub fn image(&mut self, images: &Array3<f32>) -> Result<Var, ModelError> {
        let (n, h, w) = images.dim();
        let s = self.config.input_size;
        if n == 0 {
            return Err(ModelError::EmptyBatch);
        }
        if (h, w) != (s, s) {
            return Err(ModelError::InputShape { expected: s, found: (h, w) });
        }
        let data = images.iter().map(|&v| T::of(v as f64)).collect();
        Ok(self.graph.input(Tensor::new(&[n, 1, h, w], data)?))
    }

    /// `[N,1,H,H] → [N,C,H/4,H/4]`: stride-2 conv, a downsampling ResBlock
    /// with projection skip, and an identity ResBlock.
    pub fn feature_network(&mut self, img: Var, branch: Branch) -> Result<Var, ModelError> {
        let p = prefix(branch);
        let x = self.conv(img, &format!("{p}.enc.conv0"), 2, 1)?;
        let x = self.graph.relu(x);

        let h = self.conv(x, &format!("{p}.enc.rb1.conv1"), 2, 1)?;
        let h = self.graph.relu(h);
        let h = self.conv(h, &format!("{p}.enc.rb1.conv2"), 1, 1)?;
        let skip = self.conv(x, &format!("{p}.enc.rb1.proj"), 2, 0)?;
        let x = self.graph.add(h, skip)?;
        let x = self.graph.relu(x);

        let h = self.conv(x, &format!("{p}.enc.rb2.conv1"), 1, 1)?;
        let h = self.graph.relu(h);
        let h = self.conv(h, &format!("{p}.enc.rb2.conv2"), 1, 1)?;
        let x = self.graph.add(h, x)?;
        Ok(self.graph.relu(x))
    }

    /// Channel max over this branch's half of the features, upsampled to the
    /// input size, through a sigmoid.
    pub fn make_attention(&mut self, features: Var, target: AttributeBranch) -> Result<Var, ModelError> {
        let c = self.graph.value(features).shape()[1];
        if c % 2 != 0 {
            return Err(ModelError::BadChannelCount(c));
        }
        let m = self.graph.channel_max_pool(features, target.channels(c))?;
        let s = self.config.input_size;
        let up = self.graph.upsample(m, s, s, self.config.upsample)?;
        Ok(self.graph.sigmoid(up))
    }

    pub fn attention_weight(&mut self, img: Var, attention: Var) -> Result<Var, ModelError> {
        Ok(self.graph.mul(img, attention)?)
    }

    /// Pooled features → attribute 4-vector → overall score. The overall
    /// head sees only the predicted attributes.
    fn score_head(&mut self, features: Var, branch: Branch) -> Result<(Var, Var), ModelError> {
        let p = prefix(branch);
        let pooled = self.graph.global_avg_pool(features)?;
        let h = self.fc(pooled, &format!("{p}.cls.fc1"))?;
        let h = self.graph.relu(h);
        let attrs = self.fc(h, &format!("{p}.cls.fc2"))?;
        let h = self.fc(attrs, &format!("{p}.cls.ov1"))?;
        let h = self.graph.relu(h);
        let overall = self.fc(h, &format!("{p}.cls.ov2"))?;
        Ok((attrs, overall))
    }

    /// Returns `([N,4] attributes, [N,1] overall)`.
    pub fn primary_classifier(&mut self, features: Var) -> Result<(Var, Var), ModelError> {
        self.score_head(features, Branch::Primary)
    }

    /// Single-score head of an attribute branch, `[N,1]`.
    pub fn attribute_classifier(&mut self, features: Var, target: AttributeBranch) -> Result<Var, ModelError> {
        let p = prefix(target.branch());
        let pooled = self.graph.global_avg_pool(features)?;
        let h = self.fc(pooled, &format!("{p}.cls.fc1"))?;
        let h = self.graph.relu(h);
        self.fc(h, &format!("{p}.cls.fc2"))
    }

    /// Feature network and score of one attribute branch on its
    /// attention-weighted input; returns `(features, prediction)`.
    pub fn attribute_branch(&mut self, attn_input: Var, target: AttributeBranch) -> Result<(Var, Var), ModelError> {
        let features = self.feature_network(attn_input, target.branch())?;
        let pred = self.attribute_classifier(features, target)?;
        Ok((features, pred))
    }

    /// `[N,C,H/4,H/4] → [N,1,H,H]` in (0,1).
    pub fn decode(&mut self, features: Var, branch: Branch) -> Result<Var, ModelError> {
        let p = prefix(branch);
        let x = self.tconv(features, &format!("{p}.dec.tconv1"))?;
        let x = self.graph.relu(x);
        let x = self.tconv(x, &format!("{p}.dec.tconv2"))?;
        let x = self.graph.relu(x);
        let x = self.conv(x, &format!("{p}.dec.conv"), 1, 1)?;
        Ok(self.graph.sigmoid(x))
    }

    pub fn fusion_branch(&mut self, primary: Var, cracking: Var, contamination: Var) -> Result<(Var, Var), ModelError> {
        let joined = self.graph.concat_channels(&[primary, cracking, contamination])?;
        self.score_head(joined, Branch::Fusion)
    }

    /// Every output of the network in one graph.
    pub fn forward(&mut self, img: Var) -> Result<ForwardVars, ModelError> {
        let pf = self.feature_network(img, Branch::Primary)?;
        let (primary_attrs, primary_overall) = self.primary_classifier(pf)?;
        let primary_recon = self.decode(pf, Branch::Primary)?;
        let mut attention = [img; 2];
        let mut attn_inputs = [img; 2];
        let mut attr_features = [img; 2];
        let mut attr_preds = [img; 2];
        let mut attr_recons = [img; 2];
        for target in AttributeBranch::BOTH {
            let i = target.slot();
            attention[i] = self.make_attention(pf, target)?;
            attn_inputs[i] = self.attention_weight(img, attention[i])?;
            (attr_features[i], attr_preds[i]) = self.attribute_branch(attn_inputs[i], target)?;
            attr_recons[i] = self.decode(attr_features[i], target.branch())?;
        }
        let (fusion_attrs, fusion_overall) = self.fusion_branch(pf, attr_features[0], attr_features[1])?;
        Ok(ForwardVars {
            image: img,
            primary_features: pf,
            primary_attrs,
            primary_overall,
            primary_recon,
            attention,
            attn_inputs,
            attr_features,
            attr_preds,
            attr_recons,
            fusion_attrs,
            fusion_overall,
        })
    }
}

/// Supervised targets of a batch: `[N,4]` attributes and `[N,1]` overall,
/// labels rounded to integers, with presence masks.
#[derive(Debug, Clone)]
pub struct Targets<T> {
    pub attrs: Tensor<T>,
    pub attrs_mask: Vec<bool>,
    pub overall: Tensor<T>,
    pub overall_mask: Vec<bool>,
}

impl<T: Real> Targets<T> {
    pub fn from_labels(labels: &[ScoreVector]) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let n = labels.len();
        let rounded: Vec<ScoreVector> = labels.iter().map(ScoreVector::rounded).collect();
        let value = |v: Option<f32>| T::of(v.unwrap_or(0.0) as f64);
        let attrs = rounded.iter().flat_map(|s| s.0[..4].iter().map(|&v| value(v))).collect();
        let attrs_mask = rounded.iter().flat_map(|s| s.0[..4].iter().map(Option::is_some)).collect();
        let overall = rounded.iter().map(|s| value(s.0[4])).collect();
        let overall_mask = rounded.iter().map(|s| s.0[4].is_some()).collect();
        Ok(Targets {
            attrs: Tensor::new(&[n, 4], attrs)?,
            attrs_mask,
            overall: Tensor::new(&[n, 1], overall)?,
            overall_mask,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.overall_mask.len()
    }

    /// `[N,1]` target and mask for one attribute column.
    pub fn column(&self, index: usize) -> (Tensor<T>, Vec<bool>) {
        let n = self.batch_size();
        let data = (0..n).map(|i| self.attrs.data()[i * 4 + index]).collect();
        let mask = (0..n).map(|i| self.attrs_mask[i * 4 + index]).collect();
        (Tensor::new(&[n, 1], data).expect("nonempty"), mask)
    }
}

/// Supervised score loss shared by the primary and fusion heads:
/// masked MSE over the attribute 4-vector plus masked MSE of the overall.
pub fn supervised_loss<T: Real>(g: &mut Graph<T>, attrs: Var, overall: Var, targets: &Targets<T>) -> Result<Var, ModelError> {
    let ta = g.input(targets.attrs.clone());
    let to = g.input(targets.overall.clone());
    let la = g.masked_mse(attrs, ta, Some(targets.attrs_mask.clone()))?;
    let lo = g.masked_mse(overall, to, Some(targets.overall_mask.clone()))?;
    Ok(g.add(la, lo)?)
}

/// Supervised loss of one attribute branch.
pub fn attribute_loss<T: Real>(g: &mut Graph<T>, pred: Var, target: AttributeBranch, targets: &Targets<T>) -> Result<Var, ModelError> {
    let (t, mask) = targets.column(target.score_index());
    let t = g.input(t);
    Ok(g.masked_mse(pred, t, Some(mask))?)
}

/// Loss nodes of a full forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub supervised_primary: Var,
    pub unsupervised_primary: Var,
    pub supervised_attr: [Var; 2],
    pub unsupervised_attr: [Var; 2],
    pub fusion: Var,
}

impl LossVars {
    /// Sum of every term, for end-to-end checks.
    pub fn total<T: Real>(&self, g: &mut Graph<T>) -> Result<Var, ModelError> {
        let terms = [
            self.supervised_primary,
            self.unsupervised_primary,
            self.supervised_attr[0],
            self.unsupervised_attr[0],
            self.supervised_attr[1],
            self.unsupervised_attr[1],
            self.fusion,
        ];
        Ok(g.sum(&terms)?)
    }
}

pub fn losses<T: Real>(g: &mut Graph<T>, out: &ForwardVars, targets: &Targets<T>) -> Result<LossVars, ModelError> {
    let supervised_primary = supervised_loss(g, out.primary_attrs, out.primary_overall, targets)?;
    let unsupervised_primary = g.mse(out.image, out.primary_recon)?;
    let mut supervised_attr = [supervised_primary; 2];
    let mut unsupervised_attr = [supervised_primary; 2];
    for target in AttributeBranch::BOTH {
        let i = target.slot();
        supervised_attr[i] = attribute_loss(g, out.attr_preds[i], target, targets)?;
        unsupervised_attr[i] = g.mse(out.attn_inputs[i], out.attr_recons[i])?;
    }
    let fusion = supervised_loss(g, out.fusion_attrs, out.fusion_overall, targets)?;
    Ok(LossVars { supervised_primary, unsupervised_primary, supervised_attr, unsupervised_attr, fusion })
}

/// Values of one forward pass for a batch, as `f32` arrays.
#[derive(Debug, Clone)]
pub struct ForwardOutputs {
    pub primary_attrs: Array2<f32>,
    pub primary_overall: Vec<f32>,
    pub primary_recon: Array3<f32>,
    pub attention: [Array3<f32>; 2],
    pub attn_inputs: [Array3<f32>; 2],
    pub attr_preds: [Vec<f32>; 2],
    pub attr_recons: [Array3<f32>; 2],
    pub fusion_attrs: Array2<f32>,
    pub fusion_overall: Vec<f32>,
}

/// Trained parameters plus the configuration they were built for.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        Ok(Model { params: init_params(&config, seed)?, config })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let meta = serde_json::to_value(self.config).map_err(ModelError::MissingConfig)?;
        Ok(save_checkpoint(path.as_ref(), &self.params, &meta)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let (params, meta) = load_checkpoint(path.as_ref())?;
        let config: ModelConfig = serde_json::from_value(meta).map_err(ModelError::MissingConfig)?;
        config.validate()?;
        let reference = init_params(&config, 0)?;
        for (name, t, _) in reference.iter() {
            let found = params.get(name).ok_or_else(|| DiffError::UnknownParam(name.to_string()))?;
            if found.shape() != t.shape() {
                return Err(ModelError::Diff(crate::diff::DiffError::ShapeMismatch {
                    op: "checkpoint",
                    detail: format!("{name}: {:?} vs {:?}", found.shape(), t.shape()),
                }));
            }
        }
        Ok(Model { config, params })
    }

    /// Full forward pass without gradients.
    pub fn forward(&self, images: &Array3<f32>) -> Result<ForwardOutputs, ModelError> {
        let mut g = Graph::<f32>::new();
        let frozen = |_: ParamInfo| false;
        let mut net = Net::new(&mut g, &self.params, &self.config, &frozen);
        let img = net.image(images)?;
        let v = net.forward(img)?;
        let plane = |g: &Graph<f32>, var: Var| {
            let t = g.value(var);
            let s = t.shape();
            Array3::from_shape_vec((s[0], s[2], s[3]), t.data().to_vec()).expect("[N,1,H,W]")
        };
        let matrix = |g: &Graph<f32>, var: Var| {
            let t = g.value(var);
            Array2::from_shape_vec((t.shape()[0], t.shape()[1]), t.data().to_vec()).expect("[N,K]")
        };
        let column = |g: &Graph<f32>, var: Var| g.value(var).data().to_vec();
        Ok(ForwardOutputs {
            primary_attrs: matrix(&g, v.primary_attrs),
            primary_overall: column(&g, v.primary_overall),
            primary_recon: plane(&g, v.primary_recon),
            attention: v.attention.map(|a| plane(&g, a)),
            attn_inputs: v.attn_inputs.map(|a| plane(&g, a)),
            attr_preds: v.attr_preds.map(|a| column(&g, a)),
            attr_recons: v.attr_recons.map(|a| plane(&g, a)),
            fusion_attrs: matrix(&g, v.fusion_attrs),
            fusion_overall: column(&g, v.fusion_overall),
        })
    }

    /// Primary-branch scores only; skips attribute and fusion branches.
    pub fn predict_primary(&self, images: &Array3<f32>) -> Result<Vec<[f32; 5]>, ModelError> {
        let mut g = Graph::<f32>::new();
        let frozen = |_: ParamInfo| false;
        let mut net = Net::new(&mut g, &self.params, &self.config, &frozen);
        let img = net.image(images)?;
        let pf = net.feature_network(img, Branch::Primary)?;
        let (attrs, overall) = net.primary_classifier(pf)?;
        Ok(score_rows(g.value(attrs).data(), g.value(overall).data()))
    }

    /// Fusion-head scores; skips the decoders.
    pub fn predict_full(&self, images: &Array3<f32>) -> Result<Vec<[f32; 5]>, ModelError> {
        let mut g = Graph::<f32>::new();
        let frozen = |_: ParamInfo| false;
        let mut net = Net::new(&mut g, &self.params, &self.config, &frozen);
        let img = net.image(images)?;
        let pf = net.feature_network(img, Branch::Primary)?;
        let mut feats = [pf; 2];
        for target in AttributeBranch::BOTH {
            let att = net.make_attention(pf, target)?;
            let input = net.attention_weight(img, att)?;
            feats[target.slot()] = net.feature_network(input, target.branch())?;
        }
        let (attrs, overall) = net.fusion_branch(pf, feats[0], feats[1])?;
        Ok(score_rows(g.value(attrs).data(), g.value(overall).data()))
    }
}

fn score_rows<T: Real>(attrs: &[T], overall: &[T]) -> Vec<[f32; 5]> {
    attrs
        .chunks(4)
        .zip(overall)
        .map(|(a, o)| {
            let f = |v: T| v.to_f32().unwrap_or(f32::NAN);
            [f(a[0]), f(a[1]), f(a[2]), f(a[3]), f(*o)]
        })
        .collect()
}

/// Stacks equally sized planes into an `[N,H,W]` batch.
pub fn stack_images(images: &[ArrayView2<f32>]) -> Result<Array3<f32>, ModelError> {
    let first = images.first().ok_or(ModelError::EmptyBatch)?;
    let (h, w) = first.dim();
    let mut out = Array3::zeros((images.len(), h, w));
    for (i, img) in images.iter().enumerate() {
        if img.dim() != (h, w) {
            return Err(ModelError::InputShape { expected: h, found: img.dim() });
        }
        out.index_axis_mut(ndarray::Axis(0), i).assign(img);
    }
    Ok(out)
}
