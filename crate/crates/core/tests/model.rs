mod common;

use common::{model_gradient_errors, random_images, small_config};
use gridscreen::diff::{Branch, Graph, ParamInfo, ParamStore, Tensor, UpsampleMode};
use gridscreen::model::{supervised_loss, AttributeBranch, Model, ModelConfig, ModelError, Net, Targets};
use gridscreen::ScoreVector;
use ndarray::Array3;
use proptest::prelude::*;

const FROZEN: fn(ParamInfo) -> bool = |_| false;

fn zero_matching(store: &mut ParamStore<f32>, pred: impl Fn(&str) -> bool) {
    for (name, t, _) in store.iter_mut() {
        if pred(name) {
            t.data_mut().fill(0.0);
        }
    }
}

#[test]
fn config_validation() {
    assert!(ModelConfig::default().validate().is_ok());
    assert!(matches!(small_config(64, 6).validate(), Err(ModelError::BadChannelCount(6))));
    assert!(matches!(small_config(66, 8).validate(), Err(ModelError::BadInputSize(66))));
}

#[test]
fn feature_network_shapes_and_zero_input() {
    let config = ModelConfig { input_size: 64, ..ModelConfig::default() };
    let mut model = Model::new(config, 1).unwrap();
    zero_matching(&mut model.params, |n| n.ends_with(".b"));
    let mut g = Graph::new();
    let mut net = Net::new(&mut g, &model.params, &model.config, &FROZEN);
    let img = net.image(&Array3::zeros((2, 64, 64))).unwrap();
    let f = net.feature_network(img, Branch::Primary).unwrap();
    assert_eq!(g.value(f).shape(), &[2, 32, 16, 16]);
    assert!(g.value(f).data().iter().all(|&v| v == 0.0));
}

#[test]
fn zeroed_resblock_passes_skip_through() {
    let config = small_config(16, 4);
    let mut model = Model::new(config, 2).unwrap();
    zero_matching(&mut model.params, |n| n.starts_with("primary.enc.rb2"));
    let images = random_images(1, 16, 3);

    let mut g = Graph::new();
    let mut net = Net::new(&mut g, &model.params, &model.config, &FROZEN);
    let img = net.image(&images).unwrap();
    let f = net.feature_network(img, Branch::Primary).unwrap();

    // Oracle: conv0 and the first ResBlock alone.
    let p = &model.params;
    let mut o = Graph::<f32>::new();
    let mut load = |name: &str| o.input(p.get(name).unwrap().clone());
    let names = ["conv0.w", "conv0.b", "rb1.conv1.w", "rb1.conv1.b", "rb1.conv2.w", "rb1.conv2.b", "rb1.proj.w", "rb1.proj.b"];
    let v: Vec<_> = names.iter().map(|n| load(&format!("primary.enc.{n}"))).collect();
    let x = o.input(Tensor::new(&[1, 1, 16, 16], images.iter().copied().collect()).unwrap());
    let x = o.conv2d(x, v[0], Some(v[1]), 2, 1).unwrap();
    let x = o.relu(x);
    let h = o.conv2d(x, v[2], Some(v[3]), 2, 1).unwrap();
    let h = o.relu(h);
    let h = o.conv2d(h, v[4], Some(v[5]), 1, 1).unwrap();
    let s = o.conv2d(x, v[6], Some(v[7]), 2, 0).unwrap();
    let y = o.add(h, s).unwrap();
    let y = o.relu(y);
    assert_eq!(g.value(f).data(), o.value(y).data());
}

fn features_tensor(c: usize, value: impl Fn(usize) -> f32) -> Tensor<f32> {
    Tensor::from_fn(&[1, c, 4, 4], |i| value(i / 16))
}

#[test]
fn attention_examples() {
    let config = small_config(16, 4);
    let model = Model::new(config, 4).unwrap();
    let mut g = Graph::new();
    let mut net = Net::new(&mut g, &model.params, &model.config, &FROZEN);

    let zero = net.graph.input(features_tensor(4, |_| 0.0));
    let a = net.make_attention(zero, AttributeBranch::Cracking).unwrap();
    assert_eq!(net.graph.value(a).shape(), &[1, 1, 16, 16]);
    assert!(net.graph.value(a).data().iter().all(|&v| v == 0.5));

    let cracking_only = net.graph.input(features_tensor(4, |c| if c < 2 { 50.0 } else { 0.0 }));
    let cr = net.make_attention(cracking_only, AttributeBranch::Cracking).unwrap();
    let co = net.make_attention(cracking_only, AttributeBranch::Contamination).unwrap();
    assert!(net.graph.value(cr).data().iter().all(|&v| v > 0.999));
    assert!(net.graph.value(co).data().iter().all(|&v| v == 0.5));

    let img = net.image(&Array3::from_elem((1, 16, 16), 0.8)).unwrap();
    let half = net.graph.input(Tensor::full(&[1, 1, 16, 16], 0.5));
    let w = net.attention_weight(img, half).unwrap();
    assert!(net.graph.value(w).data().iter().all(|&v| v == 0.4));
}

#[test]
fn attention_matches_composed_ops() {
    let config = small_config(16, 4);
    let model = Model::new(config, 5).unwrap();
    let feats = Tensor::from_fn(&[2, 4, 4, 4], |i| ((i * 37 % 23) as f32 - 11.0) / 7.0);
    for target in AttributeBranch::BOTH {
        let mut g = Graph::new();
        let mut net = Net::new(&mut g, &model.params, &model.config, &FROZEN);
        let f = net.graph.input(feats.clone());
        let a = net.make_attention(f, target).unwrap();

        let mut o = Graph::new();
        let f = o.input(feats.clone());
        let m = o.channel_max_pool(f, target.channels(4)).unwrap();
        let u = o.upsample(m, 16, 16, UpsampleMode::Bilinear).unwrap();
        let s = o.sigmoid(u);
        assert_eq!(g.value(a).data(), o.value(s).data());
    }
}

#[test]
fn heads_and_decoder_examples() {
    let config = small_config(16, 4);
    let mut model = Model::new(config, 6).unwrap();
    zero_matching(&mut model.params, |n| n.contains(".dec.") || n.contains(".cls.fc1.w"));
    for (name, t, _) in model.params.iter_mut() {
        if name.ends_with("fc2.b") {
            t.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.5 + i as f32);
        }
    }
    let mut g = Graph::new();
    let mut net = Net::new(&mut g, &model.params, &model.config, &FROZEN);
    let feats = net.graph.input(Tensor::from_fn(&[2, 4, 4, 4], |i| i as f32 * 0.01));
    let (attrs, overall) = net.primary_classifier(feats).unwrap();
    assert_eq!(net.graph.value(attrs).data(), &[0.5, 1.5, 2.5, 3.5, 0.5, 1.5, 2.5, 3.5]);
    let o = net.graph.value(overall).data().to_vec();
    assert_eq!(o[0], o[1]);

    let recon = net.decode(feats, Branch::Primary).unwrap();
    assert_eq!(net.graph.value(recon).shape(), &[2, 1, 16, 16]);
    assert!(net.graph.value(recon).data().iter().all(|&v| v == 0.5));
}

#[test]
fn overall_depends_only_on_attributes() {
    let config = small_config(16, 4);
    let mut model = Model::new(config, 7).unwrap();
    zero_matching(&mut model.params, |n| n == "primary.cls.fc2.w");
    let outs: Vec<f32> = [1u64, 2]
        .iter()
        .map(|&seed| {
            let out = model.forward(&random_images(1, 16, seed)).unwrap();
            out.primary_overall[0]
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn fusion_is_batch_equivariant() {
    let config = small_config(16, 4);
    let model = Model::new(config, 8).unwrap();
    let images = random_images(3, 16, 9);
    let mut swapped = images.clone();
    swapped.index_axis_mut(ndarray::Axis(0), 0).assign(&images.index_axis(ndarray::Axis(0), 2));
    swapped.index_axis_mut(ndarray::Axis(0), 2).assign(&images.index_axis(ndarray::Axis(0), 0));
    let a = model.predict_full(&images).unwrap();
    let b = model.predict_full(&swapped).unwrap();
    assert_eq!(a[0], b[2]);
    assert_eq!(a[1], b[1]);
    assert_eq!(a[2], b[0]);
}

#[test]
fn loss_arithmetic() {
    let labels = [ScoreVector::full([0.0; 5])];
    let targets = Targets::<f64>::from_labels(&labels).unwrap();
    let mut g = Graph::new();
    let attrs = g.input(Tensor::full(&[1, 4], 4.0));
    let overall = g.input(Tensor::full(&[1, 1], 4.0));
    let l = supervised_loss(&mut g, attrs, overall, &targets).unwrap();
    assert_eq!(g.value(l).item(), 32.0);

    let perfect = g.input(Tensor::zeros(&[1, 4]));
    let perfect_o = g.input(Tensor::zeros(&[1, 1]));
    let l = supervised_loss(&mut g, perfect, perfect_o, &targets).unwrap();
    assert_eq!(g.value(l).item(), 0.0);

    let unlabeled = Targets::<f64>::from_labels(&[ScoreVector::unlabeled()]).unwrap();
    let l = supervised_loss(&mut g, attrs, overall, &unlabeled).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
}

#[test]
fn labels_are_rounded_for_training() {
    let t = Targets::<f32>::from_labels(&[ScoreVector([Some(2.6), Some(0.4), None, Some(3.5), Some(1.0)])]).unwrap();
    assert_eq!(t.attrs.data(), &[3.0, 0.0, 0.0, 4.0]);
    assert_eq!(t.attrs_mask, [true, true, false, true]);
    assert_eq!(t.overall.data(), &[1.0]);
}

#[test]
fn forward_invariants() {
    let config = small_config(16, 4);
    let model = Model::new(config, 10).unwrap();
    let images = random_images(2, 16, 11);
    let out = model.forward(&images).unwrap();
    for i in 0..2 {
        assert!(out.attention[i].iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(out.attn_inputs[i].iter().zip(images.iter()).all(|(a, b)| a <= b));
        assert_eq!(out.attr_recons[i].dim(), (2, 16, 16));
    }
    assert_eq!(out.primary_recon.dim(), (2, 16, 16));
    assert_eq!(out.fusion_attrs.dim(), (2, 4));
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.xcn");
    let model = Model::new(small_config(16, 4), 12).unwrap();
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back.config, model.config);
    let images = random_images(1, 16, 13);
    assert_eq!(model.predict_full(&images).unwrap(), back.predict_full(&images).unwrap());
}

#[test]
fn end_to_end_gradient_check() {
    let errors = model_gradient_errors(&small_config(16, 4), 21, 1e-5);
    assert!(errors.len() > 50);
    for (name, e) in errors {
        assert!(e <= 1e-4, "{name}: {e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn contamination_half_does_not_touch_cracking_map(seed in 0u64..1000, bump in 0.1f32..5.0) {
        let config = small_config(16, 4);
        let model = Model::new(config, 14).unwrap();
        let base = Tensor::from_fn(&[1, 4, 4, 4], |i| ((i as u64 * 2654435761 + seed) % 97) as f32 / 50.0 - 1.0);
        let mut bumped = base.clone();
        bumped.data_mut()[32..].iter_mut().for_each(|v| *v += bump);
        let maps: Vec<Vec<f32>> = [base, bumped]
            .into_iter()
            .map(|t| {
                let mut g = Graph::new();
                let mut net = Net::new(&mut g, &model.params, &model.config, &FROZEN);
                let f = net.graph.input(t);
                let a = net.make_attention(f, AttributeBranch::Cracking).unwrap();
                g.value(a).data().to_vec()
            })
            .collect();
        prop_assert_eq!(&maps[0], &maps[1]);
    }
}
