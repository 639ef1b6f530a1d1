#![allow(dead_code)]

use gridscreen::diff::gradcheck::{check_gradients, numeric_gradient, relative_error};
use gridscreen::diff::{DiffError, Graph, ParamInfo, ParamStore, Tensor, UpsampleMode, Var};
use gridscreen::model::{init_params, losses, Model, ModelConfig, Net, Targets};
use gridscreen::ScoreVector;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_config(input_size: usize, channels: usize) -> ModelConfig {
    ModelConfig { input_size, feature_channels: channels, classifier_hidden: 8, overall_hidden: 4, ..ModelConfig::default() }
}

pub fn random_images(n: usize, size: usize, seed: u64) -> Array3<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn((n, size, size), |_| rng.random_range(0.0..1.0))
}

fn total_loss(store: &ParamStore<f64>, config: &ModelConfig, images: &Array3<f32>, targets: &Targets<f64>, train: bool) -> (Graph<f64>, f64) {
    let mut g = Graph::new();
    let all = |_: ParamInfo| true;
    let none = |_: ParamInfo| false;
    let trainable: &dyn Fn(ParamInfo) -> bool = if train { &all } else { &none };
    let mut net = Net::new(&mut g, store, config, trainable);
    let img = net.image(images).unwrap();
    let out = net.forward(img).unwrap();
    let l = losses(&mut g, &out, targets).unwrap();
    let total = l.total(&mut g).unwrap();
    if train {
        g.backward(total);
    }
    let v = g.value(total).item();
    (g, v)
}

/// Per-parameter-tensor relative error of the summed network loss against
/// central differences, in `f64`.
pub fn model_gradient_errors(config: &ModelConfig, seed: u64, h: f64) -> Vec<(String, f64)> {
    let store32 = init_params(config, seed).unwrap();
    let mut store: ParamStore<f64> = store32.cast();
    // Nonzero biases so no unit sits exactly on a ReLU kink.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (_, t, _) in store.iter_mut() {
        if t.shape().len() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let images = random_images(2, config.input_size, seed + 1);
    let labels = [
        ScoreVector::full([1.0, 3.0, 0.0, 2.0, 4.0]),
        ScoreVector([Some(2.0), None, Some(4.0), None, None]),
    ];
    let targets = Targets::<f64>::from_labels(&labels).unwrap();

    let (g, _) = total_loss(&store, config, &images, &targets, true);
    let analytic: Vec<(String, Vec<f64>)> = {
        let mut tmp = store.clone();
        tmp.absorb_grads(&g);
        tmp.iter().map(|(n, t, _)| (n.to_string(), t.grad.clone().unwrap_or_else(|| vec![0.0; t.len()]))).collect()
    };

    let mut errors = Vec::new();
    for (name, grad) in analytic {
        let base = store.get(&name).unwrap().data().to_vec();
        let numeric = numeric_gradient(&base, h, |x| {
            store.get_mut(&name).unwrap().data_mut().copy_from_slice(x);
            total_loss(&store, config, &images, &targets, false).1
        });
        store.get_mut(&name).unwrap().data_mut().copy_from_slice(&base);
        errors.push((name, relative_error(&grad, &numeric)));
    }
    errors
}

pub fn fresh_model(config: ModelConfig, seed: u64) -> Model {
    Model::new(config, seed).unwrap()
}

/// Direct sliding-window NCC in `f64`; constant windows score 0.
pub fn ncc_oracle(image: &ndarray::Array2<f32>, template: &ndarray::Array2<f32>) -> ndarray::Array2<f64> {
    let (h, w) = image.dim();
    let (th, tw) = template.dim();
    let n = (th * tw) as f64;
    let tmean = template.iter().map(|&v| v as f64).sum::<f64>() / n;
    let tvar: f64 = template.iter().map(|&v| (v as f64 - tmean).powi(2)).sum();
    ndarray::Array2::from_shape_fn((h - th + 1, w - tw + 1), |(r, c)| {
        let mut wsum = 0.0;
        for i in 0..th {
            for j in 0..tw {
                wsum += image[[r + i, c + j]] as f64;
            }
        }
        let wmean = wsum / n;
        let (mut num, mut wvar) = (0.0, 0.0);
        for i in 0..th {
            for j in 0..tw {
                let a = image[[r + i, c + j]] as f64 - wmean;
                num += a * (template[[i, j]] as f64 - tmean);
                wvar += a * a;
            }
        }
        if wvar <= 1e-12 * n || tvar == 0.0 {
            0.0
        } else {
            num / (wvar * tvar).sqrt()
        }
    })
}

/// Noisy montage holding a jittered 5×5 lattice of bright `inner`-px
/// squares, and the true square centers.
pub fn lattice_montage(seed: u64, inner: usize, spacing: usize) -> (ndarray::Array2<f32>, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 5 * spacing + spacing / 2;
    let mut img = ndarray::Array2::from_shape_fn((size, size), |_| 0.1 + rng.random_range(-0.03f32..0.03));
    let jitter = (spacing - inner) as i64 / 4;
    let mut centers = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let r0 = (spacing / 2 + i * spacing) as i64 + rng.random_range(-jitter..=jitter);
            let c0 = (spacing / 2 + j * spacing) as i64 + rng.random_range(-jitter..=jitter);
            let level = rng.random_range(0.6f32..0.9);
            let (r0, c0) = (r0 as usize, c0 as usize);
            for r in r0..r0 + inner {
                for c in c0..c0 + inner {
                    img[[r, c]] = level + rng.random_range(-0.03f32..0.03);
                }
            }
            centers.push((r0 + inner / 2, c0 + inner / 2));
        }
    }
    (img, centers)
}

/// Independent big-endian MRC encoder for `[nz, ny, nx]` data in `mode`.
pub fn encode_big_endian(data: &ndarray::Array3<f32>, mode: i32) -> Vec<u8> {
    let (nz, ny, nx) = data.dim();
    let mut out = vec![0u8; 1024];
    for (k, v) in [nx as i32, ny as i32, nz as i32, mode].iter().enumerate() {
        out[4 * k..4 * k + 4].copy_from_slice(&v.to_be_bytes());
    }
    for (k, v) in [nx as i32, ny as i32, nz as i32].iter().enumerate() {
        out[28 + 4 * k..32 + 4 * k].copy_from_slice(&v.to_be_bytes());
    }
    for (k, v) in [1i32, 2, 3].iter().enumerate() {
        out[64 + 4 * k..68 + 4 * k].copy_from_slice(&v.to_be_bytes());
    }
    out[208..212].copy_from_slice(b"MAP ");
    out[212..216].copy_from_slice(&[0x11, 0x11, 0, 0]);
    for &v in data.iter() {
        match mode {
            0 => out.push(v as i8 as u8),
            1 => out.extend_from_slice(&(v as i16).to_be_bytes()),
            2 => out.extend_from_slice(&v.to_be_bytes()),
            6 => out.extend_from_slice(&(v as u16).to_be_bytes()),
            _ => panic!("mode {mode}"),
        }
    }
    out
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Worst relative gradient error per group of graph ops, in `f64`.
pub fn op_gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut out = Vec::new();
    let mut report = |name: &'static str, errs: Vec<f64>| out.push((name, errs.into_iter().fold(0.0, f64::max)));

    let ins = [random_tensor(&[2, 2, 5, 5], &mut rng), random_tensor(&[3, 2, 3, 3], &mut rng), random_tensor(&[3], &mut rng)];
    report(
        "conv2d",
        check_gradients(&ins, h, |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
            let t = g.mul(y, y)?;
            g.global_avg_pool(t).and_then(|p| sum_all(g, p))
        })
        .unwrap(),
    );

    let ins = [random_tensor(&[2, 3, 3, 3], &mut rng), random_tensor(&[3, 2, 4, 4], &mut rng), random_tensor(&[2], &mut rng)];
    report(
        "conv_transpose2d",
        check_gradients(&ins, h, |g, v| {
            let y = g.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1)?;
            let t = g.mul(y, y)?;
            g.global_avg_pool(t).and_then(|p| sum_all(g, p))
        })
        .unwrap(),
    );

    let ins = [random_tensor(&[1, 2, 4, 4], &mut rng)];
    report(
        "relu+sigmoid+scale",
        check_gradients(&ins, h, |g, v| {
            let r = g.relu(v[0]);
            let s = g.sigmoid(v[0]);
            let s = g.scale(s, 3.0);
            let y = g.add(r, s)?;
            let y = g.mul(y, v[0])?;
            g.global_avg_pool(y).and_then(|p| sum_all(g, p))
        })
        .unwrap(),
    );

    let ins = [random_tensor(&[2, 4, 3, 3], &mut rng)];
    report(
        "channel_max+upsample",
        check_gradients(&ins, h, |g, v| {
            let a = g.channel_max_pool(v[0], 0..2)?;
            let b = g.channel_max_pool(v[0], 2..4)?;
            let a = g.upsample(a, 7, 7, UpsampleMode::Bilinear)?;
            let b = g.upsample(b, 6, 6, UpsampleMode::Nearest)?;
            let a2 = g.mul(a, a)?;
            let b2 = g.mul(b, b)?;
            let pa = g.global_avg_pool(a2)?;
            let pb = g.global_avg_pool(b2)?;
            let (sa, sb) = (sum_all(g, pa)?, sum_all(g, pb)?);
            g.add(sa, sb)
        })
        .unwrap(),
    );

    let ins = [random_tensor(&[3, 4], &mut rng), random_tensor(&[4, 2], &mut rng), random_tensor(&[2], &mut rng), random_tensor(&[3, 2], &mut rng)];
    report(
        "linear+masked_mse",
        check_gradients(&ins, h, |g, v| {
            let y = g.linear(v[0], v[1], v[2])?;
            g.masked_mse(y, v[3], Some(vec![true, false, true, true, false, true]))
        })
        .unwrap(),
    );

    let ins = [random_tensor(&[2, 1, 3, 3], &mut rng), random_tensor(&[2, 2, 3, 3], &mut rng)];
    report(
        "concat+mse+sum",
        check_gradients(&ins, h, |g, v| {
            let c = g.concat_channels(&[v[0], v[1], v[0]])?;
            let t = g.sigmoid(c);
            let a = g.mse(c, t)?;
            let u = g.sigmoid(v[1]);
            let b = g.mse(v[1], u)?;
            g.sum(&[a, b, a])
        })
        .unwrap(),
    );
    out
}

fn sum_all(g: &mut Graph<f64>, pooled: Var) -> Result<Var, DiffError> {
    // [N,C] -> scalar via a ones-weighted linear map and mean.
    let (n, c) = (g.value(pooled).shape()[0], g.value(pooled).shape()[1]);
    let w = g.input(Tensor::full(&[c, 1], 1.0));
    let b = g.input(Tensor::zeros(&[1]));
    let y = g.linear(pooled, w, b)?;
    let zero = g.input(Tensor::zeros(&[n, 1]));
    let sq = g.mse(y, zero)?;
    Ok(sq)
}
