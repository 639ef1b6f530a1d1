//! Operation tape. Every op appends a node holding its forward value;
//! [`Graph::backward`] walks the tape in reverse.

use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom};
use super::params::ParamStore;
use super::{shape_err, DiffError, Real, Tensor};

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, k: Var, b: Option<Var>, geom: ConvGeom, filters: usize },
    ConvT { x: Var, k: Var, b: Option<Var>, geom: ConvGeom, cin: usize },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    GlobalAvgPool(Var),
    ChannelMax { x: Var, argmax: Vec<u32> },
    Upsample { x: Var, mode: UpsampleMode },
    Linear { x: Var, w: Var, b: Var },
    Mse { a: Var, b: Var, mask: Option<Vec<bool>>, count: usize },
    Concat(Vec<Var>),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
    param: Option<String>,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad, param: None });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    /// Constant leaf; gradients never flow into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Copies parameter `name` in as a leaf. Frozen parameters become
    /// constants, so nothing upstream of them is differentiated.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str, trainable: bool) -> Result<Var, DiffError> {
        let mut value = store.get(name).ok_or_else(|| DiffError::UnknownParam(name.to_string()))?.clone();
        value.grad = None;
        let v = self.push(value, Op::Leaf, trainable);
        self.nodes[v.0].param = Some(name.to_string());
        Ok(v)
    }

    /// Same value, cut from the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let mut value = self.nodes[v.0].value.clone();
        value.grad = None;
        self.push(value, Op::Leaf, false)
    }

    /// Gradients of named parameter leaves.
    pub fn param_grads(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.nodes.iter().filter_map(|n| match (&n.param, &n.value.grad) {
            (Some(name), Some(g)) => Some((name.as_str(), g.as_slice())),
            _ => None,
        })
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var, DiffError> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[1] {
            return Err(shape_err("conv2d", format!("input {xs:?}, kernel {ks:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ks[0]] {
                return Err(shape_err("conv2d", format!("bias {:?} for {} filters", self.shape(b), ks[0])));
            }
        }
        let geom = ConvGeom::new(xs[1], xs[2], xs[3], ks[2], ks[3], stride, pad)
            .ok_or_else(|| shape_err("conv2d", format!("kernel {ks:?} larger than padded input {xs:?}")))?;
        let out = kernels::conv_forward(
            self.value(x).data(),
            xs[0],
            &geom,
            self.value(k).data(),
            ks[0],
            b.map(|b| self.value(b).data()),
        );
        let needs = self.needs(x) || self.needs(k) || b.is_some_and(|b| self.needs(b));
        let t = Tensor::new(&[xs[0], ks[0], geom.oh, geom.ow], out)?;
        Ok(self.push(t, Op::Conv { x, k, b, geom, filters: ks[0] }, needs))
    }

    /// Transposed convolution (the adjoint of `conv2d`); kernel is
    /// `[Cin, Cout, kh, kw]`, output side `(H−1)·stride − 2·pad + kh`.
    pub fn conv_transpose2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var, DiffError> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[0] || stride == 0 {
            return Err(shape_err("conv_transpose2d", format!("input {xs:?}, kernel {ks:?}")));
        }
        let oh = ((xs[2] - 1) * stride + ks[2]) as isize - 2 * pad as isize;
        let ow = ((xs[3] - 1) * stride + ks[3]) as isize - 2 * pad as isize;
        if oh <= 0 || ow <= 0 {
            return Err(shape_err("conv_transpose2d", format!("empty output for input {xs:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ks[1]] {
                return Err(shape_err("conv_transpose2d", format!("bias {:?}", self.shape(b))));
            }
        }
        let geom = ConvGeom::new(ks[1], oh as usize, ow as usize, ks[2], ks[3], stride, pad)
            .filter(|g| g.oh == xs[2] && g.ow == xs[3])
            .ok_or_else(|| shape_err("conv_transpose2d", "inconsistent geometry"))?;
        let out = kernels::tconv_forward(
            self.value(x).data(),
            xs[0],
            xs[1],
            &geom,
            self.value(k).data(),
            b.map(|b| self.value(b).data()),
        );
        let needs = self.needs(x) || self.needs(k) || b.is_some_and(|b| self.needs(b));
        let t = Tensor::new(&[xs[0], ks[1], oh as usize, ow as usize], out)?;
        Ok(self.push(t, Op::ConvT { x, k, b, geom, cin: xs[1] }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| if a < T::zero() { T::zero() } else { a }).collect()).unwrap();
        let needs = self.needs(x);
        self.push(t, Op::Relu(x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| sigmoid(a)).collect()).unwrap();
        let needs = self.needs(x);
        self.push(t, Op::Sigmoid(x), needs)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), DiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.same_shape("add", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let t = Tensor::new(va.shape(), va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect())?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.same_shape("mul", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let t = Tensor::new(va.shape(), va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect())?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::of(factor);
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| a * f).collect()).unwrap();
        let needs = self.needs(x);
        self.push(t, Op::Scale(x, factor), needs)
    }

    /// Sum of same-shaped values (typically scalar losses).
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var, DiffError> {
        let (&first, rest) = terms.split_first().ok_or_else(|| shape_err("sum", "no terms"))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// `[N,C,H,W] → [N,C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var, DiffError> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(shape_err("global_avg_pool", format!("{s:?}")));
        }
        let hw = s[2] * s[3];
        let inv = T::of(1.0 / hw as f64);
        let data = self.value(x).data().chunks(hw).map(|c| c.iter().copied().sum::<T>() * inv).collect();
        let t = Tensor::new(&[s[0], s[1]], data)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::GlobalAvgPool(x), needs))
    }

    /// Per-pixel maximum over channels `channels.start..channels.end`,
    /// giving `[N,1,H,W]`.
    pub fn channel_max_pool(&mut self, x: Var, channels: std::ops::Range<usize>) -> Result<Var, DiffError> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || channels.is_empty() || channels.end > s[1] {
            return Err(shape_err("channel_max_pool", format!("{s:?} over {channels:?}")));
        }
        let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
        let data = self.value(x).data();
        let mut out = vec![T::zero(); n * hw];
        let mut argmax = vec![0u32; n * hw];
        for b in 0..n {
            for p in 0..hw {
                let mut best = channels.start;
                let mut val = data[(b * c + best) * hw + p];
                for ch in channels.start + 1..channels.end {
                    let v = data[(b * c + ch) * hw + p];
                    if v > val {
                        val = v;
                        best = ch;
                    }
                }
                out[b * hw + p] = val;
                argmax[b * hw + p] = best as u32;
            }
        }
        let t = Tensor::new(&[n, 1, s[2], s[3]], out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::ChannelMax { x, argmax }, needs))
    }

    pub fn upsample(&mut self, x: Var, out_h: usize, out_w: usize, mode: UpsampleMode) -> Result<Var, DiffError> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || out_h == 0 || out_w == 0 {
            return Err(shape_err("upsample", format!("{s:?} -> {out_h}x{out_w}")));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); planes * out_h * out_w];
        match mode {
            UpsampleMode::Bilinear => {
                let (ty, tx) = (kernels::bilinear_taps(h, out_h), kernels::bilinear_taps(w, out_w));
                for p in 0..planes {
                    let plane = &src[p * h * w..(p + 1) * h * w];
                    let dst = &mut out[p * out_h * out_w..(p + 1) * out_h * out_w];
                    for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                        let ly = T::of(ly);
                        for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                            let lx = T::of(lx);
                            let top = plane[y0 * w + x0] * (T::one() - lx) + plane[y0 * w + x1] * lx;
                            let bot = plane[y1 * w + x0] * (T::one() - lx) + plane[y1 * w + x1] * lx;
                            dst[oy * out_w + ox] = top * (T::one() - ly) + bot * ly;
                        }
                    }
                }
            }
            UpsampleMode::Nearest => {
                let (ty, tx) = (kernels::nearest_taps(h, out_h), kernels::nearest_taps(w, out_w));
                for p in 0..planes {
                    for (oy, &y) in ty.iter().enumerate() {
                        for (ox, &xx) in tx.iter().enumerate() {
                            out[(p * out_h + oy) * out_w + ox] = src[(p * h + y) * w + xx];
                        }
                    }
                }
            }
        }
        let t = Tensor::new(&[s[0], s[1], out_h, out_w], out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Upsample { x, mode }, needs))
    }

    /// `x·W + b` with `x:[N,D]`, `W:[D,E]`, `b:[E]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let (xs, ws, bs) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bs != [ws[1]] {
            return Err(shape_err("linear", format!("x {xs:?}, W {ws:?}, b {bs:?}")));
        }
        let (n, d, e) = (xs[0], xs[1], ws[1]);
        let mut out = vec![T::zero(); n * e];
        for row in out.chunks_mut(e) {
            row.copy_from_slice(self.value(b).data());
        }
        kernels::gemm(n, d, e, self.value(x).data(), false, self.value(w).data(), false, &mut out, true);
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        let t = Tensor::new(&[n, e], out)?;
        Ok(self.push(t, Op::Linear { x, w, b }, needs))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.masked_mse(a, b, None)
    }

    /// Mean squared error over the elements where `mask` is true; zero (with
    /// zero gradient) when nothing is selected.
    pub fn masked_mse(&mut self, a: Var, b: Var, mask: Option<Vec<bool>>) -> Result<Var, DiffError> {
        self.same_shape("mse", a, b)?;
        let len = self.value(a).len();
        if mask.as_ref().is_some_and(|m| m.len() != len) {
            return Err(shape_err("mse", "mask length"));
        }
        let count = mask.as_ref().map_or(len, |m| m.iter().filter(|&&k| k).count());
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut total = T::zero();
        for i in 0..len {
            if mask.as_ref().is_none_or(|m| m[i]) {
                let d = va[i] - vb[i];
                total += d * d;
            }
        }
        let loss = if count == 0 { T::zero() } else { total / T::of(count as f64) };
        let needs = count > 0 && (self.needs(a) || self.needs(b));
        Ok(self.push(Tensor::scalar(loss), Op::Mse { a, b, mask, count }, needs))
    }

    /// Concatenation of `[N,Ci,H,W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = self.shape(*parts.first().ok_or_else(|| shape_err("concat", "no parts"))?).to_vec();
        if first.len() != 4 {
            return Err(shape_err("concat", format!("{first:?}")));
        }
        let mut channels = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3] {
                return Err(shape_err("concat", format!("{s:?} vs {first:?}")));
            }
            channels += s[1];
        }
        let (n, hw) = (first[0], first[2] * first[3]);
        let mut out = Vec::with_capacity(n * channels * hw);
        for b in 0..n {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.value(p).data()[b * c * hw..(b + 1) * c * hw]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let t = Tensor::new(&[n, channels, first[2], first[3]], out)?;
        Ok(self.push(t, Op::Concat(parts.to_vec()), needs))
    }

    /// Reverse-mode pass from a one-element `loss`. Leaf gradients are added
    /// to whatever earlier calls left there.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.needs(loss) {
            return;
        }
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(gy) = (match self.nodes[i].op {
                Op::Leaf => None,
                _ => grads[i].take(),
            }) else {
                continue;
            };
            self.propagate(i, &gy, &mut grads);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if let (Op::Leaf, true, Some(g)) = (&node.op, node.needs_grad, g) {
                node.value.accumulate_grad(&g);
            }
        }
    }

    fn propagate(&self, i: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let zeros = |v: Var| vec![T::zero(); self.nodes[v.0].value.len()];
        // Temporarily moves a parent's gradient buffer out of `grads`.
        let take = |v: Var, grads: &mut [Option<Vec<T>>]| -> Option<Vec<T>> {
            self.needs(v).then(|| grads[v.0].take().unwrap_or_else(|| zeros(v)))
        };
        let put = |v: Var, g: Option<Vec<T>>, grads: &mut [Option<Vec<T>>]| {
            if g.is_some() {
                grads[v.0] = g;
            }
        };
        let add_into = |v: Var, contrib: Vec<T>, grads: &mut [Option<Vec<T>>]| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(buf) => buf.iter_mut().zip(contrib).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, k, b, geom, filters } => {
                let (mut dx, mut dk) = (take(*x, grads), take(*k, grads));
                let mut db = b.and_then(|b| take(b, grads));
                let n = self.shape(*x)[0];
                kernels::conv_backward(
                    self.value(*x).data(),
                    n,
                    geom,
                    self.value(*k).data(),
                    *filters,
                    gy,
                    dx.as_deref_mut(),
                    dk.as_deref_mut(),
                    db.as_deref_mut(),
                );
                put(*x, dx, grads);
                put(*k, dk, grads);
                if let Some(b) = b {
                    put(*b, db, grads);
                }
            }
            Op::ConvT { x, k, b, geom, cin } => {
                let (mut dx, mut dk) = (take(*x, grads), take(*k, grads));
                let mut db = b.and_then(|b| take(b, grads));
                let n = self.shape(*x)[0];
                kernels::tconv_backward(
                    self.value(*x).data(),
                    n,
                    *cin,
                    geom,
                    self.value(*k).data(),
                    gy,
                    dx.as_deref_mut(),
                    dk.as_deref_mut(),
                    db.as_deref_mut(),
                );
                put(*x, dx, grads);
                put(*k, dk, grads);
                if let Some(b) = b {
                    put(*b, db, grads);
                }
            }
            Op::Relu(x) => {
                let y = node.value.data();
                let g = gy.iter().zip(y).map(|(&g, &y)| if y > T::zero() { g } else { T::zero() }).collect();
                add_into(*x, g, grads);
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let g = gy.iter().zip(y).map(|(&g, &y)| g * y * (T::one() - y)).collect();
                add_into(*x, g, grads);
            }
            Op::Add(a, b) => {
                add_into(*a, gy.to_vec(), grads);
                add_into(*b, gy.to_vec(), grads);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    add_into(*a, gy.iter().zip(vb).map(|(&g, &y)| g * y).collect(), grads);
                }
                if self.needs(*b) {
                    add_into(*b, gy.iter().zip(va).map(|(&g, &x)| g * x).collect(), grads);
                }
            }
            Op::Scale(x, f) => {
                let f = T::of(*f);
                add_into(*x, gy.iter().map(|&g| g * f).collect(), grads);
            }
            Op::GlobalAvgPool(x) => {
                let s = self.shape(*x);
                let hw = s[2] * s[3];
                let inv = T::of(1.0 / hw as f64);
                let g = gy.iter().flat_map(|&g| std::iter::repeat_n(g * inv, hw)).collect();
                add_into(*x, g, grads);
            }
            Op::ChannelMax { x, argmax } => {
                let s = self.shape(*x);
                let (c, hw) = (s[1], s[2] * s[3]);
                let mut g = zeros(*x);
                for (idx, (&gv, &ch)) in gy.iter().zip(argmax).enumerate() {
                    let (b, p) = (idx / hw, idx % hw);
                    g[(b * c + ch as usize) * hw + p] += gv;
                }
                add_into(*x, g, grads);
            }
            Op::Upsample { x, mode } => {
                let s = self.shape(*x);
                let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
                let (oh, ow) = (node.value.shape()[2], node.value.shape()[3]);
                let mut g = zeros(*x);
                match mode {
                    UpsampleMode::Bilinear => {
                        let (ty, tx) = (kernels::bilinear_taps(h, oh), kernels::bilinear_taps(w, ow));
                        for p in 0..planes {
                            let dst = &mut g[p * h * w..(p + 1) * h * w];
                            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                                let ly = T::of(ly);
                                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                                    let lx = T::of(lx);
                                    let gv = gy[(p * oh + oy) * ow + ox];
                                    let (top, bot) = (gv * (T::one() - ly), gv * ly);
                                    dst[y0 * w + x0] += top * (T::one() - lx);
                                    dst[y0 * w + x1] += top * lx;
                                    dst[y1 * w + x0] += bot * (T::one() - lx);
                                    dst[y1 * w + x1] += bot * lx;
                                }
                            }
                        }
                    }
                    UpsampleMode::Nearest => {
                        let (ty, tx) = (kernels::nearest_taps(h, oh), kernels::nearest_taps(w, ow));
                        for p in 0..planes {
                            for (oy, &y) in ty.iter().enumerate() {
                                for (ox, &xx) in tx.iter().enumerate() {
                                    g[(p * h + y) * w + xx] += gy[(p * oh + oy) * ow + ox];
                                }
                            }
                        }
                    }
                }
                add_into(*x, g, grads);
            }
            Op::Linear { x, w, b } => {
                let (n, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let e = self.shape(*w)[1];
                if self.needs(*x) {
                    let mut g = zeros(*x);
                    kernels::gemm(n, e, d, gy, false, self.value(*w).data(), true, &mut g, false);
                    add_into(*x, g, grads);
                }
                if self.needs(*w) {
                    let mut g = zeros(*w);
                    kernels::gemm(d, n, e, self.value(*x).data(), true, gy, false, &mut g, false);
                    add_into(*w, g, grads);
                }
                if self.needs(*b) {
                    let mut g = zeros(*b);
                    for row in gy.chunks(e) {
                        g.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                    }
                    add_into(*b, g, grads);
                }
            }
            Op::Mse { a, b, mask, count } => {
                let scale = gy[0] * T::of(2.0 / *count as f64);
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let da: Vec<T> = va
                    .iter()
                    .zip(vb)
                    .enumerate()
                    .map(|(i, (&x, &y))| {
                        if mask.as_ref().is_none_or(|m| m[i]) {
                            (x - y) * scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                if self.needs(*b) {
                    add_into(*b, da.iter().map(|&v| -v).collect(), grads);
                }
                add_into(*a, da, grads);
            }
            Op::Concat(parts) => {
                let s = node.value.shape();
                let (n, total_c, hw) = (s[0], s[1], s[2] * s[3]);
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if self.needs(p) {
                        let mut g = Vec::with_capacity(n * c * hw);
                        for b in 0..n {
                            let start = (b * total_c + offset) * hw;
                            g.extend_from_slice(&gy[start..start + c * hw]);
                        }
                        add_into(p, g, grads);
                    }
                    offset += c;
                }
            }
        }
    }
}

pub(crate) fn sigmoid<T: Real>(a: T) -> T {
    if a >= T::zero() {
        T::one() / (T::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (T::one() + e)
    }
}
