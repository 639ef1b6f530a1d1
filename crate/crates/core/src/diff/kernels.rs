//! Raw slice kernels behind the graph operations.

use super::Real;

/// `c (+)= op(a) · op(b)`, all row-major; `a` is m×k after the optional
/// transpose, `b` is k×n.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: lengths checked above; strides describe in-bounds row-major
    // layouts of those lengths, and `c` is a distinct mutable borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Geometry of a 2-D convolution over one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || kh > h + 2 * pad || kw > w + 2 * pad {
            return None;
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Some(ConvGeom { channels, h, w, kh, kw, stride, pad, oh, ow })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel index for output `o` and kernel tap `k` along one axis.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
        let p = (o * stride + k) as isize - pad as isize;
        (p >= 0 && (p as usize) < len).then_some(p as usize)
    }

    /// Outputs `lo..hi` whose tap `k` lands inside `0..len`, and the source
    /// index of output `lo`.
    #[inline]
    fn valid(k: usize, stride: usize, pad: usize, len: usize, outputs: usize) -> (usize, usize, usize) {
        let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
        let hi = if len + pad > k { ((len + pad - k - 1) / stride + 1).min(outputs) } else { 0 };
        if lo >= hi {
            return (0, 0, 0);
        }
        (lo, hi, lo * stride + k - pad)
    }
}

/// Unfolds one `[C,H,W]` sample into columns `offset..offset + oh·ow` of a
/// `[C·kh·kw, stride]` matrix.
pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T], stride: usize, offset: usize) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * stride + offset;
                let dst = &mut cols[row..row + ncols];
                let (lo, hi, x0) = ConvGeom::valid(j, g.stride, g.pad, g.w, g.ow);
                for oy in 0..g.oh {
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let Some(y) = ConvGeom::src(oy, i, g.stride, g.pad, g.h) else {
                        out.fill(T::zero());
                        continue;
                    };
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    let src_row = &plane[y * g.w..(y + 1) * g.w];
                    if g.stride == 1 {
                        out[lo..hi].copy_from_slice(&src_row[x0..x0 + hi - lo]);
                    } else {
                        for (o, &v) in out[lo..hi].iter_mut().zip(src_row[x0..].iter().step_by(g.stride)) {
                            *o = v;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `[C,H,W]`.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &ConvGeom, x: &mut [T], stride: usize, offset: usize) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * stride + offset;
                let src = &cols[row..row + ncols];
                let (lo, hi, x0) = ConvGeom::valid(j, g.stride, g.pad, g.w, g.ow);
                if lo == hi {
                    continue;
                }
                for oy in 0..g.oh {
                    let Some(y) = ConvGeom::src(oy, i, g.stride, g.pad, g.h) else { continue };
                    let dst_row = &mut plane[y * g.w + x0..(y + 1) * g.w];
                    let src_row = &src[oy * g.ow + lo..oy * g.ow + hi];
                    if g.stride == 1 {
                        dst_row.iter_mut().zip(src_row).for_each(|(d, &v)| *d += v);
                    } else {
                        dst_row.iter_mut().step_by(g.stride).zip(src_row).for_each(|(d, &v)| *d += v);
                    }
                }
            }
        }
    }
}

/// `[N, C, L] → [C, N·L]`.
fn to_channel_major<T: Real>(x: &[T], n: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * c * l];
    for s in 0..n {
        for ch in 0..c {
            out[(ch * n + s) * l..(ch * n + s + 1) * l].copy_from_slice(&x[(s * c + ch) * l..(s * c + ch + 1) * l]);
        }
    }
    out
}

/// `[C, N·L] → [N, C, L]`, added into `out`.
fn add_from_channel_major<T: Real>(x: &[T], n: usize, c: usize, l: usize, out: &mut [T]) {
    for s in 0..n {
        for ch in 0..c {
            let src = &x[(ch * n + s) * l..(ch * n + s + 1) * l];
            out[(s * c + ch) * l..(s * c + ch + 1) * l].iter_mut().zip(src).for_each(|(o, &v)| *o += v);
        }
    }
}

/// Cross-correlation `y[n] = K · im2col(x[n]) + b`; `k` is `[F, C·kh·kw]`.
/// The whole batch is unfolded side by side so one GEMM covers it.
pub(crate) fn conv_forward<T: Real>(x: &[T], n: usize, g: &ConvGeom, k: &[T], f: usize, b: Option<&[T]>) -> Vec<T> {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = g.channels * g.h * g.w;
    let wide = n * ncols;
    let mut cols = vec![T::zero(); rows * wide];
    for s in 0..n {
        im2col(&x[s * in_len..(s + 1) * in_len], g, &mut cols, wide, s * ncols);
    }
    let mut y = vec![T::zero(); f * wide];
    if let Some(b) = b {
        for (fi, chunk) in y.chunks_mut(wide).enumerate() {
            chunk.fill(b[fi]);
        }
    }
    gemm(f, rows, wide, k, false, &cols, false, &mut y, b.is_some());
    let mut out = vec![T::zero(); n * f * ncols];
    add_from_channel_major(&y, n, f, ncols, &mut out);
    out
}

/// Gradients of [`conv_forward`] given `dy`; each `Some` output is
/// accumulated into.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    x: &[T],
    n: usize,
    g: &ConvGeom,
    k: &[T],
    f: usize,
    dy: &[T],
    dx: Option<&mut [T]>,
    dk: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = g.channels * g.h * g.w;
    let wide = n * ncols;
    let dy_cm = to_channel_major(dy, n, f, ncols);
    if let Some(db) = db {
        for (fi, chunk) in dy_cm.chunks(wide).enumerate() {
            db[fi] += chunk.iter().copied().sum::<T>();
        }
    }
    let mut cols = vec![T::zero(); rows * wide];
    if let Some(dk) = dk {
        for s in 0..n {
            im2col(&x[s * in_len..(s + 1) * in_len], g, &mut cols, wide, s * ncols);
        }
        gemm(f, wide, rows, &dy_cm, false, &cols, true, dk, true);
    }
    if let Some(dx) = dx {
        gemm(rows, f, wide, k, true, &dy_cm, false, &mut cols, false);
        for s in 0..n {
            col2im(&cols, g, &mut dx[s * in_len..(s + 1) * in_len], wide, s * ncols);
        }
    }
}

/// Transposed convolution. `g` describes the adjoint convolution whose
/// *input* is this op's output (`[Cout, oh_t, ow_t]` = `[channels, h, w]`)
/// and whose output grid is this op's input (`[Cin, g.oh, g.ow]`); `k` is
/// `[Cin, Cout·kh·kw]`.
pub(crate) fn tconv_forward<T: Real>(x: &[T], n: usize, cin: usize, g: &ConvGeom, k: &[T], b: Option<&[T]>) -> Vec<T> {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let out_len = g.channels * g.h * g.w;
    let wide = n * ncols;
    let x_cm = to_channel_major(x, n, cin, ncols);
    let mut cols = vec![T::zero(); rows * wide];
    gemm(rows, cin, wide, k, true, &x_cm, false, &mut cols, false);
    let mut out = vec![T::zero(); n * out_len];
    for s in 0..n {
        let y = &mut out[s * out_len..(s + 1) * out_len];
        col2im(&cols, g, y, wide, s * ncols);
        if let Some(b) = b {
            for (c, chunk) in y.chunks_mut(g.h * g.w).enumerate() {
                chunk.iter_mut().for_each(|v| *v += b[c]);
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn tconv_backward<T: Real>(
    x: &[T],
    n: usize,
    cin: usize,
    g: &ConvGeom,
    k: &[T],
    dy: &[T],
    dx: Option<&mut [T]>,
    dk: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let out_len = g.channels * g.h * g.w;
    let wide = n * ncols;
    if let Some(db) = db {
        for s in 0..n {
            for (c, chunk) in dy[s * out_len..(s + 1) * out_len].chunks(g.h * g.w).enumerate() {
                db[c] += chunk.iter().copied().sum::<T>();
            }
        }
    }
    if dx.is_none() && dk.is_none() {
        return;
    }
    let mut cols = vec![T::zero(); rows * wide];
    for s in 0..n {
        im2col(&dy[s * out_len..(s + 1) * out_len], g, &mut cols, wide, s * ncols);
    }
    if let Some(dx) = dx {
        let mut dx_cm = vec![T::zero(); cin * wide];
        gemm(cin, rows, wide, k, false, &cols, false, &mut dx_cm, false);
        add_from_channel_major(&dx_cm, n, cin, ncols, dx);
    }
    if let Some(dk) = dk {
        let x_cm = to_channel_major(x, n, cin, ncols);
        gemm(cin, wide, rows, &x_cm, false, &cols, true, dk, true);
    }
}

/// Per-output-coordinate bilinear taps `(i0, i1, w1)` with half-pixel
/// centers: `src = max((dst + 0.5)·in/out − 0.5, 0)`.
pub(crate) fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = if i0 + 1 < input { i0 + 1 } else { i0 };
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Nearest-neighbor source index per output coordinate.
pub(crate) fn nearest_taps(input: usize, output: usize) -> Vec<usize> {
    (0..output).map(|o| ((o * input) / output).min(input - 1)).collect()
}
