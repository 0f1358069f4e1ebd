use crate::gemm::sgemm;
use crate::{Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    MatMul(Var, Var),
    AddBias(Var, Var),
    AddChannel(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        pad: usize,
        cols: Vec<f32>,
    },
    Upsample(Var),
    Downsample(Var),
    Tanh(Var),
    Silu(Var),
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Concat(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f32>>,
    requires_grad: bool,
    op: Op,
}

/// Append-only computation tape.
///
/// Node indices are a topological order, so `backward` walks them in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const GN_EPS: f32 = 1e-5;

fn shape4(t: &Tensor, op: &'static str) -> Result<[usize; 4]> {
    match t.shape() {
        &[b, c, h, w] => Ok([b, c, h, w]),
        s => Err(TensorError::shape(op, format!("expected 4-d input, got {s:?}"))),
    }
}

fn shape2(t: &Tensor, op: &'static str) -> Result<[usize; 2]> {
    match t.shape() {
        &[r, c] => Ok([r, c]),
        s => Err(TensorError::shape(op, format!("expected 2-d input, got {s:?}"))),
    }
}

fn add_into(dst: &mut Option<Vec<f32>>, src: &[f32]) {
    match dst {
        Some(g) => g.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Unfold `x` [B, C, H, W] into columns [C*k*k, B*Ho*Wo] for a stride-1 conv.
fn im2col(x: &[f32], dims: [usize; 4], k: usize, pad: usize) -> (Vec<f32>, usize, usize) {
    let [b, c, h, w] = dims;
    let ho = h + 2 * pad + 1 - k;
    let wo = w + 2 * pad + 1 - k;
    let ncols = b * ho * wo;
    let mut cols = vec![0.0f32; c * k * k * ncols];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for bi in 0..b {
                    let src = &x[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                    for oy in 0..ho {
                        let iy = oy as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (bi * ho + oy) * wo;
                        for ox in 0..wo {
                            let ix = ox as isize + kx as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[base + ox] = src[iy as usize * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    (cols, ho, wo)
}

fn col2im(cols: &[f32], dims: [usize; 4], k: usize, pad: usize, dx: &mut [f32]) {
    let [b, c, h, w] = dims;
    let ho = h + 2 * pad + 1 - k;
    let wo = w + 2 * pad + 1 - k;
    let ncols = b * ho * wo;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for bi in 0..b {
                    let dst = &mut dx[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                    for oy in 0..ho {
                        let iy = oy as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (bi * ho + oy) * wo;
                        for ox in 0..wo {
                            let ix = ox as isize + kx as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[iy as usize * w + ix as usize] += src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf that is never differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f32, f32) -> f32) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(f32) -> f32) -> Tensor {
        let ta = self.value(a);
        Tensor::new(ta.shape(), ta.data().iter().map(|x| f(*x)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        let rg = self.tracked(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        let rg = self.tracked(&[a, b]);
        Ok(self.push(out, rg, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        let rg = self.tracked(&[a, b]);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Var {
        let out = self.map(a, |x| x * factor);
        let rg = self.tracked(&[a]);
        self.push(out, rg, Op::Scale(a, factor))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let [m, k] = shape2(self.value(a), "matmul")?;
        let [k2, n] = shape2(self.value(b), "matmul")?;
        if k != k2 {
            return Err(TensorError::shape(
                "matmul",
                format!("inner dims {k} vs {k2}"),
            ));
        }
        let mut out = vec![0.0; m * n];
        sgemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        let rg = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, rg, Op::MatMul(a, b)))
    }

    /// Adds a vector along the last dimension of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.value(x).shape().last().unwrap_or(&0);
        if self.value(bias).shape() != [n] {
            return Err(TensorError::shape(
                "add_bias",
                format!("{:?} + {:?}", self.value(x).shape(), self.value(bias).shape()),
            ));
        }
        let bd = self.value(bias).data().to_vec();
        let tx = self.value(x);
        let data = tx
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(&bd).map(|(a, b)| a + b))
            .collect();
        let out = Tensor::new(tx.shape(), data)?;
        let rg = self.tracked(&[x, bias]);
        Ok(self.push(out, rg, Op::AddBias(x, bias)))
    }

    /// Adds `v` [B, C] to every spatial position of `x` [B, C, H, W].
    pub fn add_channel(&mut self, x: Var, v: Var) -> Result<Var> {
        let [b, c, h, w] = shape4(self.value(x), "add_channel")?;
        if self.value(v).shape() != [b, c] {
            return Err(TensorError::shape(
                "add_channel",
                format!("{:?} + {:?}", self.value(x).shape(), self.value(v).shape()),
            ));
        }
        let hw = h * w;
        let vd = self.value(v).data();
        let mut data = self.value(x).data().to_vec();
        for (i, plane) in data.chunks_mut(hw).enumerate() {
            let add = vd[i];
            plane.iter_mut().for_each(|p| *p += add);
        }
        let out = Tensor::new(&[b, c, h, w], data)?;
        let rg = self.tracked(&[x, v]);
        Ok(self.push(out, rg, Op::AddChannel(x, v)))
    }

    /// Stride-1 2-D convolution. `w` is [Cout, Cin, k, k], `b` is [Cout];
    /// zero padding `pad` on every side.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Result<Var> {
        let dims = shape4(self.value(x), "conv2d")?;
        let [cout, cin, kh, kw] = shape4(self.value(w), "conv2d")?;
        if kh != kw {
            return Err(TensorError::shape("conv2d", "only square kernels"));
        }
        if cin != dims[1] {
            return Err(TensorError::shape(
                "conv2d",
                format!("input channels {} vs kernel {}", dims[1], cin),
            ));
        }
        if self.value(b).shape() != [cout] {
            return Err(TensorError::shape("conv2d", "bias must be [Cout]"));
        }
        if dims[2] + 2 * pad < kh || dims[3] + 2 * pad < kw {
            return Err(TensorError::shape("conv2d", "kernel larger than padded input"));
        }
        let k = kh;
        let (cols, ho, wo) = im2col(self.value(x).data(), dims, k, pad);
        let bsz = dims[0];
        let ncols = bsz * ho * wo;
        let mut tmp = vec![0.0; cout * ncols];
        sgemm(
            cout,
            cin * k * k,
            ncols,
            self.value(w).data(),
            false,
            &cols,
            false,
            &mut tmp,
            false,
        );
        let bias = self.value(b).data();
        let plane = ho * wo;
        let mut out = vec![0.0; bsz * cout * plane];
        for co in 0..cout {
            for bi in 0..bsz {
                let src = &tmp[co * ncols + bi * plane..co * ncols + (bi + 1) * plane];
                let dst = &mut out[(bi * cout + co) * plane..(bi * cout + co + 1) * plane];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + bias[co];
                }
            }
        }
        let rg = self.tracked(&[x, w, b]);
        let cols = if rg { cols } else { Vec::new() };
        Ok(self.push(
            Tensor::new(&[bsz, cout, ho, wo], out)?,
            rg,
            Op::Conv2d { x, w, b, pad, cols },
        ))
    }

    /// Nearest-neighbour 2x up-sampling of [B, C, H, W].
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = shape4(self.value(x), "upsample2")?;
        let src = self.value(x).data();
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![0.0; b * c * h2 * w2];
        for p in 0..b * c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    out[p * h2 * w2 + y * w2 + xx] = src[p * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let rg = self.tracked(&[x]);
        Ok(self.push(Tensor::new(&[b, c, h2, w2], out)?, rg, Op::Upsample(x)))
    }

    /// 2x down-sampling of [B, C, H, W] by averaging each 2x2 block.
    pub fn downsample2(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = shape4(self.value(x), "downsample2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(TensorError::shape(
                "downsample2",
                format!("spatial dims must be even, got {h}x{w}"),
            ));
        }
        let src = self.value(x).data();
        let (h2, w2) = (h / 2, w / 2);
        let mut out = vec![0.0; b * c * h2 * w2];
        for p in 0..b * c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    let s = &src[p * h * w..];
                    out[p * h2 * w2 + y * w2 + xx] = 0.25
                        * (s[2 * y * w + 2 * xx]
                            + s[2 * y * w + 2 * xx + 1]
                            + s[(2 * y + 1) * w + 2 * xx]
                            + s[(2 * y + 1) * w + 2 * xx + 1]);
                }
            }
        }
        let rg = self.tracked(&[x]);
        Ok(self.push(Tensor::new(&[b, c, h2, w2], out)?, rg, Op::Downsample(x)))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.map(x, f32::tanh);
        let rg = self.tracked(&[x]);
        self.push(out, rg, Op::Tanh(x))
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.map(x, |v| v * sigmoid(v));
        let rg = self.tracked(&[x]);
        self.push(out, rg, Op::Silu(x))
    }

    /// Group normalization over [B, C, H, W] with per-channel affine `gamma`, `beta`.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        let [b, c, h, w] = shape4(self.value(x), "group_norm")?;
        if groups == 0 || c % groups != 0 {
            return Err(TensorError::shape(
                "group_norm",
                format!("{c} channels not divisible into {groups} groups"),
            ));
        }
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(TensorError::shape("group_norm", "affine params must be [C]"));
        }
        let cpg = c / groups;
        let hw = h * w;
        let m = cpg * hw;
        let src = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![0.0; src.len()];
        let mut rstd = vec![0.0; b * groups];
        let mut out = vec![0.0; src.len()];
        for bi in 0..b {
            for g in 0..groups {
                let start = (bi * c + g * cpg) * hw;
                let seg = &src[start..start + m];
                let mean = seg.iter().sum::<f32>() / m as f32;
                let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / m as f32;
                let r = 1.0 / (var + GN_EPS).sqrt();
                rstd[bi * groups + g] = r;
                for (i, v) in seg.iter().enumerate() {
                    let ch = g * cpg + i / hw;
                    let xn = (v - mean) * r;
                    xhat[start + i] = xn;
                    out[start + i] = xn * gd[ch] + bd[ch];
                }
            }
        }
        let rg = self.tracked(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(&[b, c, h, w], out)?,
            rg,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            },
        ))
    }

    /// Concatenates two [B, C_i, H, W] tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [ba, ca, ha, wa] = shape4(self.value(a), "concat")?;
        let [bb, cb, hb, wb] = shape4(self.value(b), "concat")?;
        if (ba, ha, wa) != (bb, hb, wb) {
            return Err(TensorError::shape(
                "concat",
                format!(
                    "{:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let hw = ha * wa;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(da.len() + db.len());
        for bi in 0..ba {
            out.extend_from_slice(&da[bi * ca * hw..(bi + 1) * ca * hw]);
            out.extend_from_slice(&db[bi * cb * hw..(bi + 1) * cb * hw]);
        }
        let rg = self.tracked(&[a, b]);
        Ok(self.push(
            Tensor::new(&[ba, ca + cb, ha, wa], out)?,
            rg,
            Op::Concat(a, b),
        ))
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f32>();
        let rg = self.tracked(&[x]);
        self.push(Tensor::scalar(s), rg, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f32)
    }

    /// Back-propagates from a one-element `loss`. Gradients of earlier calls
    /// are cleared first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(TensorError::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: &[f32]) {
        let node = &mut self.nodes[v.0];
        if node.requires_grad {
            add_into(&mut node.grad, g);
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, i: usize, g: &[f32]) {
        // Take the op out so parents can be borrowed mutably; restored below.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, g);
                if self.wants(*b) {
                    let neg: Vec<f32> = g.iter().map(|v| -v).collect();
                    self.accumulate(*b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let ga: Vec<f32> = g
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(g, y)| g * y)
                        .collect();
                    self.accumulate(*a, &ga);
                }
                if self.wants(*b) {
                    let gb: Vec<f32> = g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(g, x)| g * x)
                        .collect();
                    self.accumulate(*b, &gb);
                }
            }
            Op::Scale(a, f) => {
                let ga: Vec<f32> = g.iter().map(|v| v * f).collect();
                self.accumulate(*a, &ga);
            }
            Op::MatMul(a, b) => {
                let [m, k] = shape2(self.value(*a), "matmul").expect("recorded");
                let n = self.value(*b).shape()[1];
                if self.wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    sgemm(m, n, k, g, false, self.value(*b).data(), true, &mut ga, false);
                    self.accumulate(*a, &ga);
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * n];
                    sgemm(k, m, n, self.value(*a).data(), true, g, false, &mut gb, false);
                    self.accumulate(*b, &gb);
                }
            }
            Op::AddBias(x, bias) => {
                self.accumulate(*x, g);
                if self.wants(*bias) {
                    let n = self.value(*bias).numel();
                    let mut gb = vec![0.0; n];
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    self.accumulate(*bias, &gb);
                }
            }
            Op::AddChannel(x, v) => {
                self.accumulate(*x, g);
                if self.wants(*v) {
                    let shape = self.value(*x).shape();
                    let hw = shape[2] * shape[3];
                    let gv: Vec<f32> = g.chunks(hw).map(|p| p.iter().sum()).collect();
                    self.accumulate(*v, &gv);
                }
            }
            Op::Conv2d { x, w, b, pad, cols } => {
                let dims = shape4(self.value(*x), "conv2d").expect("recorded");
                let [cout, cin, k, _] = shape4(self.value(*w), "conv2d").expect("recorded");
                let out_shape = self.nodes[i].value.shape().to_vec();
                let (ho, wo) = (out_shape[2], out_shape[3]);
                let plane = ho * wo;
                let bsz = dims[0];
                let ncols = bsz * plane;
                // [B, Cout, Ho, Wo] -> [Cout, B*Ho*Wo]
                let mut gr = vec![0.0; cout * ncols];
                for bi in 0..bsz {
                    for co in 0..cout {
                        let src = &g[(bi * cout + co) * plane..(bi * cout + co + 1) * plane];
                        gr[co * ncols + bi * plane..co * ncols + (bi + 1) * plane]
                            .copy_from_slice(src);
                    }
                }
                if self.wants(*b) {
                    let gb: Vec<f32> = gr.chunks(ncols).map(|r| r.iter().sum()).collect();
                    self.accumulate(*b, &gb);
                }
                let kk = cin * k * k;
                if self.wants(*w) {
                    let mut gw = vec![0.0; cout * kk];
                    sgemm(cout, ncols, kk, &gr, false, cols, true, &mut gw, false);
                    self.accumulate(*w, &gw);
                }
                if self.wants(*x) {
                    let mut gcols = vec![0.0; kk * ncols];
                    sgemm(
                        kk,
                        cout,
                        ncols,
                        self.value(*w).data(),
                        true,
                        &gr,
                        false,
                        &mut gcols,
                        false,
                    );
                    let mut gx = vec![0.0; dims.iter().product()];
                    col2im(&gcols, dims, k, *pad, &mut gx);
                    self.accumulate(*x, &gx);
                }
            }
            Op::Upsample(x) => {
                let [b, c, h, w] = shape4(self.value(*x), "upsample2").expect("recorded");
                let (h2, w2) = (2 * h, 2 * w);
                let mut gx = vec![0.0; b * c * h * w];
                for p in 0..b * c {
                    for y in 0..h2 {
                        for xx in 0..w2 {
                            gx[p * h * w + (y / 2) * w + xx / 2] += g[p * h2 * w2 + y * w2 + xx];
                        }
                    }
                }
                self.accumulate(*x, &gx);
            }
            Op::Downsample(x) => {
                let [b, c, h, w] = shape4(self.value(*x), "downsample2").expect("recorded");
                let (h2, w2) = (h / 2, w / 2);
                let mut gx = vec![0.0; b * c * h * w];
                for p in 0..b * c {
                    for y in 0..h {
                        for xx in 0..w {
                            gx[p * h * w + y * w + xx] =
                                0.25 * g[p * h2 * w2 + (y / 2) * w2 + xx / 2];
                        }
                    }
                }
                self.accumulate(*x, &gx);
            }
            Op::Tanh(x) => {
                let gx: Vec<f32> = g
                    .iter()
                    .zip(self.nodes[i].value.data())
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                self.accumulate(*x, &gx);
            }
            Op::Silu(x) => {
                let gx: Vec<f32> = g
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(g, v)| {
                        let s = sigmoid(*v);
                        g * (s + v * s * (1.0 - s))
                    })
                    .collect();
                self.accumulate(*x, &gx);
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            } => {
                let [b, c, h, w] = shape4(self.value(*x), "group_norm").expect("recorded");
                let hw = h * w;
                let cpg = c / groups;
                let m = cpg * hw;
                if self.wants(*beta) {
                    let mut gb = vec![0.0; c];
                    for (p, plane) in g.chunks(hw).enumerate() {
                        gb[p % c] += plane.iter().sum::<f32>();
                    }
                    self.accumulate(*beta, &gb);
                }
                if self.wants(*gamma) {
                    let mut gg = vec![0.0; c];
                    for (p, (plane, xh)) in g.chunks(hw).zip(xhat.chunks(hw)).enumerate() {
                        gg[p % c] += plane.iter().zip(xh).map(|(a, b)| a * b).sum::<f32>();
                    }
                    self.accumulate(*gamma, &gg);
                }
                if self.wants(*x) {
                    let gd = self.value(*gamma).data();
                    let mut gx = vec![0.0; b * c * hw];
                    for bi in 0..b {
                        for gi in 0..*groups {
                            let start = (bi * c + gi * cpg) * hw;
                            let mut sum_d = 0.0f32;
                            let mut sum_dx = 0.0f32;
                            for j in 0..m {
                                let ch = gi * cpg + j / hw;
                                let d = g[start + j] * gd[ch];
                                sum_d += d;
                                sum_dx += d * xhat[start + j];
                            }
                            let r = rstd[bi * groups + gi];
                            let inv_m = 1.0 / m as f32;
                            for j in 0..m {
                                let ch = gi * cpg + j / hw;
                                let d = g[start + j] * gd[ch];
                                gx[start + j] =
                                    r * (d - inv_m * sum_d - xhat[start + j] * inv_m * sum_dx);
                            }
                        }
                    }
                    self.accumulate(*x, &gx);
                }
            }
            Op::Concat(a, b2) => {
                let [bsz, ca, h, w] = shape4(self.value(*a), "concat").expect("recorded");
                let cb = self.value(*b2).shape()[1];
                let hw = h * w;
                let c = ca + cb;
                if self.wants(*a) {
                    let mut ga = Vec::with_capacity(bsz * ca * hw);
                    for bi in 0..bsz {
                        ga.extend_from_slice(&g[bi * c * hw..(bi * c + ca) * hw]);
                    }
                    self.accumulate(*a, &ga);
                }
                if self.wants(*b2) {
                    let mut gb = Vec::with_capacity(bsz * cb * hw);
                    for bi in 0..bsz {
                        gb.extend_from_slice(&g[(bi * c + ca) * hw..(bi + 1) * c * hw]);
                    }
                    self.accumulate(*b2, &gb);
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                self.accumulate(*x, &vec![g[0]; n]);
            }
        }
        self.nodes[i].op = op;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul_is_noop() {
        let mut g = Graph::new();
        let eye = g.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let a = g.constant(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let out = g.matmul(eye, a).unwrap();
        assert_eq!(g.value(out), g.value(a));
    }

    #[test]
    fn tanh_of_zero() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(&[3]));
        let t = g.tanh(z);
        assert_eq!(g.value(t).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_kernel_conv_is_identity() {
        let mut g = Graph::new();
        let data: Vec<f32> = (0..12).map(|v| v as f32 - 4.5).collect();
        let x = g.constant(Tensor::new(&[1, 1, 3, 4], data).unwrap());
        let w = g.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d(x, w, b, 0).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let sq = g.mul(x, x).unwrap();
        g.backward(sq).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn detached_input_has_no_grad() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let c = g.constant(Tensor::scalar(5.0));
        let y = g.mul(x, c).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[5.0]);
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(matches!(
            g.backward(x),
            Err(TensorError::InvalidArgument(_))
        ));
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(&[2, 3]));
        let b = g.param(Tensor::zeros(&[2, 3]));
        assert!(g.matmul(a, b).is_err());
        let c = g.param(Tensor::zeros(&[3]));
        assert!(g.add(a, c).is_err());
        let img = g.param(Tensor::zeros(&[1, 2, 3, 3]));
        assert!(g.downsample2(img).is_err());
    }
}
