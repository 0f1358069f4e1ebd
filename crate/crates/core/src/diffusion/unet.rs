//! Encoder-decoder noise predictor over a zero-padded parameter grid.

use std::io::{BufRead, Write};

use dmvqe_tensor::{init, read_checkpoint, write_checkpoint, Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NoiseSchedule;
use crate::conditioning::{encode_hamiltonian, PromptEmbedding, EMBED_DIM};
use crate::error::{invalid_arg, Result};
use crate::pauli::{prompts_for, PauliSum};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    pub base_width: usize,
    pub res_blocks: usize,
    pub time_dim: usize,
    pub groups: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            base_width: 32,
            res_blocks: 2,
            time_dim: 128,
            groups: 8,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.res_blocks == 0 || self.groups == 0 {
            return Err(invalid_arg("network sizes must be positive"));
        }
        if self.base_width % self.groups != 0 {
            return Err(invalid_arg(format!(
                "base width {} not divisible into {} groups",
                self.base_width, self.groups
            )));
        }
        if self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(invalid_arg("time embedding dimension must be even and >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Lin {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: usize,
    b: usize,
    pad: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct ResBlock {
    norm1: Norm,
    conv1: Conv,
    emb: Lin,
    norm2: Norm,
    conv2: Conv,
    skip: Option<Conv>,
}

#[derive(Debug, Clone)]
struct Architecture {
    time1: Lin,
    time2: Lin,
    cond1: Lin,
    cond2: Lin,
    conv_in: Conv,
    down0: Vec<ResBlock>,
    down1: Vec<ResBlock>,
    mid: Vec<ResBlock>,
    up1: Vec<ResBlock>,
    up0: Vec<ResBlock>,
    norm_out: Norm,
    conv_out: Conv,
}

struct Builder<'a, R> {
    rng: &'a mut R,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl<R: Rng> Builder<'_, R> {
    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    fn lin(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Lin {
        let w = init::fan_in_uniform(self.rng, &[fan_in, fan_out], fan_in);
        let b = init::fan_in_uniform(self.rng, &[fan_out], fan_in);
        Lin {
            w: self.push(format!("{name}.w"), w),
            b: self.push(format!("{name}.b"), b),
        }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Conv {
        let fan_in = cin * k * k;
        let w = init::fan_in_uniform(self.rng, &[cout, cin, k, k], fan_in);
        let b = init::fan_in_uniform(self.rng, &[cout], fan_in);
        Conv {
            w: self.push(format!("{name}.w"), w),
            b: self.push(format!("{name}.b"), b),
            pad: k / 2,
        }
    }

    fn norm(&mut self, name: &str, c: usize) -> Norm {
        Norm {
            g: self.push(format!("{name}.gamma"), Tensor::full(&[c], 1.0)),
            b: self.push(format!("{name}.beta"), Tensor::zeros(&[c])),
        }
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, emb_dim: usize) -> ResBlock {
        ResBlock {
            norm1: self.norm(&format!("{name}.norm1"), cin),
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, 3),
            emb: self.lin(&format!("{name}.emb"), emb_dim, cout),
            norm2: self.norm(&format!("{name}.norm2"), cout),
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cin, cout, 1)),
        }
    }

    fn stage(&mut self, name: &str, cin: usize, cout: usize, count: usize, emb_dim: usize) -> Vec<ResBlock> {
        (0..count)
            .map(|i| {
                let c = if i == 0 { cin } else { cout };
                self.block(&format!("{name}.{i}"), c, cout, emb_dim)
            })
            .collect()
    }
}

fn build<R: Rng>(config: &UNetConfig, rng: &mut R) -> (Architecture, Vec<String>, Vec<Tensor>) {
    let c = config.base_width;
    let e = config.time_dim;
    let r = config.res_blocks;
    let mut b = Builder {
        rng,
        names: Vec::new(),
        tensors: Vec::new(),
    };
    let arch = Architecture {
        time1: b.lin("time1", e, e),
        time2: b.lin("time2", e, e),
        cond1: b.lin("cond1", EMBED_DIM, e),
        cond2: b.lin("cond2", e, e),
        conv_in: b.conv("conv_in", 1, c, 3),
        down0: b.stage("down0", c, c, r, e),
        down1: b.stage("down1", c, 2 * c, r, e),
        mid: b.stage("mid", 2 * c, 2 * c, 2, e),
        up1: b.stage("up1", 4 * c, 2 * c, r, e),
        up0: b.stage("up0", 3 * c, c, r, e),
        norm_out: b.norm("norm_out", c),
        conv_out: b.conv("conv_out", c, 1, 3),
    };
    (arch, b.names, b.tensors)
}

/// Sinusoidal embedding of integer steps, `[B, dim]`.
fn timestep_embedding(ts: &[usize], dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        let freqs = (0..half).map(|i| (-(10000f64.ln()) * i as f64 / half as f64).exp());
        let args: Vec<f64> = freqs.map(|f| t as f64 * f).collect();
        data.extend(args.iter().map(|a| a.sin() as f32));
        data.extend(args.iter().map(|a| a.cos() as f32));
    }
    Tensor::new(&[ts.len(), dim], data).expect("shape by construction")
}

fn round_up4(v: usize) -> usize {
    v.div_ceil(4) * 4
}

/// Conditioning vector for a Hamiltonian, from its prompt tokens.
pub fn condition_for(h: &PauliSum, hash_seed: u64) -> Result<PromptEmbedding> {
    encode_hamiltonian(&prompts_for(h), hash_seed)
}

/// Predicts the noise in a batch of noisy grids given the step and the
/// conditioning vector.
#[derive(Debug, Clone)]
pub struct NoisePredictor {
    config: UNetConfig,
    grid: (usize, usize),
    schedule: NoiseSchedule,
    hash_seed: u64,
    seed: u64,
    arch: Architecture,
    names: Vec<String>,
    params: Vec<Tensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchitectureHeader {
    kind: String,
    grid: (usize, usize),
    unet: UNetConfig,
    schedule: NoiseSchedule,
    hash_seed: u64,
}

const ARCH_KIND: &str = "conditional-unet";

impl NoisePredictor {
    /// Freshly initialized network for `L x N` grids.
    pub fn new(
        grid: (usize, usize),
        config: UNetConfig,
        schedule: NoiseSchedule,
        hash_seed: u64,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if grid.0 == 0 || grid.1 == 0 {
            return Err(invalid_arg("grid dimensions must be positive"));
        }
        let mut rng = rng_for(seed, &[stream::DM_WEIGHTS]);
        let (arch, names, params) = build(&config, &mut rng);
        Ok(Self {
            config,
            grid,
            schedule,
            hash_seed,
            seed,
            arch,
            names,
            params,
        })
    }

    /// `(L, N)` of the generated grids.
    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid
    }

    /// Spatial size after padding each side up to a multiple of 4.
    pub fn padded_shape(&self) -> (usize, usize) {
        (round_up4(self.grid.0), round_up4(self.grid.1))
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn n_weights(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub(crate) fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Zero-pads `[B, L*N]` grids into a `[B, 1, H, W]` tensor.
    pub(crate) fn pad(&self, grids: &[f32], batch: usize) -> Tensor {
        let (l, n) = self.grid;
        let (h, w) = self.padded_shape();
        let mut out = vec![0.0; batch * h * w];
        for b in 0..batch {
            for r in 0..l {
                let src = &grids[(b * l + r) * n..(b * l + r + 1) * n];
                out[b * h * w + r * w..b * h * w + r * w + n].copy_from_slice(src);
            }
        }
        Tensor::new(&[batch, 1, h, w], out).expect("shape by construction")
    }

    /// Inverse of [`pad`](Self::pad).
    pub(crate) fn crop(&self, padded: &[f32], batch: usize) -> Vec<f32> {
        let (l, n) = self.grid;
        let (h, w) = self.padded_shape();
        let mut out = Vec::with_capacity(batch * l * n);
        for b in 0..batch {
            for r in 0..l {
                out.extend_from_slice(&padded[b * h * w + r * w..b * h * w + r * w + n]);
            }
        }
        out
    }

    pub(crate) fn cond_tensor(conds: &[&PromptEmbedding]) -> Tensor {
        let data = conds.iter().flat_map(|c| c.as_slice().iter().map(|v| *v as f32)).collect();
        Tensor::new(&[conds.len(), EMBED_DIM], data).expect("shape by construction")
    }

    /// Builds the forward pass on `g`; returns the padded `[B, 1, H, W]`
    /// prediction.
    pub(crate) fn forward(
        &self,
        g: &mut Graph,
        vars: &[Var],
        x: Var,
        ts: &[usize],
        cond: Var,
    ) -> Result<Var> {
        let a = &self.arch;
        let groups = self.config.groups;
        let linear = |g: &mut Graph, l: Lin, x: Var| -> Result<Var> {
            let y = g.matmul(x, vars[l.w])?;
            Ok(g.add_bias(y, vars[l.b])?)
        };
        let conv = |g: &mut Graph, c: Conv, x: Var| -> Result<Var> { Ok(g.conv2d(x, vars[c.w], vars[c.b], c.pad)?) };
        let norm = |g: &mut Graph, n: Norm, x: Var| -> Result<Var> { Ok(g.group_norm(x, vars[n.g], vars[n.b], groups)?) };
        let block = |g: &mut Graph, blk: &ResBlock, x: Var, emb: Var| -> Result<Var> {
            let h = norm(g, blk.norm1, x)?;
            let h = g.silu(h);
            let h = conv(g, blk.conv1, h)?;
            let e = linear(g, blk.emb, emb)?;
            let h = g.add_channel(h, e)?;
            let h = norm(g, blk.norm2, h)?;
            let h = g.silu(h);
            let h = conv(g, blk.conv2, h)?;
            let skip = match blk.skip {
                Some(s) => conv(g, s, x)?,
                None => x,
            };
            Ok(g.add(h, skip)?)
        };
        let stage = |g: &mut Graph, blocks: &[ResBlock], mut x: Var, emb: Var| -> Result<Var> {
            for blk in blocks {
                x = block(g, blk, x, emb)?;
            }
            Ok(x)
        };

        let temb = g.constant(timestep_embedding(ts, self.config.time_dim));
        let temb = linear(g, a.time1, temb)?;
        let temb = g.silu(temb);
        let temb = linear(g, a.time2, temb)?;
        let cemb = linear(g, a.cond1, cond)?;
        let cemb = g.silu(cemb);
        let cemb = linear(g, a.cond2, cemb)?;
        let emb = g.add(temb, cemb)?;
        let emb = g.silu(emb);

        let h = conv(g, a.conv_in, x)?;
        let s0 = stage(g, &a.down0, h, emb)?;
        let h = g.downsample2(s0)?;
        let s1 = stage(g, &a.down1, h, emb)?;
        let h = g.downsample2(s1)?;
        let h = stage(g, &a.mid, h, emb)?;
        let h = g.upsample2(h)?;
        let h = g.concat_channels(h, s1)?;
        let h = stage(g, &a.up1, h, emb)?;
        let h = g.upsample2(h)?;
        let h = g.concat_channels(h, s0)?;
        let h = stage(g, &a.up0, h, emb)?;
        let h = norm(g, a.norm_out, h)?;
        let h = g.silu(h);
        conv(g, a.conv_out, h)
    }

    /// Noise prediction for a batch of `L*N` grids, without gradients.
    pub fn predict(&self, grids: &[f32], ts: &[usize], conds: &[&PromptEmbedding]) -> Result<Vec<f32>> {
        let batch = ts.len();
        let (l, n) = self.grid;
        if grids.len() != batch * l * n || conds.len() != batch {
            return Err(invalid_arg(format!(
                "batch of {batch} needs {} grid values and {batch} conditions",
                batch * l * n
            )));
        }
        for &t in ts {
            self.schedule.check_step(t)?;
        }
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(self.pad(grids, batch));
        let c = g.constant(Self::cond_tensor(conds));
        let out = self.forward(&mut g, &vars, x, ts, c)?;
        Ok(self.crop(g.value(out).data(), batch))
    }

    fn header(&self) -> ArchitectureHeader {
        ArchitectureHeader {
            kind: ARCH_KIND.to_string(),
            grid: self.grid,
            unet: self.config,
            schedule: self.schedule.clone(),
            hash_seed: self.hash_seed,
        }
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let tensors: Vec<(String, &Tensor)> = self.names.iter().cloned().zip(self.params.iter()).collect();
        write_checkpoint(w, serde_json::to_value(self.header())?, self.seed, &tensors)?;
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let (header, tensors) = read_checkpoint(r)?;
        let arch: ArchitectureHeader = serde_json::from_value(header.architecture)?;
        if arch.kind != ARCH_KIND {
            return Err(invalid_arg(format!("checkpoint holds a '{}' model", arch.kind)));
        }
        let mut model = Self::new(arch.grid, arch.unet, arch.schedule, arch.hash_seed, header.seed)?;
        if tensors.len() != model.params.len() {
            return Err(invalid_arg(format!(
                "checkpoint has {} tensors, architecture needs {}",
                tensors.len(),
                model.params.len()
            )));
        }
        for ((entry, t), (name, p)) in header.tensors.iter().zip(tensors).zip(model.names.iter().zip(&mut model.params)) {
            if &entry.name != name || t.shape() != p.shape() {
                return Err(invalid_arg(format!("checkpoint tensor '{}' does not match '{name}'", entry.name)));
            }
            *p = t;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{encode_term, DEFAULT_HASH_SEED};
    use crate::diffusion::make_linear_schedule;

    fn small(grid: (usize, usize)) -> NoisePredictor {
        let cfg = UNetConfig {
            base_width: 8,
            res_blocks: 1,
            time_dim: 16,
            groups: 4,
        };
        NoisePredictor::new(grid, cfg, make_linear_schedule(10, 1e-4, 0.02).unwrap(), DEFAULT_HASH_SEED, 3).unwrap()
    }

    #[test]
    fn output_shape_matches_odd_grid() {
        let m = small((3, 5));
        assert_eq!(m.padded_shape(), (4, 8));
        let c = encode_term("1.0000 Z", DEFAULT_HASH_SEED).unwrap();
        let out = m.predict(&vec![0.1; 30], &[1, 7], &[&c, &c]).unwrap();
        assert_eq!(out.len(), 30);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pad_crop_round_trip() {
        let m = small((3, 5));
        let grids: Vec<f32> = (0..30).map(|v| v as f32).collect();
        let padded = m.pad(&grids, 2);
        assert_eq!(m.crop(padded.data(), 2), grids);
    }

    #[test]
    fn rejects_bad_batches() {
        let m = small((2, 2));
        let c = encode_term("1.0000 Z", DEFAULT_HASH_SEED).unwrap();
        assert!(m.predict(&[0.0; 3], &[1], &[&c]).is_err());
        assert!(m.predict(&[0.0; 4], &[11], &[&c]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = small((2, 3));
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = NoisePredictor::load(buf.as_slice()).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.grid_shape(), (2, 3));
        assert_eq!(back.schedule(), m.schedule());
    }
}
