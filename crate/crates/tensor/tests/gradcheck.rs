//! Every primitive checked against an independent f64 reference forward and
//! central finite differences of that reference.

use dmvqe_tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: u64 = 20;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

fn to_tensor(shape: &[usize], v: &[f64]) -> Tensor {
    Tensor::new(shape, v.iter().map(|x| *x as f32).collect()).unwrap()
}

/// One primitive under test: input shapes, engine forward, reference forward.
struct Case {
    name: &'static str,
    shapes: Vec<Vec<usize>>,
    engine: Box<dyn Fn(&mut Graph, &[Var]) -> Var>,
    reference: Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>,
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1.0)
}

fn check(case: &Case) {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let inputs: Vec<Vec<f64>> = case
            .shapes
            .iter()
            .map(|s| rand_vec(&mut rng, s.iter().product()))
            .collect();
        // Round inputs to f32 so both paths see identical values.
        let inputs: Vec<Vec<f64>> = inputs
            .into_iter()
            .map(|v| v.into_iter().map(|x| x as f32 as f64).collect())
            .collect();

        let reference_out = (case.reference)(&inputs);
        let weights = rand_vec(&mut rng, reference_out.len());

        let mut g = Graph::new();
        let vars: Vec<Var> = case
            .shapes
            .iter()
            .zip(&inputs)
            .map(|(s, v)| g.param(to_tensor(s, v)))
            .collect();
        let out = (case.engine)(&mut g, &vars);
        let engine_out: Vec<f64> = g.value(out).data().iter().map(|x| *x as f64).collect();
        assert_eq!(engine_out.len(), reference_out.len(), "{}", case.name);
        let fwd = rel_err(&engine_out, &reference_out);
        assert!(fwd < 1e-5, "{} forward trial {trial}: rel err {fwd}", case.name);

        let w = g.constant(to_tensor(g.value(out).shape(), &weights));
        let prod = g.mul(out, w).unwrap();
        let loss = g.sum(prod);
        g.backward(loss).unwrap();

        let objective = |inp: &[Vec<f64>]| -> f64 {
            (case.reference)(inp)
                .iter()
                .zip(&weights)
                .map(|(a, b)| a * b)
                .sum()
        };
        for (k, var) in vars.iter().enumerate() {
            let analytic: Vec<f64> = g
                .grad(*var)
                .expect("tracked input has a gradient")
                .iter()
                .map(|x| *x as f64)
                .collect();
            let h = 1e-5;
            let mut numeric = vec![0.0; inputs[k].len()];
            for i in 0..inputs[k].len() {
                let mut plus = inputs.clone();
                plus[k][i] += h;
                let mut minus = inputs.clone();
                minus[k][i] -= h;
                numeric[i] = (objective(&plus) - objective(&minus)) / (2.0 * h);
            }
            let e = rel_err(&analytic, &numeric);
            assert!(
                e < 1e-4,
                "{} grad of input {k}, trial {trial}: rel err {e}",
                case.name
            );
        }
    }
}

fn conv_ref(x: &[f64], w: &[f64], b: &[f64], xs: [usize; 4], ws: [usize; 4], pad: usize) -> Vec<f64> {
    let [bs, cin, h, wd] = xs;
    let [cout, _, k, _] = ws;
    let ho = h + 2 * pad + 1 - k;
    let wo = wd + 2 * pad + 1 - k;
    let mut out = vec![0.0; bs * cout * ho * wo];
    for bi in 0..bs {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy as isize + ky as isize - pad as isize;
                                let ix = ox as isize + kx as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w[((co * cin + ci) * k + ky) * k + kx]
                                    * x[((bi * cin + ci) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out[((bi * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

fn group_norm_ref(x: &[f64], gamma: &[f64], beta: &[f64], dims: [usize; 4], groups: usize) -> Vec<f64> {
    let [b, c, h, w] = dims;
    let hw = h * w;
    let cpg = c / groups;
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for g in 0..groups {
            let start = (bi * c + g * cpg) * hw;
            let seg = &x[start..start + cpg * hw];
            let mean = seg.iter().sum::<f64>() / seg.len() as f64;
            let var = seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / seg.len() as f64;
            for (i, v) in seg.iter().enumerate() {
                let ch = g * cpg + i / hw;
                out[start + i] = (v - mean) / (var + 1e-5).sqrt() * gamma[ch] + beta[ch];
            }
        }
    }
    out
}

#[test]
fn elementwise_and_reductions() {
    let cases = vec![
        Case {
            name: "add",
            shapes: vec![vec![3, 4], vec![3, 4]],
            engine: Box::new(|g, v| g.add(v[0], v[1]).unwrap()),
            reference: Box::new(|i| i[0].iter().zip(&i[1]).map(|(a, b)| a + b).collect()),
        },
        Case {
            name: "sub",
            shapes: vec![vec![5], vec![5]],
            engine: Box::new(|g, v| g.sub(v[0], v[1]).unwrap()),
            reference: Box::new(|i| i[0].iter().zip(&i[1]).map(|(a, b)| a - b).collect()),
        },
        Case {
            name: "mul",
            shapes: vec![vec![2, 3], vec![2, 3]],
            engine: Box::new(|g, v| g.mul(v[0], v[1]).unwrap()),
            reference: Box::new(|i| i[0].iter().zip(&i[1]).map(|(a, b)| a * b).collect()),
        },
        Case {
            name: "scale",
            shapes: vec![vec![4]],
            engine: Box::new(|g, v| g.scale(v[0], -0.75)),
            reference: Box::new(|i| i[0].iter().map(|a| -0.75 * a).collect()),
        },
        Case {
            name: "tanh",
            shapes: vec![vec![7]],
            engine: Box::new(|g, v| g.tanh(v[0])),
            reference: Box::new(|i| i[0].iter().map(|a| a.tanh()).collect()),
        },
        Case {
            name: "silu",
            shapes: vec![vec![7]],
            engine: Box::new(|g, v| g.silu(v[0])),
            reference: Box::new(|i| i[0].iter().map(|a| a / (1.0 + (-a).exp())).collect()),
        },
        Case {
            name: "mean",
            shapes: vec![vec![2, 5]],
            engine: Box::new(|g, v| g.mean(v[0])),
            reference: Box::new(|i| vec![i[0].iter().sum::<f64>() / 10.0]),
        },
    ];
    for c in &cases {
        check(c);
    }
}

#[test]
fn dense_primitives() {
    let cases = vec![
        Case {
            name: "matmul",
            shapes: vec![vec![3, 4], vec![4, 2]],
            engine: Box::new(|g, v| g.matmul(v[0], v[1]).unwrap()),
            reference: Box::new(|i| {
                let mut out = vec![0.0; 6];
                for r in 0..3 {
                    for c in 0..2 {
                        for k in 0..4 {
                            out[r * 2 + c] += i[0][r * 4 + k] * i[1][k * 2 + c];
                        }
                    }
                }
                out
            }),
        },
        Case {
            name: "add_bias",
            shapes: vec![vec![3, 4], vec![4]],
            engine: Box::new(|g, v| g.add_bias(v[0], v[1]).unwrap()),
            reference: Box::new(|i| {
                i[0].iter().enumerate().map(|(k, a)| a + i[1][k % 4]).collect()
            }),
        },
        Case {
            name: "tanh_mlp",
            shapes: vec![vec![2, 3], vec![3, 5], vec![5]],
            engine: Box::new(|g, v| {
                let h = g.matmul(v[0], v[1]).unwrap();
                let h = g.add_bias(h, v[2]).unwrap();
                g.tanh(h)
            }),
            reference: Box::new(|i| {
                let mut out = vec![0.0; 10];
                for r in 0..2 {
                    for c in 0..5 {
                        let mut acc = i[2][c];
                        for k in 0..3 {
                            acc += i[0][r * 3 + k] * i[1][k * 5 + c];
                        }
                        out[r * 5 + c] = acc.tanh();
                    }
                }
                out
            }),
        },
    ];
    for c in &cases {
        check(c);
    }
}

#[test]
fn spatial_primitives() {
    let cases = vec![
        Case {
            name: "conv3x3_pad1",
            shapes: vec![vec![2, 3, 4, 5], vec![4, 3, 3, 3], vec![4]],
            engine: Box::new(|g, v| g.conv2d(v[0], v[1], v[2], 1).unwrap()),
            reference: Box::new(|i| conv_ref(&i[0], &i[1], &i[2], [2, 3, 4, 5], [4, 3, 3, 3], 1)),
        },
        Case {
            name: "conv1x1",
            shapes: vec![vec![2, 3, 2, 2], vec![2, 3, 1, 1], vec![2]],
            engine: Box::new(|g, v| g.conv2d(v[0], v[1], v[2], 0).unwrap()),
            reference: Box::new(|i| conv_ref(&i[0], &i[1], &i[2], [2, 3, 2, 2], [2, 3, 1, 1], 0)),
        },
        Case {
            name: "add_channel",
            shapes: vec![vec![2, 3, 2, 2], vec![2, 3]],
            engine: Box::new(|g, v| g.add_channel(v[0], v[1]).unwrap()),
            reference: Box::new(|i| i[0].iter().enumerate().map(|(k, a)| a + i[1][k / 4]).collect()),
        },
        Case {
            name: "upsample2",
            shapes: vec![vec![1, 2, 2, 3]],
            engine: Box::new(|g, v| g.upsample2(v[0]).unwrap()),
            reference: Box::new(|i| {
                let mut out = vec![0.0; 2 * 4 * 6];
                for p in 0..2 {
                    for y in 0..4 {
                        for x in 0..6 {
                            out[p * 24 + y * 6 + x] = i[0][p * 6 + (y / 2) * 3 + x / 2];
                        }
                    }
                }
                out
            }),
        },
        Case {
            name: "downsample2",
            shapes: vec![vec![2, 1, 4, 2]],
            engine: Box::new(|g, v| g.downsample2(v[0]).unwrap()),
            reference: Box::new(|i| {
                let mut out = vec![0.0; 2 * 2];
                for p in 0..2 {
                    for y in 0..2 {
                        let s = &i[0][p * 8..];
                        out[p * 2 + y] = 0.25 * (s[4 * y] + s[4 * y + 1] + s[4 * y + 2] + s[4 * y + 3]);
                    }
                }
                out
            }),
        },
        Case {
            name: "group_norm",
            shapes: vec![vec![2, 4, 2, 3], vec![4], vec![4]],
            engine: Box::new(|g, v| g.group_norm(v[0], v[1], v[2], 2).unwrap()),
            reference: Box::new(|i| group_norm_ref(&i[0], &i[1], &i[2], [2, 4, 2, 3], 2)),
        },
        Case {
            name: "concat_channels",
            shapes: vec![vec![2, 1, 2, 2], vec![2, 2, 2, 2]],
            engine: Box::new(|g, v| g.concat_channels(v[0], v[1]).unwrap()),
            reference: Box::new(|i| {
                let mut out = Vec::new();
                for b in 0..2 {
                    out.extend_from_slice(&i[0][b * 4..(b + 1) * 4]);
                    out.extend_from_slice(&i[1][b * 8..(b + 1) * 8]);
                }
                out
            }),
        },
    ];
    for c in &cases {
        check(c);
    }
}

#[test]
fn sum_of_tanh_wx_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let w = rand_vec(&mut rng, 12);
    let x = rand_vec(&mut rng, 4);
    let f = |w: &[f64], x: &[f64]| -> f64 {
        (0..3)
            .map(|r| (0..4).map(|k| w[r * 4 + k] * x[k]).sum::<f64>().tanh())
            .sum()
    };
    let mut g = Graph::new();
    let wv = g.param(to_tensor(&[3, 4], &w));
    let xv = g.param(to_tensor(&[4, 1], &x));
    let wx = g.matmul(wv, xv).unwrap();
    let t = g.tanh(wx);
    let loss = g.sum(t);
    g.backward(loss).unwrap();
    let gx = g.grad(xv).unwrap();
    for k in 0..4 {
        let mut xp = x.clone();
        xp[k] += 1e-6;
        let mut xm = x.clone();
        xm[k] -= 1e-6;
        let fd = (f(&w, &xp) - f(&w, &xm)) / 2e-6;
        assert!((gx[k] as f64 - fd).abs() <= 1e-4 * fd.abs().max(1.0));
    }
}
