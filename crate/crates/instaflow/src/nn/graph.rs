//! Reverse-mode autodiff over [`Tensor`] values.
//!
//! A [`Graph`] is a tape built during one forward pass; `backward` walks it
//! in reverse and accumulates gradients into per-node slots. Every op fixes
//! its accumulation order, so gradients are bit-reproducible run to run.

use super::tensor::{gelu, gelu_grad, matmul_into, matmul_nt, matmul_tn, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub const LN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, backward: Option<BackwardFn>) -> NodeId {
        self.nodes.push(Node { value, parents, backward });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers an input or parameter tensor.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, vec![], None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "add shape mismatch");
        let data = va.data.iter().zip(vb.data.iter()).map(|(x, y)| x + y).collect();
        let value = Tensor { shape: va.shape.clone(), data };
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, _| vec![g.clone(), g.clone()])),
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "sub shape mismatch");
        let data = va.data.iter().zip(vb.data.iter()).map(|(x, y)| x - y).collect();
        let value = Tensor { shape: va.shape.clone(), data };
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, _| {
                let neg = Tensor {
                    shape: g.shape.clone(),
                    data: g.data.iter().map(|x| -x).collect(),
                };
                vec![g.clone(), neg]
            })),
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "mul shape mismatch");
        let data = va.data.iter().zip(vb.data.iter()).map(|(x, y)| x * y).collect();
        let value = Tensor { shape: va.shape.clone(), data };
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, parents, _| {
                let (va, vb) = (parents[0], parents[1]);
                let da = Tensor {
                    shape: g.shape.clone(),
                    data: g.data.iter().zip(vb.data.iter()).map(|(x, y)| x * y).collect(),
                };
                let db = Tensor {
                    shape: g.shape.clone(),
                    data: g.data.iter().zip(va.data.iter()).map(|(x, y)| x * y).collect(),
                };
                vec![da, db]
            })),
        )
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let va = &self.nodes[a.0].value;
        let value = Tensor {
            shape: va.shape.clone(),
            data: va.data.iter().map(|x| x * c).collect(),
        };
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, _| {
                vec![Tensor {
                    shape: g.shape.clone(),
                    data: g.data.iter().map(|x| x * c).collect(),
                }]
            })),
        )
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let value = self.nodes[a.0].value.reshaped(shape);
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, parents, _| vec![g.reshaped(&parents[0].shape)])),
        )
    }

    /// C (m,n) = A (m,k) x B (k,n) for rank-2 operands.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.rank(), 2, "matmul lhs must be rank 2");
        assert_eq!(vb.rank(), 2, "matmul rhs must be rank 2");
        let (m, k) = (va.shape[0], va.shape[1]);
        let (k2, n) = (vb.shape[0], vb.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        matmul_into(&va.data, &vb.data, m, k, n, &mut out);
        let value = Tensor { shape: vec![m, n], data: out };
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, parents, _| {
                let (va, vb) = (parents[0], parents[1]);
                let mut da = vec![0.0; m * k];
                matmul_nt(&g.data, &vb.data, m, n, k, &mut da);
                let mut db = vec![0.0; k * n];
                matmul_tn(&va.data, &g.data, m, k, n, &mut db);
                vec![
                    Tensor { shape: vec![m, k], data: da },
                    Tensor { shape: vec![k, n], data: db },
                ]
            })),
        )
    }

    /// Batched C (b,m,n) = A (b,m,k) x B (b,k,n).
    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.rank(), 3, "bmm lhs must be rank 3");
        assert_eq!(vb.rank(), 3, "bmm rhs must be rank 3");
        let (bs, m, k) = (va.shape[0], va.shape[1], va.shape[2]);
        let (bs2, k2, n) = (vb.shape[0], vb.shape[1], vb.shape[2]);
        assert_eq!((bs, k), (bs2, k2), "bmm shape mismatch");
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            matmul_into(
                &va.data[i * m * k..(i + 1) * m * k],
                &vb.data[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let value = Tensor { shape: vec![bs, m, n], data: out };
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, parents, _| {
                let (va, vb) = (parents[0], parents[1]);
                let mut da = vec![0.0; bs * m * k];
                let mut db = vec![0.0; bs * k * n];
                for i in 0..bs {
                    matmul_nt(
                        &g.data[i * m * n..(i + 1) * m * n],
                        &vb.data[i * k * n..(i + 1) * k * n],
                        m,
                        n,
                        k,
                        &mut da[i * m * k..(i + 1) * m * k],
                    );
                    matmul_tn(
                        &va.data[i * m * k..(i + 1) * m * k],
                        &g.data[i * m * n..(i + 1) * m * n],
                        m,
                        k,
                        n,
                        &mut db[i * k * n..(i + 1) * k * n],
                    );
                }
                vec![
                    Tensor { shape: vec![bs, m, k], data: da },
                    Tensor { shape: vec![bs, k, n], data: db },
                ]
            })),
        )
    }

    /// Batched C (b,m,n) = A (b,m,k) x B^T with B (b,n,k); the attention
    /// score layout.
    pub fn bmm_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (bs, m, k) = (va.shape[0], va.shape[1], va.shape[2]);
        let (bs2, n, k2) = (vb.shape[0], vb.shape[1], vb.shape[2]);
        assert_eq!((bs, k), (bs2, k2), "bmm_nt shape mismatch");
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            matmul_nt(
                &va.data[i * m * k..(i + 1) * m * k],
                &vb.data[i * n * k..(i + 1) * n * k],
                m,
                k,
                n,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let value = Tensor { shape: vec![bs, m, n], data: out };
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, parents, _| {
                let (va, vb) = (parents[0], parents[1]);
                let mut da = vec![0.0; bs * m * k];
                let mut db = vec![0.0; bs * n * k];
                for i in 0..bs {
                    // dA = G x B, dB = G^T x A.
                    matmul_into(
                        &g.data[i * m * n..(i + 1) * m * n],
                        &vb.data[i * n * k..(i + 1) * n * k],
                        m,
                        n,
                        k,
                        &mut da[i * m * k..(i + 1) * m * k],
                    );
                    matmul_tn(
                        &g.data[i * m * n..(i + 1) * m * n],
                        &va.data[i * m * k..(i + 1) * m * k],
                        m,
                        n,
                        k,
                        &mut db[i * n * k..(i + 1) * n * k],
                    );
                }
                vec![
                    Tensor { shape: vec![bs, m, k], data: da },
                    Tensor { shape: vec![bs, n, k], data: db },
                ]
            })),
        )
    }

    /// (p,q,r) -> (q,p,r) axis swap.
    pub fn transpose_102(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        assert_eq!(va.rank(), 3, "transpose_102 needs rank 3");
        let (p, q, r) = (va.shape[0], va.shape[1], va.shape[2]);
        let value = transpose_102_tensor(va, p, q, r);
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, _| vec![transpose_102_tensor(g, q, p, r)])),
        )
    }

    /// Softmax over the last axis. Rows whose entries are all -inf produce
    /// a zero output row instead of NaN; their gradient is zero as well.
    pub fn softmax_last(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let d = *va.shape.last().expect("softmax on scalar");
        let mut out = vec![0.0; va.numel()];
        for (row_in, row_out) in va.data.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue; // fully masked row stays zero
            }
            let mut sum = 0.0;
            for (o, &x) in row_out.iter_mut().zip(row_in.iter()) {
                let e = (x - max).exp();
                *o = e;
                sum += e;
            }
            for o in row_out.iter_mut() {
                *o /= sum;
            }
        }
        let value = Tensor { shape: va.shape.clone(), data: out };
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, own| {
                let mut dx = vec![0.0; g.numel()];
                for ((g_row, y_row), dx_row) in g
                    .data
                    .chunks_exact(d)
                    .zip(own.data.chunks_exact(d))
                    .zip(dx.chunks_exact_mut(d))
                {
                    let dot: f64 = g_row.iter().zip(y_row.iter()).map(|(a, b)| a * b).sum();
                    for ((dxi, &gi), &yi) in dx_row.iter_mut().zip(g_row.iter()).zip(y_row.iter()) {
                        *dxi = yi * (gi - dot);
                    }
                }
                vec![Tensor { shape: g.shape.clone(), data: dx }]
            })),
        )
    }

    /// Layer normalization over the last axis with learnable gain and bias.
    pub fn layernorm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let vx = &self.nodes[x.0].value;
        let d = *vx.shape.last().expect("layernorm on scalar");
        assert_eq!(self.nodes[gamma.0].value.shape, vec![d], "layernorm gamma shape");
        assert_eq!(self.nodes[beta.0].value.shape, vec![d], "layernorm beta shape");
        let vg = &self.nodes[gamma.0].value;
        let vb = &self.nodes[beta.0].value;
        let mut out = vec![0.0; vx.numel()];
        for (row, out_row) in vx.data.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + LN_EPS).sqrt();
            for i in 0..d {
                out_row[i] = (row[i] - mean) * rstd * vg.data[i] + vb.data[i];
            }
        }
        let value = Tensor { shape: vx.shape.clone(), data: out };
        self.push(
            value,
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |g, parents, _| {
                let (vx, vg) = (parents[0], parents[1]);
                let mut dx = vec![0.0; vx.numel()];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for (row_i, (row, g_row)) in
                    vx.data.chunks_exact(d).zip(g.data.chunks_exact(d)).enumerate()
                {
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let rstd = 1.0 / (var + LN_EPS).sqrt();
                    let mut mean_gg = 0.0;
                    let mut mean_ggx = 0.0;
                    for i in 0..d {
                        let xhat = (row[i] - mean) * rstd;
                        let gg = g_row[i] * vg.data[i];
                        dgamma[i] += g_row[i] * xhat;
                        dbeta[i] += g_row[i];
                        mean_gg += gg;
                        mean_ggx += gg * xhat;
                    }
                    mean_gg /= d as f64;
                    mean_ggx /= d as f64;
                    let dx_row = &mut dx[row_i * d..(row_i + 1) * d];
                    for i in 0..d {
                        let xhat = (row[i] - mean) * rstd;
                        let gg = g_row[i] * vg.data[i];
                        dx_row[i] = rstd * (gg - mean_gg - xhat * mean_ggx);
                    }
                }
                vec![
                    Tensor { shape: vx.shape.clone(), data: dx },
                    Tensor { shape: vec![d], data: dgamma },
                    Tensor { shape: vec![d], data: dbeta },
                ]
            })),
        )
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let value = Tensor {
            shape: va.shape.clone(),
            data: va.data.iter().map(|&x| gelu(x)).collect(),
        };
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, parents, _| {
                let vx = parents[0];
                let data = g
                    .data
                    .iter()
                    .zip(vx.data.iter())
                    .map(|(&gi, &xi)| gi * gelu_grad(xi))
                    .collect();
                vec![Tensor { shape: g.shape.clone(), data }]
            })),
        )
    }

    /// Adds a bias vector over the last axis of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        let d = *va.shape.last().unwrap();
        assert_eq!(vb.shape, vec![d], "bias shape mismatch");
        let mut data = va.data.clone();
        for row in data.chunks_exact_mut(d) {
            for (o, &b) in row.iter_mut().zip(vb.data.iter()) {
                *o += b;
            }
        }
        let value = Tensor { shape: va.shape.clone(), data };
        self.push(
            value,
            vec![a.0, bias.0],
            Some(Box::new(move |g, _, _| {
                let mut db = vec![0.0; d];
                for row in g.data.chunks_exact(d) {
                    for (o, &gi) in db.iter_mut().zip(row.iter()) {
                        *o += gi;
                    }
                }
                vec![g.clone(), Tensor { shape: vec![d], data: db }]
            })),
        )
    }

    /// Adds a per-frame vector b (t,d) to every token of tokens (t,s,d).
    pub fn add_frame_bias(&mut self, tokens: NodeId, b: NodeId) -> NodeId {
        let (vt, vb) = (&self.nodes[tokens.0].value, &self.nodes[b.0].value);
        assert_eq!(vt.rank(), 3, "add_frame_bias tokens must be rank 3");
        let (t, s, d) = (vt.shape[0], vt.shape[1], vt.shape[2]);
        assert_eq!(vb.shape, vec![t, d], "frame bias shape mismatch");
        let mut data = vt.data.clone();
        for ti in 0..t {
            let bias = &vb.data[ti * d..(ti + 1) * d];
            for si in 0..s {
                let off = (ti * s + si) * d;
                for i in 0..d {
                    data[off + i] += bias[i];
                }
            }
        }
        let value = Tensor { shape: vt.shape.clone(), data };
        self.push(
            value,
            vec![tokens.0, b.0],
            Some(Box::new(move |g, _, _| {
                let mut db = vec![0.0; t * d];
                for ti in 0..t {
                    for si in 0..s {
                        let off = (ti * s + si) * d;
                        for i in 0..d {
                            db[ti * d + i] += g.data[off + i];
                        }
                    }
                }
                vec![g.clone(), Tensor { shape: vec![t, d], data: db }]
            })),
        )
    }

    /// Takes slice `i` along the leading axis: (n, rest...) -> (1, rest...).
    pub fn slice0(&mut self, a: NodeId, i: usize) -> NodeId {
        let va = &self.nodes[a.0].value;
        let n = va.shape[0];
        assert!(i < n, "slice0 index {i} out of {n}");
        let chunk = va.numel() / n;
        let mut shape = va.shape.clone();
        shape[0] = 1;
        let value = Tensor {
            shape,
            data: va.data[i * chunk..(i + 1) * chunk].to_vec(),
        };
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, parents, _| {
                let mut dx = Tensor::zeros(&parents[0].shape);
                dx.data[i * chunk..(i + 1) * chunk].copy_from_slice(&g.data);
                vec![dx]
            })),
        )
    }

    /// Stacks same-shaped nodes along a new leading axis.
    pub fn stack0(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty(), "stack0 of nothing");
        let base_shape = self.nodes[ids[0].0].value.shape.clone();
        let chunk = self.nodes[ids[0].0].value.numel();
        let mut data = Vec::with_capacity(ids.len() * chunk);
        for id in ids {
            let v = &self.nodes[id.0].value;
            assert_eq!(v.shape, base_shape, "stack0 shape mismatch");
            data.extend_from_slice(&v.data);
        }
        let mut shape = vec![ids.len()];
        shape.extend_from_slice(&base_shape);
        let value = Tensor { shape, data };
        self.push(
            value,
            ids.iter().map(|id| id.0).collect(),
            Some(Box::new(move |g, parents, _| {
                parents
                    .iter()
                    .enumerate()
                    .map(|(i, p)| Tensor {
                        shape: p.shape.clone(),
                        data: g.data[i * chunk..(i + 1) * chunk].to_vec(),
                    })
                    .collect()
            })),
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let value = Tensor::scalar(va.data.iter().sum());
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, parents, _| {
                let gv = g.data[0];
                vec![Tensor {
                    shape: parents[0].shape.clone(),
                    data: vec![gv; parents[0].numel()],
                }]
            })),
        )
    }

    /// Linear layer: reshape to rows, matmul, bias, reshape back.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        let shape = self.nodes[x.0].value.shape.clone();
        let d_in = *shape.last().unwrap();
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let d_out = self.nodes[w.0].value.shape[1];
        let flat = self.reshape(x, &[rows, d_in]);
        let mut y = self.matmul(flat, w);
        if let Some(b) = b {
            y = self.add_bias(y, b);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = d_out;
        self.reshape(y, &out_shape)
    }

    /// Scaled dot-product attention. q is (b,m,d), k and v are (b,n,d);
    /// the optional additive mask is (b,m,n) with 0 or -inf entries. Fully
    /// masked query rows yield zero outputs.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, mask: Option<NodeId>) -> NodeId {
        let d = *self.nodes[q.0].value.shape.last().unwrap();
        let mut scores = self.bmm_nt(q, k);
        scores = self.scale(scores, 1.0 / (d as f64).sqrt());
        if let Some(m) = mask {
            scores = self.add(scores, m);
        }
        let weights = self.softmax_last(scores);
        self.bmm(weights, v)
    }

    /// Runs reverse-mode accumulation from the scalar node `root` and
    /// returns one gradient slot per node (None where unreachable).
    pub fn backward(&self, root: NodeId) -> Vec<Option<Tensor>> {
        assert_eq!(self.nodes[root.0].value.numel(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            let node = &self.nodes[i];
            let Some(bw) = &node.backward else { continue };
            let parent_vals: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let parent_grads = bw(&g, &parent_vals, &node.value);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                match &mut grads[p] {
                    Some(acc) => {
                        for (a, b) in acc.data.iter_mut().zip(pg.data.iter()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        grads
    }
}

fn transpose_102_tensor(t: &Tensor, p: usize, q: usize, r: usize) -> Tensor {
    let mut data = vec![0.0; t.numel()];
    for a in 0..p {
        for b in 0..q {
            let src = (a * q + b) * r;
            let dst = (b * p + a) * r;
            data[dst..dst + r].copy_from_slice(&t.data[src..src + r]);
        }
    }
    Tensor { shape: vec![q, p, r], data }
}
