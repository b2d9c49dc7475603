//! Named, ordered parameter storage shared by the depth encoder and the
//! toy transformer, plus the Adam optimizer and a central-difference
//! gradient checker.

use rand::Rng;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Insertion-ordered parameter table; the order fixes checkpoint layout,
/// optimizer iteration order, and gradient accumulation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Replaces every tensor with random values of matching shape; used by
    /// gradient checks to exercise paths that are zero at real init.
    pub fn randomize(&mut self, std: f64, rng: &mut impl Rng) {
        for t in self.tensors.iter_mut() {
            *t = Tensor::randn(&t.shape, std, rng);
        }
    }

    /// Registers every parameter as a graph leaf, in insertion order.
    pub fn leaves(&self, graph: &mut Graph) -> Vec<NodeId> {
        self.tensors.iter().map(|t| graph.leaf(t.clone())).collect()
    }
}

/// Per-parameter gradients in ParamSet order.
pub type Grads = Vec<Tensor>;

/// Collects leaf gradients back into ParamSet order; missing gradients
/// (parameters unused by the loss) become zero tensors.
pub fn collect_grads(params: &ParamSet, leaves: &[NodeId], all: &[Option<Tensor>]) -> Grads {
    params
        .ids()
        .zip(leaves.iter())
        .map(|(id, leaf)| {
            all[leaf.0]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(&params.get(id).shape))
        })
        .collect()
}

/// Adam with the usual bias correction; state lives alongside the params.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.ids().map(|id| Tensor::zeros(&params.get(id).shape)).collect(),
            v: params.ids().map(|id| Tensor::zeros(&params.get(id).shape)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, id) in params.ids().enumerate().collect::<Vec<_>>() {
            let g = &grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.get_mut(id);
            for e in 0..p.data.len() {
                m.data[e] = self.beta1 * m.data[e] + (1.0 - self.beta1) * g.data[e];
                v.data[e] = self.beta2 * v.data[e] + (1.0 - self.beta2) * g.data[e] * g.data[e];
                let mh = m.data[e] / bc1;
                let vh = v.data[e] / bc2;
                p.data[e] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Worst relative error found by a gradient check, with its location.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub worst_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative error with a floor so near-zero gradient pairs compare by
/// absolute error instead of exploding.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central-difference check of `analytic` against `loss` for every element
/// of every parameter; `loss` must be a pure function of the params.
pub fn check_gradients(
    params: &ParamSet,
    analytic: &Grads,
    loss: impl Fn(&ParamSet) -> f64,
    h: f64,
) -> GradCheckReport {
    let mut report = GradCheckReport {
        worst_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let mut work = params.clone();
    for (i, id) in params.ids().enumerate().collect::<Vec<_>>() {
        for e in 0..params.get(id).numel() {
            let orig = params.get(id).data[e];
            work.get_mut(id).data[e] = orig + h;
            let plus = loss(&work);
            work.get_mut(id).data[e] = orig - h;
            let minus = loss(&work);
            work.get_mut(id).data[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = relative_error(analytic[i].data[e], numeric);
            report.checked += 1;
            if rel > report.worst_rel_err {
                report.worst_rel_err = rel;
                report.worst_param = params.name(id).to_string();
                report.worst_index = e;
            }
        }
    }
    report
}
