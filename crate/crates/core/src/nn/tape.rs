use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};

use super::params::{Grads, ParamId, ParamStore};
use super::NnError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Affine {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
    },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    OneMinus(NodeId),
    Concat(Vec<NodeId>),
    Gather {
        x: NodeId,
        cols: Vec<usize>,
    },
    MeanSquaredTo {
        x: NodeId,
        target: Array2<f64>,
    },
    WeightedSum(Vec<(NodeId, f64)>),
    Sum(NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Records batched matrix operations (rows are batch entries) so a scalar
/// loss can be differentiated in reverse mode.
///
/// Parameters are read from the borrowed [`ParamStore`]; their gradients are
/// returned in a [`Grads`] aligned with that store.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: parameter gradients plus the adjoint of every
/// recorded node (inputs included).
#[derive(Debug)]
pub struct Gradients {
    pub params: Grads,
    nodes: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a recorded node, `None` if the
    /// loss does not depend on it.
    pub fn node(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.nodes[id.0].as_ref()
    }
}

fn same_shape(op: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Result<(), NnError> {
    if a.dim() != b.dim() {
        return Err(NnError::DimensionMismatch {
            op,
            expected: format!("{:?}", a.dim()),
            got: format!("{:?}", b.dim()),
        });
    }
    Ok(())
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Records a constant input. Gradients still flow to it and can be read
    /// back through [`Gradients::node`].
    pub fn input(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// `x · Wᵀ + b` with `W` of shape `out × in` and optional bias `1 × out`.
    pub fn affine(&mut self, x: NodeId, w: ParamId, b: Option<ParamId>) -> Result<NodeId, NnError> {
        let wv = self.store.get(w);
        let xv = &self.nodes[x.0].value;
        if xv.ncols() != wv.ncols() {
            return Err(NnError::DimensionMismatch {
                op: "affine",
                expected: format!("{} input columns", wv.ncols()),
                got: format!("{}", xv.ncols()),
            });
        }
        let mut out = xv.dot(&wv.t());
        if let Some(b) = b {
            let bv = self.store.get(b);
            if bv.dim() != (1, wv.nrows()) {
                return Err(NnError::DimensionMismatch {
                    op: "affine bias",
                    expected: format!("(1, {})", wv.nrows()),
                    got: format!("{:?}", bv.dim()),
                });
            }
            out += bv;
        }
        Ok(self.push(Op::Affine { x, w, b }, out))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.mapv(f64::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.mapv(sigmoid);
        self.push(Op::Sigmoid(x), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        same_shape("add", &self.nodes[a.0].value, &self.nodes[b.0].value)?;
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        same_shape("sub", &self.nodes[a.0].value, &self.nodes[b.0].value)?;
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        same_shape("mul", &self.nodes[a.0].value, &self.nodes[b.0].value)?;
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// `1 − x`, elementwise.
    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.mapv(|e| 1.0 - e);
        self.push(Op::OneMinus(x), v)
    }

    /// Column-wise concatenation; all parts must have the same row count.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        let rows = parts
            .first()
            .map(|p| self.nodes[p.0].value.nrows())
            .ok_or(NnError::DimensionMismatch {
                op: "concat",
                expected: "at least one part".into(),
                got: "none".into(),
            })?;
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.ncols()).sum();
        let mut out = Array2::zeros((rows, cols));
        let mut offset = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            if v.nrows() != rows {
                return Err(NnError::DimensionMismatch {
                    op: "concat",
                    expected: format!("{rows} rows"),
                    got: format!("{}", v.nrows()),
                });
            }
            out.slice_mut(ndarray::s![.., offset..offset + v.ncols()])
                .assign(v);
            offset += v.ncols();
        }
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    /// Picks column `cols[i]` from row `i`, giving a `rows × 1` node.
    pub fn gather(&mut self, x: NodeId, cols: &[usize]) -> Result<NodeId, NnError> {
        let xv = &self.nodes[x.0].value;
        if cols.len() != xv.nrows() || cols.iter().any(|&c| c >= xv.ncols()) {
            return Err(NnError::DimensionMismatch {
                op: "gather",
                expected: format!("{} indices below {}", xv.nrows(), xv.ncols()),
                got: format!("{cols:?}"),
            });
        }
        let v = Array2::from_shape_fn((cols.len(), 1), |(i, _)| xv[[i, cols[i]]]);
        Ok(self.push(
            Op::Gather {
                x,
                cols: cols.to_vec(),
            },
            v,
        ))
    }

    /// Mean over all elements of `(x − target)²`, as a `1 × 1` node. The
    /// target is a constant.
    pub fn mean_squared_to(&mut self, x: NodeId, target: Array2<f64>) -> Result<NodeId, NnError> {
        let xv = &self.nodes[x.0].value;
        same_shape("mean_squared_to", xv, &target)?;
        let n = xv.len().max(1) as f64;
        let s: f64 = xv
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let v = Array2::from_elem((1, 1), s / n);
        Ok(self.push(Op::MeanSquaredTo { x, target }, v))
    }

    /// `Σ cᵢ·xᵢ` over same-shaped nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId, NnError> {
        let first = terms.first().ok_or(NnError::DimensionMismatch {
            op: "weighted_sum",
            expected: "at least one term".into(),
            got: "none".into(),
        })?;
        let mut v = Array2::zeros(self.nodes[first.0 .0].value.dim());
        for &(id, c) in terms {
            let t = &self.nodes[id.0].value;
            same_shape("weighted_sum", &v, t)?;
            v.scaled_add(c, t);
        }
        Ok(self.push(Op::WeightedSum(terms.to_vec()), v))
    }

    /// Sum of all entries, as a `1 × 1` node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.nodes[x.0].value.sum());
        self.push(Op::Sum(x), v)
    }

    /// Reverse-mode sweep from a `1 × 1` loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NnError> {
        let lv = &self.nodes[loss.0].value;
        if lv.dim() != (1, 1) {
            return Err(NnError::NotScalar(lv.dim()));
        }
        let mut params = self.store.zero_grads();
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Array2::ones((1, 1)));

        fn accumulate(adj: &mut [Option<Array2<f64>>], id: NodeId, g: Array2<f64>) {
            match &mut adj[id.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let wv = self.store.get(*w);
                    let xv = &self.nodes[x.0].value;
                    general_mat_mul(1.0, &g.t(), xv, 1.0, params.get_mut(*w));
                    if let Some(b) = b {
                        *params.get_mut(*b) += &g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    }
                    accumulate(&mut adj, *x, g.dot(wv));
                }
                Op::Tanh(x) => {
                    let dx = ndarray::Zip::from(&g)
                        .and(&node.value)
                        .map_collect(|&g, &y| g * (1.0 - y * y));
                    accumulate(&mut adj, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let dx = ndarray::Zip::from(&g)
                        .and(&node.value)
                        .map_collect(|&g, &y| g * y * (1.0 - y));
                    accumulate(&mut adj, *x, dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, -&g);
                    accumulate(&mut adj, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let da = &g * &self.nodes[b.0].value;
                    let db = &g * &self.nodes[a.0].value;
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::OneMinus(x) => accumulate(&mut adj, *x, -&g),
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.ncols();
                        let part = g.slice(ndarray::s![.., offset..offset + w]).to_owned();
                        accumulate(&mut adj, *p, part);
                        offset += w;
                    }
                }
                Op::Gather { x, cols } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = Array2::zeros(xv.dim());
                    for (i, &c) in cols.iter().enumerate() {
                        dx[[i, c]] = g[[i, 0]];
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::MeanSquaredTo { x, target } => {
                    let xv = &self.nodes[x.0].value;
                    let scale = 2.0 * g[[0, 0]] / xv.len().max(1) as f64;
                    let dx = ndarray::Zip::from(xv)
                        .and(target)
                        .map_collect(|&a, &t| scale * (a - t));
                    accumulate(&mut adj, *x, dx);
                }
                Op::Sum(x) => {
                    let dx = Array2::from_elem(self.nodes[x.0].value.dim(), g[[0, 0]]);
                    accumulate(&mut adj, *x, dx);
                }
                Op::WeightedSum(terms) => {
                    for &(id, c) in terms {
                        accumulate(&mut adj, id, &g * c);
                    }
                }
            }
            adj[idx] = Some(g);
        }
        Ok(Gradients {
            params,
            nodes: adj,
        })
    }
}
