use ndarray::Array2;
use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use super::NnError;

/// Fully connected layer `y = W·x + b` whose weights live in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), out_dim, in_dim, rng);
        let bias = store.add_zeros(format!("{name}.bias"), 1, out_dim);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn record(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId, NnError> {
        tape.affine(x, self.weight, Some(self.bias))
    }

    /// Single-vector forward pass.
    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>, NnError> {
        dense_forward(store.get(self.weight), store.get(self.bias), x)
    }
}

/// `W·x + b` for a plain weight matrix (`out × in`) and bias row (`1 × out`).
pub fn dense_forward(weight: &Array2<f64>, bias: &Array2<f64>, x: &[f64]) -> Result<Vec<f64>, NnError> {
    if x.len() != weight.ncols() {
        return Err(NnError::DimensionMismatch {
            op: "dense_forward",
            expected: format!("input of length {}", weight.ncols()),
            got: format!("{}", x.len()),
        });
    }
    if bias.len() != weight.nrows() {
        return Err(NnError::DimensionMismatch {
            op: "dense_forward",
            expected: format!("bias of length {}", weight.nrows()),
            got: format!("{}", bias.len()),
        });
    }
    Ok(weight
        .rows()
        .into_iter()
        .zip(bias.iter())
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

/// Two dense layers with a tanh hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub hidden: Dense,
    pub output: Dense,
    pub output_activation: Activation,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: (usize, usize, usize),
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        let (input, hidden, output) = dims;
        Self {
            hidden: Dense::new(store, &format!("{name}.0"), input, hidden, rng),
            output: Dense::new(store, &format!("{name}.1"), hidden, output, rng),
            output_activation,
        }
    }

    pub fn record(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId, NnError> {
        let pre = self.hidden.record(tape, x)?;
        let h = tape.tanh(pre);
        let out = self.output.record(tape, h)?;
        Ok(match self.output_activation {
            Activation::Identity => out,
            Activation::Tanh => tape.tanh(out),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim
    }
}

/// Gated recurrent cell:
///
/// ```text
/// u  = σ(W_u x + U_u h + b_u)
/// r  = σ(W_r x + U_r h + b_r)
/// c  = tanh(W_c x + U_c (r ⊙ h) + b_c)
/// h' = (1 − u) ⊙ h + u ⊙ c
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruCell {
    pub w_update: ParamId,
    pub u_update: ParamId,
    pub b_update: ParamId,
    pub w_reset: ParamId,
    pub u_reset: ParamId,
    pub b_reset: ParamId,
    pub w_cand: ParamId,
    pub u_cand: ParamId,
    pub b_cand: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut gate = |gate: &str| {
            let w = store.add_uniform(format!("{name}.w_{gate}"), hidden_dim, input_dim, rng);
            let u = store.add_uniform(format!("{name}.u_{gate}"), hidden_dim, hidden_dim, rng);
            let b = store.add_zeros(format!("{name}.b_{gate}"), 1, hidden_dim);
            (w, u, b)
        };
        let (w_update, u_update, b_update) = gate("update");
        let (w_reset, u_reset, b_reset) = gate("reset");
        let (w_cand, u_cand, b_cand) = gate("cand");
        Self {
            w_update,
            u_update,
            b_update,
            w_reset,
            u_reset,
            b_reset,
            w_cand,
            u_cand,
            b_cand,
            input_dim,
            hidden_dim,
        }
    }

    /// Records one step on batched `h` (`B × hidden`) and `x` (`B × input`).
    pub fn record(&self, tape: &mut Tape<'_>, h: NodeId, x: NodeId) -> Result<NodeId, NnError> {
        let (hr, hc) = tape.value(h).dim();
        let (xr, xc) = tape.value(x).dim();
        if hc != self.hidden_dim || xc != self.input_dim || hr != xr {
            return Err(NnError::DimensionMismatch {
                op: "gru_step",
                expected: format!("h: (B, {}), x: (B, {})", self.hidden_dim, self.input_dim),
                got: format!("h: ({hr}, {hc}), x: ({xr}, {xc})"),
            });
        }
        let xu = tape.affine(x, self.w_update, Some(self.b_update))?;
        let hu = tape.affine(h, self.u_update, None)?;
        let u_pre = tape.add(xu, hu)?;
        let u = tape.sigmoid(u_pre);

        let xr = tape.affine(x, self.w_reset, Some(self.b_reset))?;
        let hr = tape.affine(h, self.u_reset, None)?;
        let r_pre = tape.add(xr, hr)?;
        let r = tape.sigmoid(r_pre);

        let rh = tape.mul(r, h)?;
        let xc = tape.affine(x, self.w_cand, Some(self.b_cand))?;
        let hc = tape.affine(rh, self.u_cand, None)?;
        let c_pre = tape.add(xc, hc)?;
        let c = tape.tanh(c_pre);

        let keep = tape.one_minus(u);
        let kept = tape.mul(keep, h)?;
        let written = tape.mul(u, c)?;
        tape.add(kept, written)
    }

    /// Single-vector step.
    pub fn step(&self, store: &ParamStore, h: &[f64], x: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut tape = Tape::new(store);
        let hn = tape.input(row(h));
        let xn = tape.input(row(x));
        let out = self.record(&mut tape, hn, xn)?;
        Ok(tape.value(out).iter().copied().collect())
    }
}

/// A `1 × n` matrix holding `v`.
pub fn row(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape")
}
