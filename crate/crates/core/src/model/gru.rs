use crate::complexity::Ops;
use crate::error::{invalid, Error, Result};

/// Parameters of one GRU layer. Rows are gate-blocked in the order
/// (reset, update, candidate); kernels are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `3N x M`
    pub input_kernel: Vec<f32>,
    /// `3N x N`
    pub recurrent_kernel: Vec<f32>,
    pub input_bias: Vec<f32>,
    pub recurrent_bias: Vec<f32>,
}

impl GruWeights {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let rows = 3 * hidden_size;
        Self {
            input_size,
            hidden_size,
            input_kernel: vec![0.0; rows * input_size],
            recurrent_kernel: vec![0.0; rows * hidden_size],
            input_bias: vec![0.0; rows],
            recurrent_bias: vec![0.0; rows],
        }
    }

    /// `3N(M + N + 2)`.
    pub fn param_count(input_size: usize, hidden_size: usize) -> usize {
        3 * hidden_size * (input_size + hidden_size + 2)
    }

    pub fn len(&self) -> usize {
        self.input_kernel.len()
            + self.recurrent_kernel.len()
            + self.input_bias.len()
            + self.recurrent_bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.input_size, self.hidden_size);
        if m == 0 || n == 0 {
            return Err(Error::Validation(format!("gru layer with M={m}, N={n}")));
        }
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "{name}: expected {want} values, found {got}"
                )))
            }
        };
        check("input_kernel", self.input_kernel.len(), 3 * n * m)?;
        check("recurrent_kernel", self.recurrent_kernel.len(), 3 * n * n)?;
        check("input_bias", self.input_bias.len(), 3 * n)?;
        check("recurrent_bias", self.recurrent_bias.len(), 3 * n)
    }

    pub(crate) fn values(&self) -> impl Iterator<Item = &f32> {
        self.input_kernel
            .iter()
            .chain(&self.recurrent_kernel)
            .chain(&self.input_bias)
            .chain(&self.recurrent_bias)
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut f32> {
        self.input_kernel
            .iter_mut()
            .chain(self.recurrent_kernel.iter_mut())
            .chain(self.input_bias.iter_mut())
            .chain(self.recurrent_bias.iter_mut())
    }
}

#[inline]
pub(crate) fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// A GRU layer ready for inference. The reset and update gates only ever
/// see the sum of their two biases, so that sum is formed once here.
#[derive(Debug, Clone)]
pub struct GruLayer {
    w: GruWeights,
    /// `b_i + b_h` for the reset and update rows (`2N`).
    gate_bias: Vec<f32>,
}

/// Per-layer scratch so a step does not allocate.
#[derive(Debug, Clone)]
pub struct GruScratch {
    reset: Vec<f32>,
    update: Vec<f32>,
}

impl GruScratch {
    pub fn new(hidden_size: usize) -> Self {
        Self {
            reset: vec![0.0; hidden_size],
            update: vec![0.0; hidden_size],
        }
    }
}

impl GruLayer {
    pub fn new(w: GruWeights) -> Result<Self> {
        w.validate()?;
        let n = w.hidden_size;
        let gate_bias = (0..2 * n)
            .map(|j| w.input_bias[j] + w.recurrent_bias[j])
            .collect();
        Ok(Self { w, gate_bias })
    }

    pub fn weights(&self) -> &GruWeights {
        &self.w
    }

    pub fn input_size(&self) -> usize {
        self.w.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.w.hidden_size
    }

    /// Affine row: `acc + W_in[row] . x + W_rec[row] . h`.
    #[inline]
    fn row<O: Ops>(&self, row: usize, mut acc: f32, x: &[f32], h: &[f32], ops: &mut O) -> f32 {
        let (m, n) = (self.w.input_size, self.w.hidden_size);
        let wi = &self.w.input_kernel[row * m..(row + 1) * m];
        for (w, v) in wi.iter().zip(x) {
            acc += w * v;
            ops.mul(1);
            ops.add(1);
        }
        let wh = &self.w.recurrent_kernel[row * n..(row + 1) * n];
        for (w, v) in wh.iter().zip(h) {
            acc += w * v;
            ops.mul(1);
            ops.add(1);
        }
        acc
    }

    /// One time step: `h_out = GRU(x, h)`.
    ///
    /// ```text
    /// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
    /// z  = σ(W_iz x + b_iz + W_hz h + b_hz)
    /// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
    /// h' = (1 − z) ⊙ n + z ⊙ h
    /// ```
    pub fn step<O: Ops>(
        &self,
        x: &[f32],
        h: &[f32],
        h_out: &mut [f32],
        scratch: &mut GruScratch,
        ops: &mut O,
    ) {
        let n = self.w.hidden_size;
        debug_assert_eq!(x.len(), self.w.input_size);
        debug_assert_eq!(h.len(), n);
        debug_assert_eq!(h_out.len(), n);
        let empty: &[f32] = &[];
        for j in 0..n {
            let a = self.row(j, self.gate_bias[j], x, h, ops);
            scratch.reset[j] = sigmoid(a);
            ops.lookup(1);
            let a = self.row(n + j, self.gate_bias[n + j], x, h, ops);
            scratch.update[j] = sigmoid(a);
            ops.lookup(1);
        }
        for j in 0..n {
            let row = 2 * n + j;
            let from_input = self.row(row, self.w.input_bias[row], x, empty, ops);
            let from_state = self.row(row, self.w.recurrent_bias[row], empty, h, ops);
            let cand = (from_input + scratch.reset[j] * from_state).tanh();
            ops.mul(1);
            ops.add(1);
            ops.lookup(1);
            // (1 - z) n + z h  ==  n + z (h - n)
            h_out[j] = cand + scratch.update[j] * (h[j] - cand);
            ops.add(2);
            ops.mul(1);
        }
    }
}

/// Single GRU step on freshly allocated output, validating shapes.
pub fn gru_step(w: &GruWeights, x: &[f32], h: &[f32]) -> Result<Vec<f32>> {
    if x.len() != w.input_size || h.len() != w.hidden_size {
        return Err(invalid(format!(
            "gru_step: layer is {}x{}, got x of {} and h of {}",
            w.input_size,
            w.hidden_size,
            x.len(),
            h.len()
        )));
    }
    let layer = GruLayer::new(w.clone())?;
    let mut out = vec![0.0; w.hidden_size];
    let mut scratch = GruScratch::new(w.hidden_size);
    layer.step(x, h, &mut out, &mut scratch, &mut crate::complexity::NoOps);
    Ok(out)
}
