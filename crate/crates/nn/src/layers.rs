//! Transformer building blocks on top of [`Tape`].

use crate::error::{NnError, Result};
use crate::params::{Init, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{SparseRows, Tensor2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Clone, Copy, Debug)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w: store.add_init(
                format!("{name}.w"),
                fan_in,
                fan_out,
                Init::XavierUniform,
                rng,
            ),
            b: store.add_init(format!("{name}.b"), 1, fan_out, Init::Zeros, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.linear(x, w, Some(b))
    }

    pub fn forward_sparse<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Arc<SparseRows<T>>,
    ) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.sparse_linear(x, w, Some(b))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            gain: store.add_init(format!("{name}.gain"), 1, width, Init::Ones, rng),
            bias: store.add_init(format!("{name}.bias"), 1, width, Init::Zeros, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        tape.layer_norm(x, g, b)
    }
}

/// Query/key/value/output projections of multi-head self-attention.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub q: LinearParams,
    pub k: LinearParams,
    pub v: LinearParams,
    pub o: LinearParams,
    pub heads: usize,
}

impl AttentionParams {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(NnError::Config(format!(
                "hidden width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            q: LinearParams::new(store, &format!("{name}.q"), width, width, rng),
            k: LinearParams::new(store, &format!("{name}.k"), width, width, rng),
            v: LinearParams::new(store, &format!("{name}.v"), width, width, rng),
            o: LinearParams::new(store, &format!("{name}.o"), width, width, rng),
            heads,
        })
    }

    /// Self-attention within consecutive sequences of `seq_len` rows.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        seq_len: usize,
        key_mask: Option<Arc<Vec<bool>>>,
    ) -> Var {
        let q = self.q.forward(tape, store, x);
        let k = self.k.forward(tape, store, x);
        let v = self.v.forward(tape, store, x);
        let a = tape.attention(q, k, v, seq_len, self.heads, key_mask);
        self.o.forward(tape, store, a)
    }
}

/// Position-wise feed-forward network: linear → ReLU → linear, inner width
/// `2·d_h`.
#[derive(Clone, Copy, Debug)]
pub struct FfnParams {
    pub inner: LinearParams,
    pub outer: LinearParams,
}

impl FfnParams {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            inner: LinearParams::new(store, &format!("{name}.inner"), width, 2 * width, rng),
            outer: LinearParams::new(store, &format!("{name}.outer"), 2 * width, width, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        dropout: &mut Dropout,
    ) -> Var {
        let h = self.inner.forward(tape, store, x);
        let h = tape.relu(h);
        let h = dropout.apply(tape, h);
        self.outer.forward(tape, store, h)
    }
}

/// One pre-norm encoder layer:
/// `Ĥ = MSA(Norm(H)) + H`, `H' = FFN(Norm(Ĥ)) + Ĥ`.
#[derive(Clone, Copy, Debug)]
pub struct EncoderLayerParams {
    pub norm_attn: LayerNormParams,
    pub attn: AttentionParams,
    pub norm_ffn: LayerNormParams,
    pub ffn: FfnParams,
}

impl EncoderLayerParams {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            norm_attn: LayerNormParams::new(store, &format!("{name}.norm_attn"), width, rng),
            attn: AttentionParams::new(store, &format!("{name}.attn"), width, heads, rng)?,
            norm_ffn: LayerNormParams::new(store, &format!("{name}.norm_ffn"), width, rng),
            ffn: FfnParams::new(store, &format!("{name}.ffn"), width, rng),
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        h: Var,
        seq_len: usize,
        key_mask: Option<Arc<Vec<bool>>>,
        dropout: &mut Dropout,
    ) -> Var {
        let n = self.norm_attn.forward(tape, store, h);
        let a = self.attn.forward(tape, store, n, seq_len, key_mask);
        let a = dropout.apply(tape, a);
        let h_hat = tape.add(a, h);
        let n = self.norm_ffn.forward(tape, store, h_hat);
        let f = self.ffn.forward(tape, store, n, dropout);
        let f = dropout.apply(tape, f);
        tape.add(f, h_hat)
    }
}

/// Dropout state for one forward pass.
pub struct Dropout {
    pub rate: f64,
    pub training: bool,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, training: bool, rng: ChaCha8Rng) -> Self {
        Self {
            rate,
            training,
            rng,
        }
    }

    /// Evaluation-mode dropout (identity).
    pub fn eval() -> Self {
        use rand::SeedableRng;
        Self::new(0.0, false, ChaCha8Rng::seed_from_u64(0))
    }

    pub fn apply<T: Scalar>(&mut self, tape: &mut Tape<T>, x: Var) -> Var {
        tape.dropout(x, self.rate, self.training, &mut self.rng)
    }
}

/// Sinusoidal position encoding table (`positions × width`).
pub fn sinusoidal_positions<T: Scalar>(positions: usize, width: usize) -> Tensor2<T> {
    let mut t = Tensor2::zeros(positions, width);
    for pos in 0..positions {
        for i in 0..width {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / width as f64);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            t.set(pos, i, T::of(v));
        }
    }
    t
}
