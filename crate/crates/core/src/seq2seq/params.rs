use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};

pub const INIT_RANGE: f64 = 0.1;

/// Gate rows are stacked input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `4H x in`
    pub w_x: Array2<f64>,
    /// `4H x H`
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmLayer {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayer {
            w_x: Array2::zeros((4 * hidden, input)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `V x E`
    pub src_embed: Array2<f64>,
    /// `V x E`
    pub tgt_embed: Array2<f64>,
    pub encoder: Vec<LstmLayer>,
    pub decoder: Vec<LstmLayer>,
    /// Bilinear attention, `H x H`.
    pub attn: Array2<f64>,
    /// `H x 2H`, applied to `[context; decoder state]`.
    pub combine_w: Array2<f64>,
    pub combine_b: Array1<f64>,
    /// `V x H`
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl ModelParams {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, layers: usize) -> Self {
        let stack = || {
            (0..layers)
                .map(|l| LstmLayer::zeros(if l == 0 { embed } else { hidden }, hidden))
                .collect::<Vec<_>>()
        };
        ModelParams {
            src_embed: Array2::zeros((vocab, embed)),
            tgt_embed: Array2::zeros((vocab, embed)),
            encoder: stack(),
            decoder: stack(),
            attn: Array2::zeros((hidden, hidden)),
            combine_w: Array2::zeros((hidden, 2 * hidden)),
            combine_b: Array1::zeros(hidden),
            out_w: Array2::zeros((vocab, hidden)),
            out_b: Array1::zeros(vocab),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(
            self.vocab_size(),
            self.embed_dim(),
            self.hidden_dim(),
            self.num_layers(),
        )
    }

    pub fn vocab_size(&self) -> usize {
        self.src_embed.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.src_embed.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.attn.nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.encoder.len()
    }

    /// Every tensor as a flat slice, in a fixed order, with its shape.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        let m = |a: &Array2<f64>| vec![a.nrows(), a.ncols()];
        out.push(("src_embed".into(), m(&self.src_embed), self.src_embed.as_slice().unwrap()));
        out.push(("tgt_embed".into(), m(&self.tgt_embed), self.tgt_embed.as_slice().unwrap()));
        for (side, stack) in [("enc", &self.encoder), ("dec", &self.decoder)] {
            for (i, l) in stack.iter().enumerate() {
                out.push((format!("{side}.{i}.w_x"), m(&l.w_x), l.w_x.as_slice().unwrap()));
                out.push((format!("{side}.{i}.w_h"), m(&l.w_h), l.w_h.as_slice().unwrap()));
                out.push((format!("{side}.{i}.b"), vec![l.b.len()], l.b.as_slice().unwrap()));
            }
        }
        out.push(("attn".into(), m(&self.attn), self.attn.as_slice().unwrap()));
        out.push(("combine_w".into(), m(&self.combine_w), self.combine_w.as_slice().unwrap()));
        out.push(("combine_b".into(), vec![self.combine_b.len()], self.combine_b.as_slice().unwrap()));
        out.push(("out_w".into(), m(&self.out_w), self.out_w.as_slice().unwrap()));
        out.push(("out_b".into(), vec![self.out_b.len()], self.out_b.as_slice().unwrap()));
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.src_embed.as_slice_mut().unwrap(),
            self.tgt_embed.as_slice_mut().unwrap(),
        ];
        for stack in [&mut self.encoder, &mut self.decoder] {
            for l in stack.iter_mut() {
                out.push(l.w_x.as_slice_mut().unwrap());
                out.push(l.w_h.as_slice_mut().unwrap());
                out.push(l.b.as_slice_mut().unwrap());
            }
        }
        out.push(self.attn.as_slice_mut().unwrap());
        out.push(self.combine_w.as_slice_mut().unwrap());
        out.push(self.combine_b.as_slice_mut().unwrap());
        out.push(self.out_w.as_slice_mut().unwrap());
        out.push(self.out_b.as_slice_mut().unwrap());
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, s)| s.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, _, s)| s.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self -= lr * grad`
    pub fn sgd_step(&mut self, grad: &ModelParams, lr: f64) {
        for (p, g) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            for (pv, gv) in p.iter_mut().zip(g.2) {
                *pv -= lr * gv;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, s)| s.iter().all(|v| v.is_finite()))
    }
}

/// Uniform initialization in `[-0.1, 0.1]`, deterministic per `config.seed`.
pub fn init_params(config: &ModelConfig, vocab_size: usize) -> Result<ModelParams, ModelError> {
    config.validate()?;
    if vocab_size == 0 {
        return Err(ModelError::Config("vocabulary is empty".into()));
    }
    let mut params = ModelParams::zeros(
        vocab_size,
        config.embed_dim,
        config.hidden_dim,
        config.num_layers,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
    }
    Ok(params)
}
