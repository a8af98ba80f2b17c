use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::linalg::Scalar;
use super::ModelError;

/// Shape of the encoder-decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// The small default configuration (64 wide, 4 heads, 2+2 layers).
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_ff: 256,
            max_positions: 512,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.vocab_size == 0 || self.d_model == 0 || self.d_ff == 0 || self.max_positions == 0 {
            return bad("sizes must be positive");
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Closed-form parameter count:
///
/// ```text
///   V·D                      token embedding (shared with the output head)
/// + 2·P·D                    encoder and decoder positions
/// + Le·(4D² + 2DF + F + D + 4D)   attention, feed-forward (+biases), 2 norms
/// + Ld·(8D² + 2DF + F + D + 6D)   self+cross attention, feed-forward, 3 norms
/// + 2D                       final decoder norm
/// ```
pub fn count_params(cfg: &ModelConfig) -> usize {
    let (v, d, f, p) = (cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.max_positions);
    let enc = 4 * d * d + 2 * d * f + f + d + 4 * d;
    let dec = 8 * d * d + 2 * d * f + f + d + 6 * d;
    v * d + 2 * p * d + cfg.n_enc_layers * enc + cfg.n_dec_layers * dec + 2 * d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Embedding,
    Weight,
    Bias,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Name with any layer index removed, e.g. `dec.cross.wq`.
    pub fn family(&self) -> String {
        self.name.split('.').filter(|p| p.parse::<usize>().is_err()).collect::<Vec<_>>().join(".")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AttnIdx {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FfnIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EncLayerIdx {
    pub ln1: NormIdx,
    pub attn: AttnIdx,
    pub ln2: NormIdx,
    pub ffn: FfnIdx,
}

#[derive(Debug, Clone, Copy)]
pub struct DecLayerIdx {
    pub ln1: NormIdx,
    pub self_attn: AttnIdx,
    pub ln2: NormIdx,
    pub cross_attn: AttnIdx,
    pub ln3: NormIdx,
    pub ffn: FfnIdx,
}

/// Tensor inventory in its fixed order. Initialization draws from the
/// generator in exactly this order and checkpoints store tensors in it:
///
/// `tok_emb, enc_pos, dec_pos`, then per encoder layer
/// `ln1.{gain,bias}, attn.{wq,wk,wv,wo}, ln2.{gain,bias}, ffn.{w1,b1,w2,b2}`,
/// then per decoder layer
/// `ln1, self.{wq,wk,wv,wo}, ln2, cross.{wq,wk,wv,wo}, ln3, ffn`,
/// then `final_ln.{gain,bias}`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub specs: Vec<TensorSpec>,
    pub tok_emb: usize,
    pub enc_pos: usize,
    pub dec_pos: usize,
    pub enc: Vec<EncLayerIdx>,
    pub dec: Vec<DecLayerIdx>,
    pub final_ln: NormIdx,
}

struct Builder {
    specs: Vec<TensorSpec>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, kind: ParamKind) -> usize {
        self.specs.push(TensorSpec { name, shape, kind });
        self.specs.len() - 1
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self.push(format!("{prefix}.gain"), vec![d], ParamKind::NormGain),
            bias: self.push(format!("{prefix}.bias"), vec![d], ParamKind::NormBias),
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        let mut w = |n: &str| self.push(format!("{prefix}.{n}"), vec![d, d], ParamKind::Weight);
        AttnIdx { wq: w("wq"), wk: w("wk"), wv: w("wv"), wo: w("wo") }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIdx {
        FfnIdx {
            w1: self.push(format!("{prefix}.w1"), vec![d, f], ParamKind::Weight),
            b1: self.push(format!("{prefix}.b1"), vec![f], ParamKind::Bias),
            w2: self.push(format!("{prefix}.w2"), vec![f, d], ParamKind::Weight),
            b2: self.push(format!("{prefix}.b2"), vec![d], ParamKind::Bias),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let mut b = Builder { specs: Vec::new() };
        let tok_emb = b.push("tok_emb".into(), vec![cfg.vocab_size, d], ParamKind::Embedding);
        let enc_pos = b.push("enc_pos".into(), vec![cfg.max_positions, d], ParamKind::Embedding);
        let dec_pos = b.push("dec_pos".into(), vec![cfg.max_positions, d], ParamKind::Embedding);
        let enc = (0..cfg.n_enc_layers)
            .map(|l| EncLayerIdx {
                ln1: b.norm(&format!("enc.{l}.ln1"), d),
                attn: b.attn(&format!("enc.{l}.attn"), d),
                ln2: b.norm(&format!("enc.{l}.ln2"), d),
                ffn: b.ffn(&format!("enc.{l}.ffn"), d, f),
            })
            .collect();
        let dec = (0..cfg.n_dec_layers)
            .map(|l| DecLayerIdx {
                ln1: b.norm(&format!("dec.{l}.ln1"), d),
                self_attn: b.attn(&format!("dec.{l}.self"), d),
                ln2: b.norm(&format!("dec.{l}.ln2"), d),
                cross_attn: b.attn(&format!("dec.{l}.cross"), d),
                ln3: b.norm(&format!("dec.{l}.ln3"), d),
                ffn: b.ffn(&format!("dec.{l}.ffn"), d, f),
            })
            .collect();
        let final_ln = b.norm("final_ln", d);
        Self { specs: b.specs, tok_emb, enc_pos, dec_pos, enc, dec, final_ln }
    }
}

/// All parameters of one model, one flat buffer per tensor. The same type
/// holds gradients and optimizer moments.
#[derive(Debug, Clone)]
pub struct ModelParams<F = f32> {
    pub config: ModelConfig,
    pub layout: Arc<Layout>,
    pub tensors: Vec<Vec<F>>,
}

impl<F> PartialEq for ModelParams<F>
where
    F: PartialEq,
{
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.tensors == other.tensors
    }
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(config: ModelConfig) -> Self {
        let layout = Arc::new(Layout::new(&config));
        Self::zeros_like_layout(config, layout)
    }

    fn zeros_like_layout(config: ModelConfig, layout: Arc<Layout>) -> Self {
        let tensors = layout.specs.iter().map(|s| vec![F::zero(); s.numel()]).collect();
        Self { config, layout, tensors }
    }

    /// Zero-filled buffers with the same shapes.
    pub fn zeros_like(&self) -> Self {
        Self::zeros_like_layout(self.config, Arc::clone(&self.layout))
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn get(&self, idx: usize) -> &[F] {
        &self.tensors[idx]
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        ModelParams {
            config: self.config,
            layout: Arc::clone(&self.layout),
            tensors: self.tensors.iter().map(|t| t.iter().map(|&x| G::of(x.as_f64())).collect()).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|x| x.is_finite())
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            super::linalg::add_into(a, b);
        }
    }

    pub fn scale(&mut self, by: F) {
        for x in self.tensors.iter_mut().flatten() {
            *x *= by;
        }
    }

    /// Euclidean norm over every scalar, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().flatten().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
    }
}

/// Initial weights: matrices and embeddings from Normal(0, 0.02), biases and
/// norm offsets zero, norm gains one. Draws happen in layout order from a
/// ChaCha8 generator seeded with `seed`.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<ModelParams<f32>, ModelError> {
    config.validate()?;
    let mut params = ModelParams::<f32>::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 0.02).expect("valid normal");
    let layout = Arc::clone(&params.layout);
    for (spec, t) in layout.specs.iter().zip(params.tensors.iter_mut()) {
        match spec.kind {
            ParamKind::Embedding | ParamKind::Weight => {
                for x in t.iter_mut() {
                    *x = normal.sample(&mut rng);
                }
            }
            ParamKind::NormGain => t.fill(1.0),
            ParamKind::Bias | ParamKind::NormBias => {}
        }
    }
    Ok(params)
}
