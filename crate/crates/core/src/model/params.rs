use std::ops::Range;

use rand::Rng as _;

use super::config::ModelConfig;
use crate::seed::rng;

/// Half-width of the uniform weight initialisation.
pub const INIT_SCALE: f64 = 0.08;

/// Named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w_qkv: Range<usize>,
    pub b_qkv: Range<usize>,
    pub w_o: Range<usize>,
    pub b_o: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w_fc: Range<usize>,
    pub b_fc: Range<usize>,
    pub w_proj: Range<usize>,
    pub b_proj: Range<usize>,
}

/// Offsets of every tensor, derived from the configuration alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub enc_w1: Range<usize>,
    pub enc_b1: Range<usize>,
    pub enc_w2: Range<usize>,
    pub enc_b2: Range<usize>,
    pub enc_wp: Range<usize>,
    pub enc_bp: Range<usize>,
    pub tok: Range<usize>,
    pub pos: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub w_out: Range<usize>,
    pub b_out: Range<usize>,
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Init {
    Uniform,
    Zero,
    One,
}

struct Builder {
    offset: usize,
    tensors: Vec<TensorSpec>,
    inits: Vec<Init>,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Range<usize> {
        let len: usize = shape.iter().product();
        let range = self.offset..self.offset + len;
        self.offset += len;
        self.tensors.push(TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            range: range.clone(),
        });
        self.inits.push(init);
        range
    }
}

impl Layout {
    fn build(cfg: &ModelConfig, vocab_size: usize) -> (Layout, Vec<Init>) {
        let d = cfg.embed_dim;
        let f = cfg.ffn_dim();
        let p = cfg.input_dim();
        let mut b = Builder {
            offset: 0,
            tensors: Vec::new(),
            inits: Vec::new(),
        };
        let enc_w1 = b.add("encoder.w1", &[p, d], Init::Uniform);
        let enc_b1 = b.add("encoder.b1", &[d], Init::Zero);
        let enc_w2 = b.add("encoder.w2", &[d, d], Init::Uniform);
        let enc_b2 = b.add("encoder.b2", &[d], Init::Zero);
        let enc_wp = b.add("encoder.proj_w", &[d, d], Init::Uniform);
        let enc_bp = b.add("encoder.proj_b", &[d], Init::Zero);
        let tok = b.add("decoder.token_embedding", &[vocab_size, d], Init::Uniform);
        let pos = b.add("decoder.position_embedding", &[cfg.context_len, d], Init::Uniform);
        let layers = (0..cfg.layers)
            .map(|l| LayerLayout {
                ln1_g: b.add(format!("layer{l}.ln1.gain"), &[d], Init::One),
                ln1_b: b.add(format!("layer{l}.ln1.bias"), &[d], Init::Zero),
                w_qkv: b.add(format!("layer{l}.attn.qkv_w"), &[d, 3 * d], Init::Uniform),
                b_qkv: b.add(format!("layer{l}.attn.qkv_b"), &[3 * d], Init::Zero),
                w_o: b.add(format!("layer{l}.attn.out_w"), &[d, d], Init::Uniform),
                b_o: b.add(format!("layer{l}.attn.out_b"), &[d], Init::Zero),
                ln2_g: b.add(format!("layer{l}.ln2.gain"), &[d], Init::One),
                ln2_b: b.add(format!("layer{l}.ln2.bias"), &[d], Init::Zero),
                w_fc: b.add(format!("layer{l}.mlp.fc_w"), &[d, f], Init::Uniform),
                b_fc: b.add(format!("layer{l}.mlp.fc_b"), &[f], Init::Zero),
                w_proj: b.add(format!("layer{l}.mlp.proj_w"), &[f, d], Init::Uniform),
                b_proj: b.add(format!("layer{l}.mlp.proj_b"), &[d], Init::Zero),
            })
            .collect();
        let lnf_g = b.add("decoder.ln_final.gain", &[d], Init::One);
        let lnf_b = b.add("decoder.ln_final.bias", &[d], Init::Zero);
        // zero output head: the untrained model predicts exactly uniformly
        let w_out = b.add("decoder.out_w", &[d, vocab_size], Init::Zero);
        let b_out = b.add("decoder.out_b", &[vocab_size], Init::Zero);
        let layout = Layout {
            enc_w1,
            enc_b1,
            enc_w2,
            enc_b2,
            enc_wp,
            enc_bp,
            tok,
            pos,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            tensors: b.tensors,
            total: b.offset,
        };
        (layout, b.inits)
    }
}

/// All trainable weights of the encoder and decoder in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    vocab_size: usize,
    pub(crate) layout: Layout,
    pub(crate) data: Vec<f64>,
}

impl ModelParams {
    /// Fresh parameters from `config.seed`.
    pub fn init(config: &ModelConfig, vocab_size: usize) -> Self {
        Self::init_with_seed(config, vocab_size, config.seed)
    }

    pub fn init_with_seed(config: &ModelConfig, vocab_size: usize, seed: u64) -> Self {
        let (layout, inits) = Layout::build(config, vocab_size);
        let mut data = vec![0.0; layout.total];
        let mut r = rng(seed);
        for (spec, init) in layout.tensors.iter().zip(&inits) {
            for v in &mut data[spec.range.clone()] {
                *v = match init {
                    Init::Uniform => r.random_range(-INIT_SCALE..INIT_SCALE),
                    Init::Zero => 0.0,
                    Init::One => 1.0,
                };
            }
        }
        ModelParams {
            config: config.clone(),
            vocab_size,
            layout,
            data,
        }
    }

    /// All-zero parameters with the layout of `config`.
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        let (layout, _) = Layout::build(config, vocab_size);
        let data = vec![0.0; layout.total];
        ModelParams {
            config: config.clone(),
            vocab_size,
            layout,
            data,
        }
    }

    /// Rebuilds parameters from a flat vector in layout order.
    pub fn from_flat(config: &ModelConfig, vocab_size: usize, data: Vec<f64>) -> Option<Self> {
        let (layout, _) = Layout::build(config, vocab_size);
        (data.len() == layout.total).then(|| ModelParams {
            config: config.clone(),
            vocab_size,
            layout,
            data,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.layout.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.data[t.range.clone()])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn get(&self, r: &Range<usize>) -> &[f64] {
        &self.data[r.clone()]
    }
}
