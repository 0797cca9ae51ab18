//! Pre-layernorm encoder-decoder transformer with learned absolute positions.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError};
use crate::numeric::{
    read_checkpoint, write_checkpoint, AttentionLayout, ParamId, ParamStore, Scalar, Tape, Tensor, Var,
};
use crate::text::{TokenId, BOS, PAD};

const LN_EPS: f64 = 1e-5;

enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

/// Every parameter name and shape, in insertion order.
fn parameter_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.d_model;
    let lin = |fan_in: usize| Init::Normal(1.0 / (fan_in as f64).sqrt());
    let mut out = vec![
        ("tok_emb".to_string(), vec![cfg.vocab_size, d], Init::Normal(0.02)),
        ("enc.pos".to_string(), vec![cfg.max_src_len, d], Init::Normal(0.02)),
        ("dec.pos".to_string(), vec![cfg.max_tgt_len, d], Init::Normal(0.02)),
    ];
    let ln = |out: &mut Vec<_>, p: &str| {
        out.push((format!("{p}.g"), vec![d], Init::Ones));
        out.push((format!("{p}.b"), vec![d], Init::Zeros));
    };
    let attn = |out: &mut Vec<(String, Vec<usize>, Init)>, p: &str| {
        for m in ["q", "k", "v", "o"] {
            out.push((format!("{p}.{m}.w"), vec![d, d], lin(d)));
            out.push((format!("{p}.{m}.b"), vec![d], Init::Zeros));
        }
    };
    let ffn = |out: &mut Vec<(String, Vec<usize>, Init)>, p: &str| {
        out.push((format!("{p}.ff1.w"), vec![d, cfg.d_ff], lin(d)));
        out.push((format!("{p}.ff1.b"), vec![cfg.d_ff], Init::Zeros));
        out.push((format!("{p}.ff2.w"), vec![cfg.d_ff, d], lin(cfg.d_ff)));
        out.push((format!("{p}.ff2.b"), vec![d], Init::Zeros));
    };
    for l in 0..cfg.num_layers {
        let p = format!("enc.{l}");
        ln(&mut out, &format!("{p}.ln1"));
        attn(&mut out, &format!("{p}.self"));
        ln(&mut out, &format!("{p}.ln2"));
        ffn(&mut out, &p);
    }
    ln(&mut out, "enc.ln_f");
    for l in 0..cfg.num_layers {
        let p = format!("dec.{l}");
        ln(&mut out, &format!("{p}.ln1"));
        attn(&mut out, &format!("{p}.self"));
        ln(&mut out, &format!("{p}.ln2"));
        attn(&mut out, &format!("{p}.cross"));
        ln(&mut out, &format!("{p}.ln3"));
        ffn(&mut out, &p);
    }
    ln(&mut out, "dec.ln_f");
    out.push(("out.w".to_string(), vec![d, cfg.vocab_size], Init::Normal(0.02)));
    out.push(("out.b".to_string(), vec![cfg.vocab_size], Init::Zeros));
    out
}

#[derive(Clone, Copy, Debug)]
struct NormIds {
    g: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct LinearIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct AttnIds {
    q: LinearIds,
    k: LinearIds,
    v: LinearIds,
    o: LinearIds,
}

#[derive(Clone, Copy, Debug)]
struct FfnIds {
    ff1: LinearIds,
    ff2: LinearIds,
}

#[derive(Clone, Debug)]
struct EncoderLayerIds {
    ln1: NormIds,
    attn: AttnIds,
    ln2: NormIds,
    ffn: FfnIds,
}

#[derive(Clone, Debug)]
struct DecoderLayerIds {
    ln1: NormIds,
    self_attn: AttnIds,
    ln2: NormIds,
    cross_attn: AttnIds,
    ln3: NormIds,
    ffn: FfnIds,
}

/// Parameter ids resolved by name once per model.
#[derive(Clone, Debug)]
pub(crate) struct ParamIndex {
    tok_emb: ParamId,
    enc_pos: ParamId,
    dec_pos: ParamId,
    enc: Vec<EncoderLayerIds>,
    enc_ln: NormIds,
    dec: Vec<DecoderLayerIds>,
    dec_ln: NormIds,
    out: LinearIds,
}

impl ParamIndex {
    fn resolve<T: Scalar>(cfg: &ModelConfig, store: &ParamStore<T>) -> Result<Self, ModelError> {
        for (name, shape, _) in parameter_layout(cfg) {
            match store.by_name(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(ModelError::Config(format!(
                        "parameter {name} has shape {:?}, config implies {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(ModelError::Config(format!("missing parameter {name}"))),
            }
        }
        let id = |n: &str| store.id(n).expect("presence checked above");
        let norm = |p: &str| NormIds {
            g: id(&format!("{p}.g")),
            b: id(&format!("{p}.b")),
        };
        let linear = |p: &str| LinearIds {
            w: id(&format!("{p}.w")),
            b: id(&format!("{p}.b")),
        };
        let attn = |p: &str| AttnIds {
            q: linear(&format!("{p}.q")),
            k: linear(&format!("{p}.k")),
            v: linear(&format!("{p}.v")),
            o: linear(&format!("{p}.o")),
        };
        let ffn = |p: &str| FfnIds {
            ff1: linear(&format!("{p}.ff1")),
            ff2: linear(&format!("{p}.ff2")),
        };
        Ok(Self {
            tok_emb: id("tok_emb"),
            enc_pos: id("enc.pos"),
            dec_pos: id("dec.pos"),
            enc: (0..cfg.num_layers)
                .map(|l| EncoderLayerIds {
                    ln1: norm(&format!("enc.{l}.ln1")),
                    attn: attn(&format!("enc.{l}.self")),
                    ln2: norm(&format!("enc.{l}.ln2")),
                    ffn: ffn(&format!("enc.{l}")),
                })
                .collect(),
            enc_ln: norm("enc.ln_f"),
            dec: (0..cfg.num_layers)
                .map(|l| DecoderLayerIds {
                    ln1: norm(&format!("dec.{l}.ln1")),
                    self_attn: attn(&format!("dec.{l}.self")),
                    ln2: norm(&format!("dec.{l}.ln2")),
                    cross_attn: attn(&format!("dec.{l}.cross")),
                    ln3: norm(&format!("dec.{l}.ln3")),
                    ffn: ffn(&format!("dec.{l}")),
                })
                .collect(),
            dec_ln: norm("dec.ln_f"),
            out: linear("out"),
        })
    }
}

/// Right-pads sequences with PAD; returns the flat ids, the padded length,
/// and a validity flag per position.
fn pad_batch(seqs: &[Vec<TokenId>]) -> (Vec<usize>, usize, Vec<bool>) {
    let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(seqs.len() * len);
    let mut valid = Vec::with_capacity(seqs.len() * len);
    for s in seqs {
        ids.extend(s.iter().map(|&t| t as usize));
        ids.extend(std::iter::repeat(PAD as usize).take(len - s.len()));
        valid.extend(std::iter::repeat(true).take(s.len()));
        valid.extend(std::iter::repeat(false).take(len - s.len()));
    }
    (ids, len, valid)
}

/// Encoder output for a batch of sources.
pub(crate) struct Memory {
    pub var: Var,
    pub len: usize,
    pub valid: Vec<bool>,
}

/// One forward pass: a tape plus lazily bound parameters.
pub(crate) struct Forward<'a, T: Scalar> {
    cfg: &'a ModelConfig,
    store: &'a ParamStore<T>,
    index: &'a ParamIndex,
    pub tape: Tape<T>,
    bound: Vec<Option<Var>>,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a, T: Scalar> Forward<'a, T> {
    pub fn new(
        cfg: &'a ModelConfig,
        store: &'a ParamStore<T>,
        index: &'a ParamIndex,
        rng: Option<&'a mut ChaCha8Rng>,
    ) -> Self {
        Self {
            cfg,
            store,
            index,
            tape: Tape::new(),
            bound: vec![None; store.len()],
            rng,
        }
    }

    fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let v = self.tape.param(self.store, id);
        self.bound[id.index()] = Some(v);
        v
    }

    /// Binds every parameter so each one receives a gradient.
    pub fn bind_all(&mut self) {
        let ids: Vec<ParamId> = self.store.iter().map(|(id, _, _)| id).collect();
        for id in ids {
            self.p(id);
        }
    }

    fn dropout(&mut self, x: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) if self.cfg.dropout_rate > 0.0 => self.tape.dropout(x, self.cfg.dropout_rate, rng),
            _ => x,
        }
    }

    fn linear(&mut self, x: Var, ids: LinearIds) -> Result<Var, ModelError> {
        let w = self.p(ids.w);
        let b = self.p(ids.b);
        let y = self.tape.matmul(x, w)?;
        Ok(self.tape.add_bias(y, b)?)
    }

    fn norm(&mut self, x: Var, ids: NormIds) -> Result<Var, ModelError> {
        let g = self.p(ids.g);
        let b = self.p(ids.b);
        Ok(self.tape.layer_norm(x, g, b, T::from_f64(LN_EPS))?)
    }

    fn attention(&mut self, x: Var, kv: Var, ids: AttnIds, layout: AttentionLayout) -> Result<Var, ModelError> {
        let q = self.linear(x, ids.q)?;
        let k = self.linear(kv, ids.k)?;
        let v = self.linear(kv, ids.v)?;
        let a = self.tape.attention(q, k, v, layout)?;
        self.linear(a, ids.o)
    }

    fn ffn(&mut self, x: Var, ids: FfnIds) -> Result<Var, ModelError> {
        let h = self.linear(x, ids.ff1)?;
        let h = self.tape.gelu(h);
        self.linear(h, ids.ff2)
    }

    fn embed(&mut self, ids: &[usize], len: usize, pos_table: ParamId) -> Result<Var, ModelError> {
        let tok = self.p(self.index.tok_emb);
        let pos = self.p(pos_table);
        let positions: Vec<usize> = (0..ids.len()).map(|i| i % len).collect();
        let e = self.tape.embedding(tok, ids)?;
        let pe = self.tape.embedding(pos, &positions)?;
        let x = self.tape.add(e, pe)?;
        Ok(self.dropout(x))
    }

    pub fn encode(&mut self, src: &[Vec<TokenId>]) -> Result<Memory, ModelError> {
        if let Some(s) = src.iter().find(|s| s.is_empty() || s.len() > self.cfg.max_src_len) {
            return Err(ModelError::Length {
                what: "source",
                len: s.len(),
                max: self.cfg.max_src_len,
            });
        }
        let (ids, len, valid) = pad_batch(src);
        let mut x = self.embed(&ids, len, self.index.enc_pos)?;
        let layers = self.index.enc.clone();
        for layer in &layers {
            let h = self.norm(x, layer.ln1)?;
            let layout = AttentionLayout {
                batch: src.len(),
                q_len: len,
                k_len: len,
                heads: self.cfg.num_heads,
                causal: false,
                key_valid: valid.clone(),
            };
            let a = self.attention(h, h, layer.attn, layout)?;
            let a = self.dropout(a);
            x = self.tape.add(x, a)?;
            let h = self.norm(x, layer.ln2)?;
            let f = self.ffn(h, layer.ffn)?;
            let f = self.dropout(f);
            x = self.tape.add(x, f)?;
        }
        let var = self.norm(x, self.index.enc_ln)?;
        Ok(Memory { var, len, valid })
    }

    /// Logits `[batch * len, vocab]` for right-padded decoder inputs.
    pub fn decode(&mut self, memory: &Memory, dec_in: &[Vec<TokenId>]) -> Result<(Var, usize), ModelError> {
        if let Some(s) = dec_in.iter().find(|s| s.is_empty() || s.len() > self.cfg.max_tgt_len) {
            return Err(ModelError::Length {
                what: "target",
                len: s.len(),
                max: self.cfg.max_tgt_len,
            });
        }
        let (ids, len, _) = pad_batch(dec_in);
        let mut y = self.embed(&ids, len, self.index.dec_pos)?;
        let layers = self.index.dec.clone();
        for layer in &layers {
            let h = self.norm(y, layer.ln1)?;
            let layout = AttentionLayout {
                batch: dec_in.len(),
                q_len: len,
                k_len: len,
                heads: self.cfg.num_heads,
                causal: true,
                key_valid: Vec::new(),
            };
            let a = self.attention(h, h, layer.self_attn, layout)?;
            let a = self.dropout(a);
            y = self.tape.add(y, a)?;
            let h = self.norm(y, layer.ln2)?;
            let layout = AttentionLayout {
                batch: dec_in.len(),
                q_len: len,
                k_len: memory.len,
                heads: self.cfg.num_heads,
                causal: false,
                key_valid: memory.valid.clone(),
            };
            let c = self.attention(h, memory.var, layer.cross_attn, layout)?;
            let c = self.dropout(c);
            y = self.tape.add(y, c)?;
            let h = self.norm(y, layer.ln3)?;
            let f = self.ffn(h, layer.ffn)?;
            let f = self.dropout(f);
            y = self.tape.add(y, f)?;
        }
        let y = self.norm(y, self.index.dec_ln)?;
        Ok((self.linear(y, self.index.out)?, len))
    }

    /// Memory rows for one source repeated `copies` times, as a fresh leaf.
    pub fn repeat_memory(&mut self, rows: &[T], len: usize, copies: usize) -> Result<Memory, ModelError> {
        let d = self.cfg.d_model;
        let mut data = Vec::with_capacity(rows.len() * copies);
        for _ in 0..copies {
            data.extend_from_slice(rows);
        }
        let var = self.tape.leaf(vec![copies * len, d], data)?;
        Ok(Memory {
            var,
            len,
            valid: Vec::new(),
        })
    }

    /// Teacher-forced mean token cross entropy; PAD targets are ignored.
    pub fn loss(&mut self, src: &[Vec<TokenId>], tgt: &[Vec<TokenId>]) -> Result<Var, ModelError> {
        if src.len() != tgt.len() || src.is_empty() {
            return Err(ModelError::Batch(format!(
                "{} sources for {} targets",
                src.len(),
                tgt.len()
            )));
        }
        let memory = self.encode(src)?;
        let dec_in: Vec<Vec<TokenId>> = tgt.iter().map(|t| teacher_forcing_input(t)).collect();
        let (logits, len) = self.decode(&memory, &dec_in)?;
        let mut targets = Vec::with_capacity(tgt.len() * len);
        for t in tgt {
            targets.extend(t.iter().map(|&x| (x != PAD).then_some(x as usize)));
            targets.extend(std::iter::repeat(None).take(len - t.len()));
        }
        Ok(self.tape.masked_cross_entropy(logits, &targets)?)
    }
}

/// `[BOS] + tgt[..len - 1]`.
pub fn teacher_forcing_input(tgt: &[TokenId]) -> Vec<TokenId> {
    let mut v = Vec::with_capacity(tgt.len());
    v.push(BOS);
    v.extend_from_slice(&tgt[..tgt.len().saturating_sub(1)]);
    v
}

/// Encoder-decoder parameter bundle.
#[derive(Clone, Debug)]
pub struct Seq2SeqModel {
    config: ModelConfig,
    params: ParamStore<f32>,
    index: ParamIndex,
    seed: u64,
}

impl Seq2SeqModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape, init) in parameter_layout(&config) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("positive std");
                    (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
                }
            };
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        let index = ParamIndex::resolve(&config, &params)?;
        Ok(Self {
            config,
            params,
            index,
            seed,
        })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore<f32>, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let index = ParamIndex::resolve(&config, &params)?;
        Ok(Self {
            config,
            params,
            index,
            seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub(crate) fn forward<'a>(&'a self, rng: Option<&'a mut ChaCha8Rng>) -> Forward<'a, f32> {
        Forward::new(&self.config, &self.params, &self.index, rng)
    }

    /// Logits `[tgt.len(), vocab]`; row `t` conditions on `src` and `tgt[..t]`.
    pub fn forward_teacher_forced(&self, src: &[TokenId], tgt: &[TokenId]) -> Result<Tensor<f32>, ModelError> {
        let mut fw = self.forward(None);
        let memory = fw.encode(&[src.to_vec()])?;
        let (logits, _) = fw.decode(&memory, &[teacher_forcing_input(tgt)])?;
        Ok(fw.tape.tensor(logits))
    }

    /// Mean token cross entropy of `tgt` given `src`, evaluation mode.
    pub fn seq2seq_loss(&self, src: &[TokenId], tgt: &[TokenId]) -> Result<f32, ModelError> {
        let mut fw = self.forward(None);
        let loss = fw.loss(&[src.to_vec()], &[tgt.to_vec()])?;
        Ok(fw.tape.value(loss)[0])
    }

    /// Mean loss over a batch; with `rng` dropout is active.
    pub fn batch_loss(
        &self,
        src: &[Vec<TokenId>],
        tgt: &[Vec<TokenId>],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<f32, ModelError> {
        let mut fw = self.forward(rng);
        let loss = fw.loss(src, tgt)?;
        Ok(fw.tape.value(loss)[0])
    }

    /// Forward and backward on one batch; gradients are added to the
    /// parameters. Returns the loss.
    pub fn accumulate_gradients(
        &mut self,
        src: &[Vec<TokenId>],
        tgt: &[Vec<TokenId>],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<f32, ModelError> {
        let mut fw = Forward::new(&self.config, &self.params, &self.index, rng);
        fw.bind_all();
        let loss = fw.loss(src, tgt)?;
        let value = fw.tape.value(loss)[0];
        fw.tape.backward(loss)?;
        let tape = fw.tape;
        self.params.accumulate_grads(&tape);
        Ok(value)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let meta = serde_json::json!({ "config": self.config, "seed": self.seed }).to_string();
        let w = BufWriter::new(File::create(path)?);
        write_checkpoint(w, &meta, &self.params)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let r = BufReader::new(File::open(path)?);
        let (meta, params) = read_checkpoint(r)?;
        #[derive(serde::Deserialize)]
        struct Meta {
            config: ModelConfig,
            seed: u64,
        }
        let meta: Meta =
            serde_json::from_str(&meta).map_err(|e| ModelError::Config(format!("checkpoint metadata: {e}")))?;
        Self::from_params(meta.config, params, meta.seed)
    }
}

/// Teacher-forced loss computed entirely in `T`, for gradient checking
/// against an externally perturbed parameter copy.
pub fn generic_loss<T: Scalar>(
    config: &ModelConfig,
    params: &ParamStore<T>,
    src: &[Vec<TokenId>],
    tgt: &[Vec<TokenId>],
) -> Result<(Tape<T>, Var), ModelError> {
    let index = ParamIndex::resolve(config, params)?;
    let mut fw = Forward::new(config, params, &index, None);
    fw.bind_all();
    let loss = fw.loss(src, tgt)?;
    Ok((fw.tape, loss))
}
