use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::AttentionTrace;
use super::vocab::{BOS, EOS};
use crate::chunker::ChunkSequence;
use crate::error::{config_err, Result};
use crate::nn::{self, accumulate, dropout_mask, xent_loss, Embedding, Linear, LstmParams, LstmState, LstmTrace, ParamStore, Tensor2};
use crate::observation::ObservationSequence;

/// The four encoder-decoder configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Raw observation vectors, no attention.
    Vanilla,
    /// BPE chunk tokens, no attention.
    Explicit,
    /// Raw observation vectors with attention.
    Implicit,
    /// BPE chunk tokens with attention.
    Hybrid,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Vanilla, Variant::Explicit, Variant::Implicit, Variant::Hybrid];

    pub fn uses_chunks(self) -> bool {
        matches!(self, Variant::Explicit | Variant::Hybrid)
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Variant::Implicit | Variant::Hybrid)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Explicit => "explicit",
            Variant::Implicit => "implicit",
            Variant::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| config_err!("unknown variant {s:?}"))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Borrowed encoder input.
#[derive(Clone, Copy, Debug)]
pub enum EncoderInput<'a> {
    Raw(&'a ObservationSequence),
    Chunks(&'a ChunkSequence),
}

impl EncoderInput<'_> {
    pub fn len(&self) -> usize {
        match self {
            EncoderInput::Raw(s) => s.len(),
            EncoderInput::Chunks(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Owned encoder input.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelInput {
    Raw(ObservationSequence),
    Chunks(ChunkSequence),
}

impl ModelInput {
    pub fn as_input(&self) -> EncoderInput<'_> {
        match self {
            ModelInput::Raw(s) => EncoderInput::Raw(s),
            ModelInput::Chunks(c) => EncoderInput::Chunks(c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub variant: Variant,
    /// Width of raw observation vectors (raw variants).
    pub input_dim: usize,
    /// Number of chunk tokens (chunk variants).
    pub chunk_vocab: usize,
    pub hidden: usize,
    pub caption_vocab: usize,
}

#[derive(Clone, Debug)]
struct AttentionLayer {
    w_a: nn::ParamId,
    combine: Linear,
}

/// Encoder-decoder captioner.
///
/// Raw-vector variants project each observation to the hidden width before
/// the encoder LSTM; chunk variants look tokens up in an embedding table.
/// The decoder starts from the encoder's final state. With attention the
/// output layer sees `tanh(W_c [context; h_d] + b_c)`, otherwise `h_d`.
#[derive(Clone, Debug)]
pub struct Seq2SeqModel {
    dims: ModelDims,
    store: ParamStore,
    input_proj: Option<Linear>,
    chunk_embed: Option<Embedding>,
    encoder: LstmParams,
    word_embed: Embedding,
    decoder: LstmParams,
    attention: Option<AttentionLayer>,
    output: Linear,
}

enum EncodedSource {
    Raw(Array2<f64>),
    Tokens(Vec<usize>),
}

/// Encoder states plus what the backward pass needs.
pub struct EncoderOutput {
    source: EncodedSource,
    trace: LstmTrace,
}

impl EncoderOutput {
    /// One hidden state per input step, `steps x hidden`.
    pub fn states(&self) -> ArrayView2<'_, f64> {
        self.trace.hiddens()
    }

    pub fn len(&self) -> usize {
        self.trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_empty()
    }

    pub fn final_state(&self) -> LstmState {
        self.trace.final_state()
    }
}

struct AttentionPass {
    /// `H_d W_a^T`, one row per decoder step.
    projected: Array2<f64>,
    weights: Array2<f64>,
    combined_in: Array2<f64>,
}

struct DecoderPass {
    inputs: Vec<usize>,
    targets: Vec<usize>,
    lstm: LstmTrace,
    attention: Option<AttentionPass>,
    features: Array2<f64>,
    mask: Option<Array2<f64>>,
    dropped: Array2<f64>,
    probs: Array2<f64>,
    loss_sum: f64,
}

impl Seq2SeqModel {
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.hidden == 0 || dims.caption_vocab <= EOS {
            return Err(config_err!("model needs hidden > 0 and a caption vocabulary with specials"));
        }
        if dims.variant.uses_chunks() && dims.chunk_vocab == 0 {
            return Err(config_err!("{} variant needs a chunk vocabulary", dims.variant));
        }
        if !dims.variant.uses_chunks() && dims.input_dim == 0 {
            return Err(config_err!("{} variant needs an input dimension", dims.variant));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = dims.hidden;
        let (input_proj, chunk_embed) = if dims.variant.uses_chunks() {
            (None, Some(Embedding::new(&mut store, "encoder.chunk_embed", dims.chunk_vocab, h, &mut rng)))
        } else {
            (Some(Linear::new(&mut store, "encoder.input_proj", dims.input_dim, h, &mut rng)), None)
        };
        let encoder = LstmParams::new(&mut store, "encoder.lstm", h, h, &mut rng);
        let word_embed = Embedding::new(&mut store, "decoder.word_embed", dims.caption_vocab, h, &mut rng);
        let decoder = LstmParams::new(&mut store, "decoder.lstm", h, h, &mut rng);
        let attention = dims.variant.uses_attention().then(|| AttentionLayer {
            w_a: store.add(
                "attention.w_a",
                Tensor2::uniform(h, h, 1.0 / (h as f64).sqrt(), &mut rng),
            ),
            combine: Linear::new(&mut store, "attention.combine", 2 * h, h, &mut rng),
        });
        let output = Linear::new(&mut store, "output", h, dims.caption_vocab, &mut rng);
        Ok(Seq2SeqModel {
            dims,
            store,
            input_proj,
            chunk_embed,
            encoder,
            word_embed,
            decoder,
            attention,
            output,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn variant(&self) -> Variant {
        self.dims.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn has_attention(&self) -> bool {
        self.attention.is_some()
    }

    pub fn has_chunk_embedding(&self) -> bool {
        self.chunk_embed.is_some()
    }

    /// Rows of the output projection.
    pub fn output_rows(&self) -> usize {
        self.store.value(self.output.weight).rows()
    }

    /// Runs the encoder over every input step.
    pub fn encode(&self, input: EncoderInput<'_>) -> Result<EncoderOutput> {
        if input.is_empty() {
            return Err(config_err!("encoder input must have at least one step"));
        }
        let (source, embedded) = match (input, &self.input_proj, &self.chunk_embed) {
            (EncoderInput::Raw(seq), Some(proj), None) => {
                if seq.dim() != self.dims.input_dim {
                    return Err(config_err!(
                        "observation dim {} does not match model input dim {}",
                        seq.dim(),
                        self.dims.input_dim
                    ));
                }
                let x = seq.view().to_owned();
                let u = proj.forward(&self.store, x.view());
                (EncodedSource::Raw(x), u)
            }
            (EncoderInput::Chunks(chunks), None, Some(embed)) => {
                if let Some(bad) = chunks.0.iter().find(|&&t| t >= embed.rows()) {
                    return Err(config_err!("chunk token {bad} outside vocabulary of {}", embed.rows()));
                }
                let u = embed.lookup(&self.store, &chunks.0);
                (EncodedSource::Tokens(chunks.0.clone()), u)
            }
            (EncoderInput::Raw(_), ..) => {
                return Err(config_err!("{} variant consumes chunk sequences, got raw observations", self.dims.variant))
            }
            (EncoderInput::Chunks(_), ..) => {
                return Err(config_err!("{} variant consumes raw observations, got chunk tokens", self.dims.variant))
            }
        };
        let trace = self
            .encoder
            .forward(&self.store, embedded.view(), &LstmState::zeros(self.dims.hidden))?;
        Ok(EncoderOutput { source, trace })
    }

    fn check_gold(&self, gold: &[usize]) -> Result<()> {
        if gold.is_empty() || *gold.last().unwrap() != EOS {
            return Err(config_err!("gold caption must be non-empty and end with <eos>"));
        }
        if let Some(bad) = gold.iter().find(|&&t| t >= self.dims.caption_vocab) {
            return Err(config_err!("caption token {bad} outside vocabulary of {}", self.dims.caption_vocab));
        }
        Ok(())
    }

    fn decoder_forward(&self, enc: &EncoderOutput, gold: &[usize], mask: Option<Array2<f64>>) -> Result<DecoderPass> {
        self.check_gold(gold)?;
        let n = gold.len();
        let inputs: Vec<usize> = std::iter::once(BOS).chain(gold[..n - 1].iter().copied()).collect();
        let embedded = self.word_embed.lookup(&self.store, &inputs);
        let lstm = self.decoder.forward(&self.store, embedded.view(), &enc.final_state())?;
        let h_d = lstm.hiddens();

        let (attention, features) = match &self.attention {
            Some(layer) => {
                let states = enc.states();
                let projected = h_d.dot(&self.store.value(layer.w_a).view().t());
                let mut weights = projected.dot(&states.t());
                for row in weights.rows_mut() {
                    nn::softmax_inplace(row);
                }
                let context = weights.dot(&states);
                let mut combined_in = Array2::zeros((n, 2 * self.dims.hidden));
                combined_in.slice_mut(s![.., ..self.dims.hidden]).assign(&context);
                combined_in.slice_mut(s![.., self.dims.hidden..]).assign(&h_d);
                let features = layer.combine.forward(&self.store, combined_in.view()).mapv_into(f64::tanh);
                (
                    Some(AttentionPass {
                        projected,
                        weights,
                        combined_in,
                    }),
                    features,
                )
            }
            None => (None, h_d.to_owned()),
        };
        let dropped = match &mask {
            Some(m) => &features * m,
            None => features.clone(),
        };
        let mut probs = self.output.forward(&self.store, dropped.view());
        let mut loss_sum = 0.0;
        for (j, mut row) in probs.rows_mut().into_iter().enumerate() {
            loss_sum += xent_loss(row.view(), gold[j]);
            nn::softmax_inplace(row.view_mut());
        }
        Ok(DecoderPass {
            inputs,
            targets: gold.to_vec(),
            lstm,
            attention,
            features,
            mask,
            dropped,
            probs,
            loss_sum,
        })
    }

    /// Gradient of `scale * loss_sum` w.r.t. the decoder's parameters;
    /// returns the gradients w.r.t. encoder states and final state.
    fn decoder_backward(&mut self, enc: &EncoderOutput, pass: &DecoderPass, scale: f64) -> (Array2<f64>, LstmState) {
        let h = self.dims.hidden;
        let mut d_logits = pass.probs.clone();
        for (j, &t) in pass.targets.iter().enumerate() {
            d_logits[[j, t]] -= 1.0;
        }
        d_logits *= scale;
        let mut d_features = self.output.backward(&mut self.store, pass.dropped.view(), d_logits.view());
        if let Some(m) = &pass.mask {
            d_features *= m;
        }

        let states = enc.states();
        let mut d_states = Array2::<f64>::zeros(states.raw_dim());
        let d_hd = match (&self.attention, &pass.attention) {
            (Some(layer), Some(attn)) => {
                let d_pre = d_features * &pass.features.mapv(|q| 1.0 - q * q);
                let d_combined = layer.combine.backward(&mut self.store, attn.combined_in.view(), d_pre.view());
                let d_ctx = d_combined.slice(s![.., ..h]);
                let mut d_hd = d_combined.slice(s![.., h..]).to_owned();

                d_states += &attn.weights.t().dot(&d_ctx);
                let d_weights = d_ctx.dot(&states.t());
                let dot = (&d_weights * &attn.weights).sum_axis(Axis(1)).insert_axis(Axis(1));
                let d_scores = &attn.weights * &(d_weights - &dot);
                let d_projected = d_scores.dot(&states);
                d_states += &d_scores.t().dot(&attn.projected);
                let w_a = self.store.value(layer.w_a).view().to_owned();
                {
                    let mut g = self.store.grad_mut(layer.w_a).view_mut();
                    g += &d_projected.t().dot(&pass.lstm.hiddens());
                }
                d_hd += &d_projected.dot(&w_a);
                d_hd
            }
            _ => d_features,
        };
        let zero = LstmState::zeros(h);
        let (d_embedded, d_init) = self.decoder.backward(&mut self.store, &pass.lstm, d_hd.view(), &zero);
        self.word_embed.backward(&mut self.store, &pass.inputs, d_embedded.view());
        (d_states, d_init)
    }

    fn encoder_backward(&mut self, enc: &EncoderOutput, d_states: ArrayView2<'_, f64>, d_final: &LstmState) {
        let (d_embedded, _) = self.encoder.backward(&mut self.store, &enc.trace, d_states, d_final);
        match (&enc.source, &self.input_proj, &self.chunk_embed) {
            (EncodedSource::Raw(x), Some(proj), _) => {
                proj.backward(&mut self.store, x.view(), d_embedded.view());
            }
            (EncodedSource::Tokens(ids), _, Some(embed)) => {
                embed.backward(&mut self.store, ids, d_embedded.view());
            }
            _ => unreachable!("encode checked the input kind"),
        }
    }

    /// Teacher-forced mean token cross-entropy of one caption, no gradient.
    /// With `dropout = Some((rate, rng))` the output features are dropped as
    /// in training.
    pub fn decode_train<R: Rng>(&self, enc: &EncoderOutput, gold: &[usize], dropout: Option<(f64, &mut R)>) -> Result<f64> {
        let mask = self.make_mask(gold.len(), dropout)?;
        let pass = self.decoder_forward(enc, gold, mask)?;
        Ok(pass.loss_sum / gold.len() as f64)
    }

    fn make_mask<R: Rng>(&self, steps: usize, dropout: Option<(f64, &mut R)>) -> Result<Option<Array2<f64>>> {
        match dropout {
            Some((rate, rng)) => Ok(dropout_mask(steps * self.dims.hidden, rate, rng, true)?
                .map(|m| Array2::from_shape_vec((steps, self.dims.hidden), m).expect("mask shape"))),
            None => Ok(None),
        }
    }

    /// Summed token cross-entropy of `gold` and its token count, no gradient.
    pub fn caption_loss(&self, enc: &EncoderOutput, gold: &[usize]) -> Result<(f64, usize)> {
        let pass = self.decoder_forward(enc, gold, None)?;
        Ok((pass.loss_sum, gold.len()))
    }

    /// Mean token cross-entropy over every `(input, caption)` pair in
    /// `batch`, accumulating its gradient into the parameter store.
    ///
    /// Each input is encoded once and shared by its captions.
    pub fn accumulate_batch<R: Rng>(
        &mut self,
        batch: &[(EncoderInput<'_>, Vec<&[usize]>)],
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let total_tokens: usize = batch.iter().flat_map(|(_, caps)| caps.iter().map(|c| c.len())).sum();
        if total_tokens == 0 {
            return Err(config_err!("batch has no caption tokens"));
        }
        let scale = 1.0 / total_tokens as f64;
        let mut loss = 0.0;
        for (input, captions) in batch {
            let enc = self.encode(*input)?;
            let mut d_states = Array2::<f64>::zeros(enc.states().raw_dim());
            let mut d_final = LstmState::zeros(self.dims.hidden);
            for gold in captions {
                let mask = if dropout_rate > 0.0 {
                    self.make_mask(gold.len(), Some((dropout_rate, &mut *rng)))?
                } else {
                    None
                };
                let pass = self.decoder_forward(&enc, gold, mask)?;
                loss += pass.loss_sum;
                let (ds, df) = self.decoder_backward(&enc, &pass, scale);
                d_states += &ds;
                accumulate(&mut d_final, &df);
            }
            self.encoder_backward(&enc, d_states.view(), &d_final);
        }
        Ok(loss * scale)
    }

    fn output_features(&self, enc: &EncoderOutput, h_d: ArrayView1<'_, f64>) -> (Array1<f64>, Option<Vec<f64>>) {
        match &self.attention {
            Some(layer) => {
                let (context, weights) = super::attention::attend(enc.states(), h_d, self.store.value(layer.w_a).view());
                let mut combined = Array2::zeros((1, 2 * self.dims.hidden));
                combined.slice_mut(s![0, ..self.dims.hidden]).assign(&context);
                combined.slice_mut(s![0, self.dims.hidden..]).assign(&h_d);
                let q = layer.combine.forward(&self.store, combined.view()).mapv_into(f64::tanh);
                (q.row(0).to_owned(), Some(weights.to_vec()))
            }
            None => (h_d.to_owned(), None),
        }
    }

    /// Greedy decoding: feeds back the arg-max token until `<eos>` or
    /// `max_len` tokens. `<bos>` is never emitted and `<eos>` is not part of
    /// the returned ids.
    pub fn decode_greedy(&self, enc: &EncoderOutput, max_len: usize) -> (Vec<usize>, Option<AttentionTrace>) {
        let mut out = Vec::new();
        let mut rows = Vec::new();
        let mut state = enc.final_state();
        let mut token = BOS;
        let w_o = self.store.value(self.output.weight).view();
        let b_o = self.store.value(self.output.bias).flat();
        for _ in 0..max_len {
            let x = self.store.value(self.word_embed.table).row(token).to_vec();
            state = self.decoder.step(&self.store, &x, &state).expect("decoder dims");
            let (features, weights) = self.output_features(enc, ArrayView1::from(&state.hidden[..]));
            rows.extend(weights);
            let logits = w_o.dot(&features) + b_o;
            let next = logits
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != BOS)
                .fold((EOS, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0;
            if next == EOS {
                break;
            }
            out.push(next);
            token = next;
        }
        let trace = self.attention.as_ref().map(|_| AttentionTrace { weights: rows });
        (out, trace)
    }

    /// `(name, tensor)` pairs for checkpointing.
    pub fn named_tensors(&self) -> Vec<(String, Tensor2)> {
        self.store
            .named_values()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect()
    }

    pub fn load_tensors(&mut self, tensors: &[(String, Tensor2)]) -> Result<()> {
        self.store.load_values(tensors.iter().map(|(n, t)| (n.as_str(), t)))
    }
}
