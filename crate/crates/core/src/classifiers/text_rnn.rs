use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    batch_loss_and_grad, Checkpoint, ClassifierSpec, Classifier, ModelPayload, ModelSnapshot, StepSettings,
};
use crate::error::{Error, Result};
use crate::nn::{
    affine, clip_scale, dropout_mask, matvec_add, matvec_t_add, outer_add, sigmoid, Optimizer, Param,
    ParamSet,
};
use crate::preprocess::{encode, CleanConfig, EmbeddingMatrix, EncodedSample, TokenVocabulary, PAD_INDEX};
use crate::corpus::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextRnnConfig {
    pub embedding_dim: usize,
    pub hidden_size: usize,
    pub dropout: f64,
    /// Stacked bidirectional layers.
    pub num_layers: usize,
    pub num_classes: usize,
    pub freeze_embeddings: bool,
}

impl Default for TextRnnConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 200,
            hidden_size: 128,
            dropout: 0.2,
            num_layers: 1,
            num_classes: 2,
            freeze_embeddings: false,
        }
    }
}

impl TextRnnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.hidden_size == 0 || self.embedding_dim == 0 || self.num_layers == 0 {
            return Err(Error::InvalidArgument(
                "hidden_size, embedding_dim and num_layers must be at least 1".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("num_classes must be at least 2".into()));
        }
        Ok(())
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embedding_dim
        } else {
            2 * self.hidden_size
        }
    }
}

const EMBEDDING: usize = 0;

fn layer_base(layer: usize) -> usize {
    1 + 6 * layer
}

/// One step of one direction, kept for backpropagation through time.
struct Step {
    pos: usize,
    /// Activated gates, `[i | f | g | o]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct DirTrace {
    steps: Vec<Step>,
    outputs: Vec<Vec<f64>>,
}

struct LayerTrace {
    inputs: Vec<Vec<f64>>,
    fwd: DirTrace,
    bwd: DirTrace,
}

struct SequenceTrace {
    tokens: Vec<usize>,
    layers: Vec<LayerTrace>,
    /// Dropped-out feature vector fed to the head.
    features: Vec<f64>,
    mask: Vec<f64>,
}

/// Bidirectional LSTM classifier over word embeddings.
///
/// The sequence summary is the top layer's forward state at the last real
/// token concatenated with its backward state at the first token; inputs
/// with no tokens use a zero summary. Padding positions are never read.
#[derive(Debug, Clone)]
pub struct TextRnn {
    spec: ClassifierSpec,
    config: TextRnnConfig,
    clean: CleanConfig,
    vocab: TokenVocabulary,
    params: ParamSet,
    optimizer: Option<Optimizer>,
    trained: bool,
}

impl TextRnn {
    pub fn new(
        config: TextRnnConfig,
        clean: CleanConfig,
        vocab: TokenVocabulary,
        embeddings: EmbeddingMatrix,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        clean.validate()?;
        if embeddings.rows != vocab.len() || embeddings.dim != config.embedding_dim {
            return Err(Error::InvalidArgument(format!(
                "embedding matrix is {}x{}, expected {}x{}",
                embeddings.rows,
                embeddings.dim,
                vocab.len(),
                config.embedding_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_size;
        let bound = 1.0 / (h as f64).sqrt();
        let mut params = vec![Param {
            value: embeddings.data,
            ..Param::zeros("embedding", &[vocab.len(), config.embedding_dim], false)
        }];
        for layer in 0..config.num_layers {
            let d = config.layer_input_dim(layer);
            for dir in ["fwd", "bwd"] {
                params.push(Param::uniform(&format!("l{layer}.{dir}.w_input"), &[4 * h, d], bound, true, &mut rng));
                params.push(Param::uniform(&format!("l{layer}.{dir}.w_hidden"), &[4 * h, h], bound, true, &mut rng));
                let mut bias = Param::uniform(&format!("l{layer}.{dir}.bias"), &[4 * h], bound, false, &mut rng);
                // forget-gate bias starts open
                bias.value[h..2 * h].iter_mut().for_each(|b| *b += 1.0);
                params.push(bias);
            }
        }
        let head_bound = 1.0 / ((2 * h) as f64).sqrt();
        params.push(Param::uniform("head.weight", &[config.num_classes, 2 * h], head_bound, true, &mut rng));
        params.push(Param::uniform("head.bias", &[config.num_classes], head_bound, false, &mut rng));
        Ok(Self {
            spec: ClassifierSpec::text_rnn(),
            config,
            clean,
            vocab,
            params: ParamSet::new(params),
            optimizer: None,
            trained: false,
        })
    }

    pub(crate) fn from_parts(
        spec: ClassifierSpec,
        config: TextRnnConfig,
        clean: CleanConfig,
        vocab: TokenVocabulary,
        params: &ParamSet,
    ) -> Result<Self> {
        let embeddings = EmbeddingMatrix {
            rows: vocab.len(),
            dim: config.embedding_dim,
            data: vec![0.0; vocab.len() * config.embedding_dim],
        };
        let mut model = Self::new(config, clean, vocab, embeddings, 0)?;
        model.params.load_from(params)?;
        model.spec = spec;
        model.trained = true;
        Ok(model)
    }

    pub fn config(&self) -> &TextRnnConfig {
        &self.config
    }

    pub fn clean_config(&self) -> &CleanConfig {
        &self.clean
    }

    pub fn vocabulary(&self) -> &TokenVocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn head_index(&self) -> usize {
        layer_base(self.config.num_layers)
    }

    pub fn encode_text(&self, text: &str) -> EncodedSample {
        encode(&Sample::unlabeled("", text), None, &self.vocab, &self.clean)
    }

    fn run_direction(&self, base: usize, inputs: &[Vec<f64>], reverse: bool) -> DirTrace {
        let h = self.config.hidden_size;
        let w_in = &self.params.params[base].value;
        let w_h = &self.params.params[base + 1].value;
        let bias = &self.params.params[base + 2].value;
        let t_len = inputs.len();
        let mut outputs = vec![Vec::new(); t_len];
        let mut steps = Vec::with_capacity(t_len);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..t_len).rev())
        } else {
            Box::new(0..t_len)
        };
        for pos in order {
            let mut z = bias.clone();
            matvec_add(w_in, &inputs[pos], &mut z);
            matvec_add(w_h, &h_prev, &mut z);
            let mut c = vec![0.0; h];
            let mut tanh_c = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = sigmoid(z[3 * h + j]);
                c[j] = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
                tanh_c[j] = c[j].tanh();
                h_new[j] = z[3 * h + j] * tanh_c[j];
            }
            outputs[pos] = h_new.clone();
            steps.push(Step {
                pos,
                gates: z,
                c_prev: std::mem::replace(&mut c_prev, c),
                h_prev: std::mem::replace(&mut h_prev, h_new),
                tanh_c,
            });
        }
        DirTrace { steps, outputs }
    }

    fn forward_trace(&self, tokens: &[usize]) -> (Vec<LayerTrace>, Vec<f64>) {
        let e = self.config.embedding_dim;
        let emb = &self.params.params[EMBEDDING].value;
        let mut inputs: Vec<Vec<f64>> = tokens.iter().map(|&t| emb[t * e..(t + 1) * e].to_vec()).collect();
        let mut layers = Vec::with_capacity(self.config.num_layers);
        for layer in 0..self.config.num_layers {
            let base = layer_base(layer);
            let fwd = self.run_direction(base, &inputs, false);
            let bwd = self.run_direction(base + 3, &inputs, true);
            let next: Vec<Vec<f64>> = fwd
                .outputs
                .iter()
                .zip(&bwd.outputs)
                .map(|(f, b)| [f.as_slice(), b.as_slice()].concat())
                .collect();
            layers.push(LayerTrace {
                inputs: std::mem::replace(&mut inputs, next),
                fwd,
                bwd,
            });
        }
        let h = self.config.hidden_size;
        let features = match layers.last() {
            Some(top) if !tokens.is_empty() => {
                let t_last = tokens.len() - 1;
                [top.fwd.outputs[t_last].as_slice(), top.bwd.outputs[0].as_slice()].concat()
            }
            _ => vec![0.0; 2 * h],
        };
        (layers, features)
    }

    fn head_logits(&self, features: &[f64]) -> Vec<f64> {
        let hi = self.head_index();
        let mut out = vec![0.0; self.config.num_classes];
        affine(&self.params.params[hi].value, &self.params.params[hi + 1].value, features, &mut out);
        out
    }

    /// Eval-mode logits for already-encoded inputs.
    pub fn forward_encoded(&self, batch: &[EncodedSample]) -> Vec<Vec<f64>> {
        batch
            .iter()
            .map(|s| {
                let (_, features) = self.forward_trace(s.tokens());
                self.head_logits(&features)
            })
            .collect()
    }

    fn backward_direction(
        &self,
        base: usize,
        trace: &DirTrace,
        inputs: &[Vec<f64>],
        d_out: &[Vec<f64>],
        grads: &mut [Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let h = self.config.hidden_size;
        let d_in = inputs.first().map_or(0, Vec::len);
        let w_in = &self.params.params[base].value;
        let w_h = &self.params.params[base + 1].value;
        let mut dx = vec![vec![0.0; d_in]; inputs.len()];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for step in trace.steps.iter().rev() {
            let g = &step.gates;
            for j in 0..h {
                let dh = d_out[step.pos][j] + dh_next[j];
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = step.tanh_c[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * step.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                dz[3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            outer_add(&mut grads[base], &dz, &inputs[step.pos]);
            outer_add(&mut grads[base + 1], &dz, &step.h_prev);
            grads[base + 2].iter_mut().zip(&dz).for_each(|(gb, d)| *gb += d);
            matvec_t_add(w_in, &dz, &mut dx[step.pos]);
            dh_next.fill(0.0);
            matvec_t_add(w_h, &dz, &mut dh_next);
        }
        dx
    }

    fn backward_sequence(&self, trace: &SequenceTrace, d_logits: &[f64], grads: &mut [Vec<f64>]) {
        let h = self.config.hidden_size;
        let hi = self.head_index();
        outer_add(&mut grads[hi], d_logits, &trace.features);
        grads[hi + 1].iter_mut().zip(d_logits).for_each(|(g, d)| *g += d);
        if trace.tokens.is_empty() {
            return;
        }
        let mut d_features = vec![0.0; 2 * h];
        matvec_t_add(&self.params.params[hi].value, d_logits, &mut d_features);
        d_features.iter_mut().zip(&trace.mask).for_each(|(d, m)| *d *= m);

        let t_len = trace.tokens.len();
        let mut d_fwd = vec![vec![0.0; h]; t_len];
        let mut d_bwd = vec![vec![0.0; h]; t_len];
        d_fwd[t_len - 1].copy_from_slice(&d_features[..h]);
        d_bwd[0].copy_from_slice(&d_features[h..]);
        for layer in (0..self.config.num_layers).rev() {
            let base = layer_base(layer);
            let lt = &trace.layers[layer];
            let dx_f = self.backward_direction(base, &lt.fwd, &lt.inputs, &d_fwd, grads);
            let dx_b = self.backward_direction(base + 3, &lt.bwd, &lt.inputs, &d_bwd, grads);
            let dx: Vec<Vec<f64>> = dx_f
                .into_iter()
                .zip(dx_b)
                .map(|(a, b)| a.iter().zip(&b).map(|(x, y)| x + y).collect())
                .collect();
            if layer == 0 {
                if !self.config.freeze_embeddings {
                    let e = self.config.embedding_dim;
                    for (&tok, d) in trace.tokens.iter().zip(&dx) {
                        if tok == PAD_INDEX {
                            continue;
                        }
                        grads[EMBEDDING][tok * e..(tok + 1) * e]
                            .iter_mut()
                            .zip(d)
                            .for_each(|(g, v)| *g += v);
                    }
                }
            } else {
                for (t, d) in dx.iter().enumerate() {
                    d_fwd[t].copy_from_slice(&d[..h]);
                    d_bwd[t].copy_from_slice(&d[h..]);
                }
            }
        }
    }

    /// Mean smoothed cross-entropy over the batch with gradients accumulated
    /// into the parameter set. Dropout applies when `rng` is given.
    pub fn loss_and_gradients(
        &mut self,
        batch: &[EncodedSample],
        targets: &[Vec<f64>],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> f64 {
        let traces: Vec<SequenceTrace> = batch
            .iter()
            .map(|s| {
                let tokens = s.tokens().to_vec();
                let (layers, mut features) = self.forward_trace(&tokens);
                let mask = match rng.as_deref_mut() {
                    Some(r) => dropout_mask(features.len(), self.config.dropout, r),
                    None => vec![1.0; features.len()],
                };
                features.iter_mut().zip(&mask).for_each(|(f, m)| *f *= m);
                SequenceTrace {
                    tokens,
                    layers,
                    features,
                    mask,
                }
            })
            .collect();
        let logits: Vec<Vec<f64>> = traces.iter().map(|t| self.head_logits(&t.features)).collect();
        let (loss, d_logits) = batch_loss_and_grad(&logits, targets);

        let mut grads: Vec<Vec<f64>> = self
            .params
            .params
            .iter_mut()
            .map(|p| std::mem::take(&mut p.grad))
            .collect();
        for (trace, d) in traces.iter().zip(&d_logits) {
            self.backward_sequence(trace, d, &mut grads);
        }
        for (p, g) in self.params.params.iter_mut().zip(grads) {
            p.grad = g;
        }
        loss
    }
}

impl Classifier for TextRnn {
    fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn mark_trained(&mut self) {
        self.trained = true;
    }

    fn logits(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let encoded: Vec<EncodedSample> = texts.iter().map(|t| self.encode_text(t)).collect();
        Ok(self.forward_encoded(&encoded))
    }

    fn train_batch(
        &mut self,
        texts: &[&str],
        targets: &[Vec<f64>],
        step: &StepSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let encoded: Vec<EncodedSample> = texts.iter().map(|t| self.encode_text(t)).collect();
        self.params.zero_grad();
        let loss = self.loss_and_gradients(&encoded, targets, Some(rng));
        let scale = clip_scale(self.params.grad_sq_norm(), step.clip_norm);
        let optimizer = self.optimizer.get_or_insert_with(|| Optimizer::new(step.optimizer));
        optimizer.step(&mut self.params, step.lr, scale);
        Ok(loss)
    }

    fn snapshot(&mut self) -> Result<ModelSnapshot> {
        Ok(ModelSnapshot {
            local: self.params.snapshot(),
            encoder: None,
        })
    }

    fn restore(&mut self, snapshot: &ModelSnapshot) -> Result<()> {
        self.params.restore(&snapshot.local)
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            self.spec.clone(),
            self.config.num_classes,
            self.clean,
            ModelPayload::TextRnn {
                config: self.config,
                vocabulary: self.vocab.clone(),
                params: self.params.clone(),
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, LabelVocabulary, SplitTag};
    use crate::preprocess::fit_vocabulary;

    fn tiny(hidden: usize, layers: usize, dropout: f64) -> TextRnn {
        let texts = ["a b c d", "e f g h", "a c e g"];
        let samples = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Sample::labeled(i.to_string(), *t, "real"))
            .collect();
        let corpus = Corpus::new(samples, LabelVocabulary::default(), SplitTag::Train).unwrap();
        let clean = CleanConfig {
            max_length: 6,
            ..CleanConfig::default()
        };
        let vocab = fit_vocabulary(&corpus, &clean, 1);
        let config = TextRnnConfig {
            embedding_dim: 5,
            hidden_size: hidden,
            dropout,
            num_layers: layers,
            ..TextRnnConfig::default()
        };
        let emb = EmbeddingMatrix::random(&vocab, 5, 3);
        TextRnn::new(config, clean, vocab, emb, 9).unwrap()
    }

    #[test]
    fn logits_shape() {
        let m = tiny(4, 1, 0.2);
        let out = m.logits(&["a b", "c", "h g f e d c b a"]).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|l| l.len() == 2));
    }

    #[test]
    fn degenerate_input_yields_head_bias() {
        let m = tiny(4, 1, 0.2);
        let out = m.logits(&["https://t.co/x"]).unwrap();
        let bias = &m.params.params[m.head_index() + 1].value;
        assert_eq!(&out[0], bias);
    }

    #[test]
    fn batch_order_permutes_outputs() {
        let m = tiny(4, 2, 0.0);
        let a = m.logits(&["a b c", "d e", "f"]).unwrap();
        let b = m.logits(&["f", "a b c", "d e"]).unwrap();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[2]);
        assert_eq!(a[2], b[0]);
    }

    #[test]
    fn truncation_invariance() {
        let m = tiny(4, 1, 0.0);
        let a = m.logits(&["a b c d e f g"]).unwrap();
        let b = m.logits(&["a b c d e f h a b"]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_tokens_share_a_row() {
        let m = tiny(3, 1, 0.0);
        let a = m.logits(&["zzz qqq"]).unwrap();
        let b = m.logits(&["yyy xxx"]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_mismatched_embeddings() {
        let m = tiny(3, 1, 0.0);
        let vocab = m.vocab.clone();
        let emb = EmbeddingMatrix::random(&vocab, 7, 0);
        let err = TextRnn::new(TextRnnConfig::default(), CleanConfig::default(), vocab, emb, 0);
        assert!(err.is_err());
    }
}
