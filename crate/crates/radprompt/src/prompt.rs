//! The trainable core: learnable context tokens, the radiomics-conditioned
//! MetaNet, instance-conditioned prompt assembly, cosine-softmax
//! classification, and analytic gradients for the trainable parameters only
//! (encoder and class tokens stay frozen).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderCache, FrozenTextEncoder};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_TAU: f64 = 0.07;
pub const DEFAULT_CONTEXT_TOKENS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptHeadParams {
    /// M context tokens, each of dim d_t.
    pub context: Vec<Vec<f64>>,
    /// MetaNet: W2 relu(W1 r + b1) + b2, bottleneck hidden layer.
    pub w1: Vec<f64>, // hidden x n_r
    pub b1: Vec<f64>,
    pub w2: Vec<f64>, // d_t x hidden
    pub b2: Vec<f64>,
    pub n_r: usize,
    pub hidden: usize,
    pub d_t: usize,
    pub m: usize,
    pub tau: f64,
}

/// Bottleneck width: n_r / 16 rounded up.
pub fn default_hidden(n_r: usize) -> usize {
    n_r.div_ceil(16).max(1)
}

impl PromptHeadParams {
    pub fn init(seed: u64, n_r: usize, d_t: usize, m: usize, hidden: usize, tau: f64) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidArgument("M must be >= 1".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau {tau} not positive")));
        }
        let mut ctx_rng = SplitMix64::derive(seed, 10);
        let context = (0..m)
            .map(|_| (0..d_t).map(|_| ctx_rng.next_gaussian() * 0.02).collect())
            .collect();
        let mut net_rng = SplitMix64::derive(seed, 11);
        let w1 = (0..hidden * n_r)
            .map(|_| net_rng.next_gaussian() / (n_r as f64).sqrt())
            .collect();
        let w2 = (0..d_t * hidden)
            .map(|_| net_rng.next_gaussian() / (hidden as f64).sqrt())
            .collect();
        Ok(PromptHeadParams {
            context,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; d_t],
            n_r,
            hidden,
            d_t,
            m,
            tau,
        })
    }

    pub fn zeroed_metanet(mut self) -> Self {
        self.w1.iter_mut().for_each(|v| *v = 0.0);
        self.b1.iter_mut().for_each(|v| *v = 0.0);
        self.w2.iter_mut().for_each(|v| *v = 0.0);
        self.b2.iter_mut().for_each(|v| *v = 0.0);
        self
    }
}

pub struct MetaNetCache {
    pub pre_relu: Vec<f64>,
    pub post_relu: Vec<f64>,
    pub delta: Vec<f64>,
}

/// delta = W2 relu(W1 r + b1) + b2.
pub fn metanet_forward(params: &PromptHeadParams, r: &[f64]) -> Result<MetaNetCache> {
    if r.len() != params.n_r {
        return Err(Error::DimMismatch(format!(
            "radiomics dim {} != N_r {}",
            r.len(),
            params.n_r
        )));
    }
    let pre_relu: Vec<f64> = (0..params.hidden)
        .map(|i| {
            let mut acc = params.b1[i];
            for j in 0..params.n_r {
                acc += params.w1[i * params.n_r + j] * r[j];
            }
            acc
        })
        .collect();
    let post_relu: Vec<f64> = pre_relu.iter().map(|&z| z.max(0.0)).collect();
    let delta: Vec<f64> = (0..params.d_t)
        .map(|i| {
            let mut acc = params.b2[i];
            for j in 0..params.hidden {
                acc += params.w2[i * params.hidden + j] * post_relu[j];
            }
            acc
        })
        .collect();
    Ok(MetaNetCache {
        pre_relu,
        post_relu,
        delta,
    })
}

/// Tokens 1..M are v_m + delta; token M+1 is the class token, unshifted.
pub fn assemble_prompt(params: &PromptHeadParams, delta: &[f64], class_token: &[f64]) -> Result<Vec<Vec<f64>>> {
    if delta.len() != params.d_t || class_token.len() != params.d_t {
        return Err(Error::DimMismatch(format!(
            "delta/class token dim != d_t {}",
            params.d_t
        )));
    }
    let mut tokens = Vec::with_capacity(params.m + 1);
    for v in &params.context {
        tokens.push(v.iter().zip(delta).map(|(a, b)| a + b).collect());
    }
    tokens.push(class_token.to_vec());
    Ok(tokens)
}

#[derive(Debug, Clone)]
pub struct PromptOutput {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

struct ClassifyCache {
    metanet: MetaNetCache,
    encoder_caches: Vec<EncoderCache>,
    similarities: Vec<f64>,
    probabilities: Vec<f64>,
    x_norm: f64,
}

fn cosine(x: &[f64], e: &[f64]) -> Result<(f64, f64, f64)> {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ne = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ne == 0.0 {
        return Err(Error::InvalidArgument("cosine undefined for zero-norm vector".into()));
    }
    let dot: f64 = x.iter().zip(e).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ne), nx, ne))
}

fn softmax(scaled: &[f64]) -> Vec<f64> {
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn classify_cached(
    params: &PromptHeadParams,
    x: &[f64],
    encoder: &FrozenTextEncoder,
    class_tokens: &[Vec<f64>],
    r: &[f64],
) -> Result<ClassifyCache> {
    let metanet = metanet_forward(params, r)?;
    let mut encoder_caches = Vec::with_capacity(class_tokens.len());
    let mut similarities = Vec::with_capacity(class_tokens.len());
    let mut x_norm = 0.0;
    for c in class_tokens {
        let tokens = assemble_prompt(params, &metanet.delta, c)?;
        let cache = encoder.encode_with_cache(&tokens)?;
        let (sim, nx, _) = cosine(x, &cache.output)?;
        x_norm = nx;
        similarities.push(sim);
        encoder_caches.push(cache);
    }
    let scaled: Vec<f64> = similarities.iter().map(|&s| s / params.tau).collect();
    let probabilities = softmax(&scaled);
    Ok(ClassifyCache {
        metanet,
        encoder_caches,
        similarities,
        probabilities,
        x_norm,
    })
}

/// Eq-style prediction: p(i|x) = softmax_i(cos(x, g(t_i(x))) / tau).
pub fn classify(
    params: &PromptHeadParams,
    x: &[f64],
    encoder: &FrozenTextEncoder,
    class_tokens: &[Vec<f64>],
    r: &[f64],
) -> Result<PromptOutput> {
    let cache = classify_cached(params, x, encoder, class_tokens, r)?;
    Ok(PromptOutput {
        logits: cache.similarities.iter().map(|&s| s / params.tau).collect(),
        probabilities: cache.probabilities,
    })
}

/// Gradients for the trainable parameter groups only.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub context: Vec<Vec<f64>>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros(params: &PromptHeadParams) -> Self {
        Gradients {
            context: vec![vec![0.0; params.d_t]; params.m],
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: vec![0.0; params.b2.len()],
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        let groups: [(&str, &dyn Fn() -> bool); 5] = [
            ("context", &|| self.context.iter().flatten().all(|v| v.is_finite())),
            ("metanet.w1", &|| self.w1.iter().all(|v| v.is_finite())),
            ("metanet.b1", &|| self.b1.iter().all(|v| v.is_finite())),
            ("metanet.w2", &|| self.w2.iter().all(|v| v.is_finite())),
            ("metanet.b2", &|| self.b2.iter().all(|v| v.is_finite())),
        ];
        for (name, ok) in groups {
            if !ok() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        Ok(())
    }
}

pub struct BatchInstance<'a> {
    pub image_embedding: &'a [f64],
    pub radiomics: &'a [f64],
    /// Class index in [0, N_c).
    pub label: usize,
}

/// Mean cross-entropy over the batch with analytic gradients for the context
/// tokens and MetaNet. Accumulation order is the batch order (fixed), so runs
/// are bit-reproducible.
pub fn loss_and_grads(
    params: &PromptHeadParams,
    encoder: &FrozenTextEncoder,
    class_tokens: &[Vec<f64>],
    batch: &[BatchInstance<'_>],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    let n_c = class_tokens.len();
    let mut grads = Gradients::zeros(params);
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    let n_tokens = (params.m + 1) as f64;

    for inst in batch {
        if inst.label >= n_c {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range for {n_c} classes",
                inst.label
            )));
        }
        let cache = classify_cached(params, inst.image_embedding, encoder, class_tokens, inst.radiomics)?;
        let p_y = cache.probabilities[inst.label].max(f64::MIN_POSITIVE);
        loss -= scale * p_y.ln();

        // d loss / d similarity_i = (p_i - 1{i=y}) / tau, then through the
        // cosine and frozen encoder into the pooled token mean.
        let mut d_sum_pooled = vec![0.0; params.d_t];
        for i in 0..n_c {
            let mut ds = cache.probabilities[i] / params.tau;
            if i == inst.label {
                ds -= 1.0 / params.tau;
            }
            ds *= scale;
            if ds == 0.0 {
                continue;
            }
            let e = &cache.encoder_caches[i].output;
            let ne = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            let sim = cache.similarities[i];
            // d cos / d e = x / (|x||e|) - cos * e / |e|^2
            let d_e: Vec<f64> = (0..e.len())
                .map(|k| {
                    ds * (inst.image_embedding[k] / (cache.x_norm * ne) - sim * e[k] / (ne * ne))
                })
                .collect();
            let d_pooled = encoder.backward_to_pooled(&cache.encoder_caches[i], &d_e);
            for (acc, v) in d_sum_pooled.iter_mut().zip(&d_pooled) {
                *acc += v;
            }
        }

        // pooled mean = (sum_m (v_m + delta) + c_i) / (M+1):
        // d/d v_m = 1/(M+1), d/d delta = M/(M+1)
        for ctx_grad in grads.context.iter_mut() {
            for (g, d) in ctx_grad.iter_mut().zip(&d_sum_pooled) {
                *g += d / n_tokens;
            }
        }
        let d_delta: Vec<f64> = d_sum_pooled
            .iter()
            .map(|d| d * params.m as f64 / n_tokens)
            .collect();

        // MetaNet backprop
        let mn = &cache.metanet;
        for i in 0..params.d_t {
            grads.b2[i] += d_delta[i];
            for j in 0..params.hidden {
                grads.w2[i * params.hidden + j] += d_delta[i] * mn.post_relu[j];
            }
        }
        for j in 0..params.hidden {
            if mn.pre_relu[j] <= 0.0 {
                continue;
            }
            let mut da = 0.0;
            for i in 0..params.d_t {
                da += params.w2[i * params.hidden + j] * d_delta[i];
            }
            grads.b1[j] += da;
            for k in 0..params.n_r {
                grads.w1[j * params.n_r + k] += da * inst.radiomics[k];
            }
        }
    }

    grads.check_finite()?;
    Ok((loss, grads))
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    n_r: usize,
    hidden: usize,
    d_t: usize,
    m: usize,
    tau: f64,
    seed: u64,
    /// Ordered array layout in the raw f64 file.
    arrays: Vec<(String, usize)>,
    data: String,
}

/// Checkpoint: JSON header next to a raw little-endian f64 file holding
/// context, w1, b1, w2, b2 and the normalization statistics in order.
pub fn save_checkpoint(
    params: &PromptHeadParams,
    norm_mean: &[f64],
    norm_std: &[f64],
    seed: u64,
    path: &Path,
) -> Result<()> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let raw_rel = format!("{stem}.f64");
    let arrays = vec![
        ("context".to_string(), params.m * params.d_t),
        ("w1".to_string(), params.w1.len()),
        ("b1".to_string(), params.b1.len()),
        ("w2".to_string(), params.w2.len()),
        ("b2".to_string(), params.b2.len()),
        ("norm_mean".to_string(), norm_mean.len()),
        ("norm_std".to_string(), norm_std.len()),
    ];
    let header = CheckpointHeader {
        n_r: params.n_r,
        hidden: params.hidden,
        d_t: params.d_t,
        m: params.m,
        tau: params.tau,
        seed,
        arrays,
        data: raw_rel.clone(),
    };
    crate::volume::write_json(path, &header)?;
    let mut bytes = Vec::new();
    let flat = params
        .context
        .iter()
        .flatten()
        .chain(params.w1.iter())
        .chain(params.b1.iter())
        .chain(params.w2.iter())
        .chain(params.b2.iter())
        .chain(norm_mean.iter())
        .chain(norm_std.iter());
    for v in flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let base = path.parent().unwrap_or(Path::new("."));
    crate::volume::write_bytes(&base.join(raw_rel), &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<(PromptHeadParams, Vec<f64>, Vec<f64>, u64)> {
    let header: CheckpointHeader = crate::volume::read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let raw = crate::volume::read_bytes(&base.join(&header.data))?;
    let expected: usize = header.arrays.iter().map(|(_, n)| n).sum();
    if raw.len() != expected * 8 {
        return Err(Error::LengthMismatch {
            expected,
            actual: raw.len() / 8,
        });
    }
    let mut values = raw.chunks_exact(8).map(|c| {
        f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
    });
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let flat_ctx = take(header.m * header.d_t);
    let context = flat_ctx.chunks(header.d_t).map(|c| c.to_vec()).collect();
    let w1 = take(header.hidden * header.n_r);
    let b1 = take(header.hidden);
    let w2 = take(header.d_t * header.hidden);
    let b2 = take(header.d_t);
    let norm_mean = take(header.n_r);
    let norm_std = take(header.n_r);
    let params = PromptHeadParams {
        context,
        w1,
        b1,
        w2,
        b2,
        n_r: header.n_r,
        hidden: header.hidden,
        d_t: header.d_t,
        m: header.m,
        tau: header.tau,
    };
    Ok((params, norm_mean, norm_std, header.seed))
}
