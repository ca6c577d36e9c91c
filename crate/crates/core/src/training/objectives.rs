//! Discriminator and generator objectives for fixed noise draws.
//!
//! Each objective is a deterministic function of the parameters once the
//! noise is drawn, so gradients can be checked against finite differences.

use crate::data::MultimodalBatch;
use crate::diffnet::{ForwardCache, Mlp, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::gaussians::{LOG_VAR_MAX, LOG_VAR_MIN};
use crate::model::{
    assemble_log_ratios, clamp_logit, log_optimal_discriminator, standard_normal, Discriminators, FactorLogits,
    ModelParts, ModelSpec, LOGIT_CLAMP,
};
use crate::rng::Rng;

/// Named scalar losses in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Losses(pub Vec<(String, f64)>);

impl Losses {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.0.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|(_, v)| v.is_finite())
    }

    pub fn extend(&mut self, other: Losses) {
        self.0.extend(other.0);
    }
}

/// Noise behind one discriminator step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNoise {
    /// Standard-normal draws for the reparameterized posteriors, per modality.
    pub content_eps: Vec<Tensor>,
    pub style_eps: Vec<Tensor>,
    /// Prior draws per modality for the negative tuples.
    pub prior_content: Vec<Tensor>,
    pub prior_style: Vec<Tensor>,
    /// Per-modality permutations of the paired rows, for `C`'s negatives.
    pub permutations: Vec<Vec<usize>>,
}

impl DiscriminatorNoise {
    pub fn draw(spec: &ModelSpec, batch: &MultimodalBatch, rng: &mut Rng) -> Self {
        let (n, m) = (batch.rows(), spec.modalities());
        let (dc, ds) = (spec.content_dim, spec.style_dim);
        let np = batch.paired_rows().len();
        let mut noise = DiscriminatorNoise {
            content_eps: Vec::with_capacity(m),
            style_eps: Vec::with_capacity(m),
            prior_content: Vec::with_capacity(m),
            prior_style: Vec::with_capacity(m),
            permutations: Vec::with_capacity(m),
        };
        for _ in 0..m {
            noise.content_eps.push(standard_normal(&[n, dc], rng));
            noise.style_eps.push(standard_normal(&[n, ds], rng));
            noise.prior_content.push(standard_normal(&[n, dc], rng));
            noise.prior_style.push(standard_normal(&[n, ds], rng));
            noise.permutations.push(rng.permutation(np));
        }
        noise
    }
}

/// Noise behind one generator step.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNoise {
    pub content_eps: Vec<Tensor>,
    pub style_eps: Vec<Tensor>,
    pub prior_content: Tensor,
    pub prior_style: Vec<Tensor>,
}

impl GeneratorNoise {
    pub fn draw(spec: &ModelSpec, batch: &MultimodalBatch, rng: &mut Rng) -> Self {
        let (n, m) = (batch.rows(), spec.modalities());
        let (dc, ds) = (spec.content_dim, spec.style_dim);
        let content_eps = (0..m).map(|_| standard_normal(&[n, dc], rng)).collect();
        let style_eps = (0..m).map(|_| standard_normal(&[n, ds], rng)).collect();
        let prior_content = standard_normal(&[n, dc], rng);
        let prior_style = (0..m).map(|_| standard_normal(&[n, ds], rng)).collect();
        GeneratorNoise {
            content_eps,
            style_eps,
            prior_content,
            prior_style,
        }
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss of `logits` whose first `positives` rows have label 1
/// and the rest label 0, with its gradient.
pub fn logistic_loss(logits: &Tensor, positives: usize) -> (f64, Tensor) {
    let n = logits.rows() as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    for (r, (&t, g)) in logits.data().iter().zip(grad.data_mut()).enumerate() {
        let y = if r < positives { 1.0 } else { 0.0 };
        loss += if r < positives { softplus(-t) } else { softplus(t) };
        *g = (sigmoid(t) - y) / n;
    }
    (loss / n, grad)
}

/// 1 where the clamp passes gradient through.
#[inline]
fn clamp_mask(t: f64) -> f64 {
    if t.abs() < LOGIT_CLAMP {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn log_var_mask(raw: f64) -> f64 {
    if raw > LOG_VAR_MIN && raw < LOG_VAR_MAX {
        1.0
    } else {
        0.0
    }
}

/// One modality's reparameterized codes with what backprop needs.
struct Encoded {
    raw: Tensor,
    cache: ForwardCache,
    content: Tensor,
    style: Tensor,
}

fn reparameterize_fixed(raw: &Tensor, mean_at: usize, width: usize, eps: &Tensor) -> Tensor {
    let rows = raw.rows();
    let mut z = Tensor::zeros(&[rows, width]);
    for r in 0..rows {
        let src = raw.row(r);
        let e = eps.row(r);
        for (k, zk) in z.row_mut(r).iter_mut().enumerate() {
            let lv = src[mean_at + width + k].clamp(LOG_VAR_MIN, LOG_VAR_MAX);
            *zk = src[mean_at + k] + (0.5 * lv).exp() * e[k];
        }
    }
    z
}

fn encode_with_noise(
    enc: &Mlp,
    gen: &ParamStore,
    x: &Tensor,
    content_eps: &Tensor,
    style_eps: &Tensor,
    spec: &ModelSpec,
) -> Result<Encoded> {
    let (raw, cache) = enc.forward(gen, x)?;
    let (dc, ds) = (spec.content_dim, spec.style_dim);
    let content = reparameterize_fixed(&raw, 0, dc, content_eps);
    let style = reparameterize_fixed(&raw, 2 * dc, ds, style_eps);
    Ok(Encoded {
        raw,
        cache,
        content,
        style,
    })
}

fn sample_codes(
    enc: &Mlp,
    gen: &ParamStore,
    x: &Tensor,
    content_eps: &Tensor,
    style_eps: &Tensor,
    spec: &ModelSpec,
) -> Result<(Tensor, Tensor)> {
    let raw = enc.predict(gen, x)?;
    let (dc, ds) = (spec.content_dim, spec.style_dim);
    Ok((
        reparameterize_fixed(&raw, 0, dc, content_eps),
        reparameterize_fixed(&raw, 2 * dc, ds, style_eps),
    ))
}

/// Chains code gradients through the reparameterization into the encoder.
fn encoder_backward(
    enc: &Mlp,
    gen: &mut ParamStore,
    e: &Encoded,
    content_eps: &Tensor,
    style_eps: &Tensor,
    grad_content: &Tensor,
    grad_style: &Tensor,
) -> Result<()> {
    let dc = grad_content.cols();
    let ds = grad_style.cols();
    let mut d_raw = Tensor::zeros(e.raw.shape());
    for r in 0..e.raw.rows() {
        let raw = e.raw.row(r);
        let out = d_raw.row_mut(r);
        for (at, width, g, eps) in [(0, dc, grad_content, content_eps), (2 * dc, ds, grad_style, style_eps)] {
            let (g, eps) = (g.row(r), eps.row(r));
            for k in 0..width {
                let lv_raw = raw[at + width + k];
                let lv = lv_raw.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
                out[at + k] = g[k];
                out[at + width + k] = g[k] * 0.5 * (0.5 * lv).exp() * eps[k] * log_var_mask(lv_raw);
            }
        }
    }
    enc.backward(gen, &e.cache, &d_raw)?;
    Ok(())
}

fn column_vector(values: Vec<f64>) -> Tensor {
    let n = values.len();
    Tensor::from_shape_vec(vec![n, 1], values).expect("column shape")
}

/// Adds `src` into `dst` rows listed in `rows` (or all rows if `None`).
fn add_rows(dst: &mut Tensor, src: &Tensor, rows: Option<&[usize]>) {
    for r in 0..src.rows() {
        let d = rows.map_or(r, |idx| idx[r]);
        for (a, b) in dst.row_mut(d).iter_mut().zip(src.row(r)) {
            *a += b;
        }
    }
}

/// Trains one binary discriminator on stacked positives and negatives;
/// gradients accumulate into `disc`.
fn binary_update(net: &Mlp, disc: &mut ParamStore, pos: &Tensor, neg: &Tensor, backprop: bool) -> Result<f64> {
    let input = Tensor::vcat(&[pos, neg])?;
    let (logits, cache) = net.forward(disc, &input)?;
    let (loss, grad) = logistic_loss(&logits, pos.rows());
    if backprop {
        net.backward(disc, &cache, &grad)?;
    }
    Ok(loss)
}

/// Logistic losses of every factor discriminator; gradients go to the
/// discriminator store only.
pub fn discriminator_objective(
    parts: &mut ModelParts<'_>,
    batch: &MultimodalBatch,
    noise: &DiscriminatorNoise,
    backprop: bool,
) -> Result<Losses> {
    match parts.discriminators {
        Discriminators::Factorized(_) => factorized_discriminator(parts, batch, noise, backprop),
        Discriminators::Joint(_) => joint_discriminator(parts, batch, noise, backprop),
    }
}

fn factorized_discriminator(
    parts: &mut ModelParts<'_>,
    batch: &MultimodalBatch,
    noise: &DiscriminatorNoise,
    backprop: bool,
) -> Result<Losses> {
    let Discriminators::Factorized(e) = parts.discriminators else { unreachable!() };
    let spec = parts.spec;
    let gen = &*parts.generator;
    let disc = &mut *parts.discriminator;
    let mut losses = Losses::default();
    for i in 0..spec.modalities() {
        let x = &batch.x[i];
        let (c_q, s_q) = sample_codes(&parts.encoders[i], gen, x, &noise.content_eps[i], &noise.style_eps[i], spec)?;
        let (c_p, s_p) = (&noise.prior_content[i], &noise.prior_style[i]);
        let x_gen = parts.decoders[i].predict(gen, &Tensor::hcat(&[s_p, c_p])?)?;
        let pos = Tensor::hcat(&[x, &s_q, &c_q])?;
        let neg_a = Tensor::hcat(&[x, &s_q, c_p])?;
        let neg_b = Tensor::hcat(&[&x_gen, s_p, c_p])?;
        losses.push(format!("disc_a{i}"), binary_update(&e.a[i], disc, &pos, &neg_a, backprop)?);
        losses.push(format!("disc_b{i}"), binary_update(&e.b[i], disc, &pos, &neg_b, backprop)?);
    }
    let paired = batch.paired_rows();
    if paired.len() >= 2 {
        let pos_parts: Vec<Tensor> = batch.x.iter().map(|x| x.select_rows(&paired)).collect();
        let neg_parts: Vec<Tensor> = batch
            .x
            .iter()
            .zip(&noise.permutations)
            .map(|(x, perm)| {
                let rows: Vec<usize> = perm.iter().map(|&k| paired[k]).collect();
                x.select_rows(&rows)
            })
            .collect();
        let pos = Tensor::hcat(&pos_parts.iter().collect::<Vec<_>>())?;
        let neg = Tensor::hcat(&neg_parts.iter().collect::<Vec<_>>())?;
        losses.push("disc_c", binary_update(&e.c, disc, &pos, &neg, backprop)?);
        losses.push("disc_c_skipped", 0.0);
    } else {
        losses.push("disc_c_skipped", 1.0);
    }
    Ok(losses)
}

/// Softmax cross-entropy of `logits` against `labels`, mean-reduced, with
/// its gradient.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let n = logits.rows() as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let lse = crate::gaussians::log_sum_exp(row);
        loss += lse - row[y];
        for (k, g) in grad.row_mut(r).iter_mut().enumerate() {
            let p = (row[k] - lse).exp();
            *g = (p - if k == y { 1.0 } else { 0.0 }) / n;
        }
    }
    (loss / n, grad)
}

fn joint_discriminator(
    parts: &mut ModelParts<'_>,
    batch: &MultimodalBatch,
    noise: &DiscriminatorNoise,
    backprop: bool,
) -> Result<Losses> {
    let Discriminators::Joint(j) = parts.discriminators else { unreachable!() };
    let spec = parts.spec;
    let m = spec.modalities();
    let gen = &*parts.generator;
    let mut losses = Losses::default();
    let paired = batch.paired_rows();
    if paired.is_empty() {
        losses.push("disc_joint_skipped", 1.0);
        return Ok(losses);
    }
    let xs: Vec<Tensor> = batch.x.iter().map(|x| x.select_rows(&paired)).collect();
    let mut contents = Vec::with_capacity(m);
    let mut styles = Vec::with_capacity(m);
    for i in 0..m {
        let ce = noise.content_eps[i].select_rows(&paired);
        let se = noise.style_eps[i].select_rows(&paired);
        let (c, s) = sample_codes(&parts.encoders[i], gen, &xs[i], &ce, &se, spec)?;
        contents.push(c);
        styles.push(s);
    }
    let c_p = noise.prior_content[0].select_rows(&paired);
    let s_p: Vec<Tensor> = noise.prior_style.iter().map(|s| s.select_rows(&paired)).collect();
    let x_gen = (0..m)
        .map(|i| parts.decoders[i].predict(gen, &Tensor::hcat(&[&s_p[i], &c_p])?))
        .collect::<Result<Vec<_>>>()?;

    let mut blocks = Vec::with_capacity(m + 1);
    let mut labels = Vec::with_capacity((m + 1) * paired.len());
    for i in 0..=m {
        let mut cols: Vec<&Tensor> = Vec::with_capacity(2 * m + 1);
        if i < m {
            cols.extend(xs.iter());
            cols.extend(styles.iter());
            cols.push(&contents[i]);
        } else {
            cols.extend(x_gen.iter());
            cols.extend(s_p.iter());
            cols.push(&c_p);
        }
        blocks.push(Tensor::hcat(&cols)?);
        labels.extend(std::iter::repeat(i).take(paired.len()));
    }
    let input = Tensor::vcat(&blocks.iter().collect::<Vec<_>>())?;
    let disc = &mut *parts.discriminator;
    let (logits, cache) = j.net.forward(disc, &input)?;
    let (loss, grad) = cross_entropy(&logits, &labels);
    if backprop {
        j.net.backward(disc, &cache, &grad)?;
    }
    losses.push("disc_joint", loss);
    losses.push("disc_joint_skipped", 0.0);
    Ok(losses)
}

/// Encoder-branch and decoder-branch losses; gradients go to the generator
/// store only.
///
/// Encoder branch `i`: mean over rows of `log D*[i] − log D*[M+1] = log r_i`
/// on `(X, S, c)` with `c ~ q(c | x_i)`; unpaired rows contribute only their
/// `B_i` term. Decoder branch: mean of `−(1/M) Σ_i log D*[i]` on prior
/// samples. The returned `gen_total` is their sum.
pub fn generator_objective(
    parts: &mut ModelParts<'_>,
    batch: &MultimodalBatch,
    noise: &GeneratorNoise,
    backprop: bool,
) -> Result<Losses> {
    match parts.discriminators {
        Discriminators::Factorized(_) => factorized_generator(parts, batch, noise, backprop),
        Discriminators::Joint(_) => joint_generator(parts, batch, noise, backprop),
    }
}

fn factorized_generator(
    parts: &mut ModelParts<'_>,
    batch: &MultimodalBatch,
    noise: &GeneratorNoise,
    backprop: bool,
) -> Result<Losses> {
    let Discriminators::Factorized(e) = parts.discriminators else { unreachable!() };
    let spec = parts.spec;
    let m = spec.modalities();
    let n = batch.rows();
    let inv_n = 1.0 / n as f64;
    let (dc, ds) = (spec.content_dim, spec.style_dim);
    let disc = &*parts.discriminator;
    let paired = batch.paired_rows();
    let mut losses = Losses::default();
    let mut total = 0.0;

    let encoded = (0..m)
        .map(|j| {
            encode_with_noise(
                &parts.encoders[j],
                parts.generator,
                &batch.x[j],
                &noise.content_eps[j],
                &noise.style_eps[j],
                spec,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad_c: Vec<Tensor> = (0..m).map(|_| Tensor::zeros(&[n, dc])).collect();
    let mut grad_s: Vec<Tensor> = (0..m).map(|_| Tensor::zeros(&[n, ds])).collect();

    let xp: Vec<Tensor> = batch.x.iter().map(|x| x.select_rows(&paired)).collect();
    let c_logits = if paired.is_empty() {
        Tensor::zeros(&[0, 1])
    } else {
        e.c.predict(disc, &Tensor::hcat(&xp.iter().collect::<Vec<_>>())?)?
    };
    let widths = |j: usize| [spec.modality_dims[j], ds, dc];

    for i in 0..m {
        let enc_i = &encoded[i];
        let mut row_loss = vec![0.0; n];
        // B_i on every row.
        let input = Tensor::hcat(&[&batch.x[i], &enc_i.style, &enc_i.content])?;
        let (t, cache) = e.b[i].forward(disc, &input)?;
        let g: Vec<f64> = t.data().iter().map(|&v| inv_n * clamp_mask(v)).collect();
        for (l, &v) in row_loss.iter_mut().zip(t.data()) {
            *l += clamp_logit(v);
        }
        if backprop {
            let gin = e.b[i].input_gradient(disc, &cache, &column_vector(g))?;
            let split = gin.split_cols(&widths(i))?;
            add_rows(&mut grad_s[i], &split[1], None);
            add_rows(&mut grad_c[i], &split[2], None);
        }
        // Remaining factors of log r_i on paired rows.
        if !paired.is_empty() {
            let c_i = enc_i.content.select_rows(&paired);
            for (k, &r) in paired.iter().enumerate() {
                row_loss[r] += clamp_logit(c_logits.data()[k]);
            }
            for j in (0..m).filter(|&j| j != i) {
                let s_j = encoded[j].style.select_rows(&paired);
                let input = Tensor::hcat(&[&xp[j], &s_j, &c_i])?;
                let (tb, cb) = e.b[j].forward(disc, &input)?;
                let (ta, ca) = e.a[j].forward(disc, &input)?;
                for (k, &r) in paired.iter().enumerate() {
                    row_loss[r] += clamp_logit(tb.data()[k]) - clamp_logit(ta.data()[k]);
                }
                if backprop {
                    let gb: Vec<f64> = tb.data().iter().map(|&v| inv_n * clamp_mask(v)).collect();
                    let ga: Vec<f64> = ta.data().iter().map(|&v| -inv_n * clamp_mask(v)).collect();
                    let mut gin = e.b[j].input_gradient(disc, &cb, &column_vector(gb))?;
                    gin.add_scaled(&e.a[j].input_gradient(disc, &ca, &column_vector(ga))?, 1.0)?;
                    let split = gin.split_cols(&widths(j))?;
                    add_rows(&mut grad_s[j], &split[1], Some(&paired));
                    add_rows(&mut grad_c[i], &split[2], Some(&paired));
                }
            }
        }
        let loss = row_loss.iter().sum::<f64>() * inv_n;
        total += loss;
        losses.push(format!("gen_enc{i}"), loss);
    }

    // Decoder branch on prior samples.
    let c = &noise.prior_content;
    let mut dec_out = Vec::with_capacity(m);
    for j in 0..m {
        dec_out.push(parts.decoders[j].forward(parts.generator, &Tensor::hcat(&[&noise.prior_style[j], c])?)?);
    }
    let mut a_out = Vec::with_capacity(m);
    let mut b_out = Vec::with_capacity(m);
    for j in 0..m {
        let input = Tensor::hcat(&[&dec_out[j].0, &noise.prior_style[j], c])?;
        a_out.push(e.a[j].forward(disc, &input)?);
        b_out.push(e.b[j].forward(disc, &input)?);
    }
    let xs: Vec<&Tensor> = dec_out.iter().map(|(x, _)| x).collect();
    let (tc, cc) = e.c.forward(disc, &Tensor::hcat(&xs)?)?;

    let mut g_c = vec![0.0; n];
    let mut g_a = vec![vec![0.0; n]; m];
    let mut g_b = vec![vec![0.0; n]; m];
    let mut dec_loss = 0.0;
    let mut mean_log_ratio = vec![0.0; m];
    for r in 0..n {
        let f = FactorLogits {
            c: tc.data()[r],
            a: a_out.iter().map(|(t, _)| t.data()[r]).collect(),
            b: b_out.iter().map(|(t, _)| t.data()[r]).collect(),
        };
        let lr = assemble_log_ratios(&f);
        let log_d = log_optimal_discriminator(&lr);
        dec_loss -= log_d[..m].iter().sum::<f64>() / m as f64;
        for (acc, v) in mean_log_ratio.iter_mut().zip(&lr) {
            *acc += v * inv_n;
        }
        // d loss / d log r_k = D*[k] − 1/M.
        let g: Vec<f64> = (0..m).map(|k| (log_d[k].exp() - 1.0 / m as f64) * inv_n).collect();
        let gsum: f64 = g.iter().sum();
        g_c[r] = gsum * clamp_mask(f.c);
        for k in 0..m {
            g_a[k][r] = (g[k] - gsum) * clamp_mask(f.a[k]);
            g_b[k][r] = gsum * clamp_mask(f.b[k]);
        }
    }
    dec_loss *= inv_n;
    total += dec_loss;
    losses.push("gen_dec", dec_loss);
    for (i, v) in mean_log_ratio.into_iter().enumerate() {
        losses.push(format!("logr_dec{i}"), v);
    }
    losses.push("gen_total", total);
    if !losses.all_finite() {
        return Err(Error::NonFinite(format!(
            "generator losses {:?}; first C logits {:?}",
            losses.0,
            &tc.data()[..tc.len().min(4)]
        )));
    }
    if !backprop {
        return Ok(losses);
    }

    let gen = &mut *parts.generator;
    let gin_c = e.c.input_gradient(disc, &cc, &column_vector(g_c))?;
    let c_split = gin_c.split_cols(&spec.modality_dims)?;
    for j in 0..m {
        let mut dx = e.a[j]
            .input_gradient(disc, &a_out[j].1, &column_vector(std::mem::take(&mut g_a[j])))?
            .split_cols(&widths(j))?
            .swap_remove(0);
        let gb = e.b[j].input_gradient(disc, &b_out[j].1, &column_vector(std::mem::take(&mut g_b[j])))?;
        dx.add_scaled(&gb.split_cols(&widths(j))?[0], 1.0)?;
        dx.add_scaled(&c_split[j], 1.0)?;
        parts.decoders[j].backward(gen, &dec_out[j].1, &dx)?;
    }
    for j in 0..m {
        encoder_backward(
            &parts.encoders[j],
            gen,
            &encoded[j],
            &noise.content_eps[j],
            &noise.style_eps[j],
            &grad_c[j],
            &grad_s[j],
        )?;
    }
    Ok(losses)
}

fn joint_generator(
    parts: &mut ModelParts<'_>,
    batch: &MultimodalBatch,
    noise: &GeneratorNoise,
    backprop: bool,
) -> Result<Losses> {
    let Discriminators::Joint(jd) = parts.discriminators else { unreachable!() };
    let spec = parts.spec;
    let m = spec.modalities();
    let (dc, ds) = (spec.content_dim, spec.style_dim);
    let disc = &*parts.discriminator;
    let paired = batch.paired_rows();
    let np = paired.len();
    let mut losses = Losses::default();
    let mut total = 0.0;

    let xs: Vec<Tensor> = batch.x.iter().map(|x| x.select_rows(&paired)).collect();
    let content_eps: Vec<Tensor> = noise.content_eps.iter().map(|t| t.select_rows(&paired)).collect();
    let style_eps: Vec<Tensor> = noise.style_eps.iter().map(|t| t.select_rows(&paired)).collect();
    let encoded = (0..m)
        .map(|j| encode_with_noise(&parts.encoders[j], parts.generator, &xs[j], &content_eps[j], &style_eps[j], spec))
        .collect::<Result<Vec<_>>>()?;
    let mut grad_c: Vec<Tensor> = (0..m).map(|_| Tensor::zeros(&[np, dc])).collect();
    let mut grad_s: Vec<Tensor> = (0..m).map(|_| Tensor::zeros(&[np, ds])).collect();
    let mut widths: Vec<usize> = spec.modality_dims.clone();
    widths.extend(std::iter::repeat(ds).take(m));
    widths.push(dc);

    for i in 0..m {
        if np == 0 {
            losses.push(format!("gen_enc{i}"), 0.0);
            continue;
        }
        let mut cols: Vec<&Tensor> = xs.iter().collect();
        cols.extend(encoded.iter().map(|e| &e.style));
        cols.push(&encoded[i].content);
        let (t, cache) = jd.net.forward(disc, &Tensor::hcat(&cols)?)?;
        let inv = 1.0 / np as f64;
        let loss = (0..np).map(|r| t.get(r, i) - t.get(r, m)).sum::<f64>() * inv;
        total += loss;
        losses.push(format!("gen_enc{i}"), loss);
        if backprop {
            let mut g = Tensor::zeros(t.shape());
            for r in 0..np {
                g.set(r, i, inv);
                g.set(r, m, -inv);
            }
            let split = jd.net.input_gradient(disc, &cache, &g)?.split_cols(&widths)?;
            for j in 0..m {
                grad_s[j].add_scaled(&split[m + j], 1.0)?;
            }
            grad_c[i].add_scaled(&split[2 * m], 1.0)?;
        }
    }

    let n = batch.rows();
    let inv_n = 1.0 / n as f64;
    let c = &noise.prior_content;
    let mut dec_out = Vec::with_capacity(m);
    for j in 0..m {
        dec_out.push(parts.decoders[j].forward(parts.generator, &Tensor::hcat(&[&noise.prior_style[j], c])?)?);
    }
    let mut cols: Vec<&Tensor> = dec_out.iter().map(|(x, _)| x).collect();
    cols.extend(noise.prior_style.iter());
    cols.push(c);
    let (t, cache) = jd.net.forward(disc, &Tensor::hcat(&cols)?)?;
    let mut g = Tensor::zeros(t.shape());
    let mut dec_loss = 0.0;
    let mut mean_log_ratio = vec![0.0; m];
    for r in 0..n {
        let row = t.row(r);
        let lse = crate::gaussians::log_sum_exp(row);
        dec_loss -= (0..m).map(|k| row[k] - lse).sum::<f64>() / m as f64;
        for k in 0..m {
            mean_log_ratio[k] += (row[k] - row[m]) * inv_n;
        }
        let gr = g.row_mut(r);
        for k in 0..=m {
            let target = if k < m { 1.0 / m as f64 } else { 0.0 };
            gr[k] = ((row[k] - lse).exp() - target) * inv_n;
        }
    }
    dec_loss *= inv_n;
    total += dec_loss;
    losses.push("gen_dec", dec_loss);
    for (i, v) in mean_log_ratio.into_iter().enumerate() {
        losses.push(format!("logr_dec{i}"), v);
    }
    losses.push("gen_total", total);
    if !losses.all_finite() {
        return Err(Error::NonFinite(format!(
            "generator losses {:?}; first logits {:?}",
            losses.0,
            t.row(0)
        )));
    }
    if !backprop {
        return Ok(losses);
    }
    let gen = &mut *parts.generator;
    let split = jd.net.input_gradient(disc, &cache, &g)?.split_cols(&widths)?;
    for j in 0..m {
        parts.decoders[j].backward(gen, &dec_out[j].1, &split[j])?;
    }
    for j in 0..m {
        encoder_backward(
            &parts.encoders[j],
            gen,
            &encoded[j],
            &content_eps[j],
            &style_eps[j],
            &grad_c[j],
            &grad_s[j],
        )?;
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chance_level_logistic_loss() {
        let (loss, grad) = logistic_loss(&Tensor::zeros(&[4, 1]), 2);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad.data(), &[-0.125, -0.125, 0.125, 0.125]);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let t = Tensor::matrix(2, 1, vec![-800.0, 800.0]).unwrap();
        let (loss, _) = logistic_loss(&t, 1);
        assert!((loss - 800.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_cross_entropy_is_log_classes() {
        let (loss, _) = cross_entropy(&Tensor::zeros(&[3, 3]), &[0, 1, 2]);
        assert!((loss - 3f64.ln()).abs() < 1e-15);
    }
}
