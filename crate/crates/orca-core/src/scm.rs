//! Synthetic impression generator built on an explicit structural causal
//! model, with a planted clickbait shortcut: a configurable segment of items
//! gets a click-propensity boost and a content-quality penalty, so high CTR
//! associates with low dwell even though neither causes the other directly.
//!
//! Structural equations (all exogenous noise from seeded substreams):
//!
//! - per item: latent `v ~ N(0, I)`, clickbait flag `b ~ Bern(clickbait_fraction)`,
//!   quality `q = quality_base - quality_penalty * b + quality_noise * xi_q`,
//!   content depth `z = q + depth_noise * xi_z`,
//!   title appeal `a = b + appeal_noise * xi_a`;
//! - per user: latent `u ~ N(0, I)`;
//! - per impression: click score `s = click_intercept + (u . v)/sqrt(latent_dim)
//!   + click_bias * b`, click `C = 1{sigmoid(s) > U}` with `U ~ Uniform(0,1)`
//!   kept as exogenous noise so counterfactual click states reuse the same draw;
//! - potential dwell for click state `c`:
//!   `T(c) = exp(clamp(dwell_base + quality_coef * q + depth_coef * z
//!   + mediation_strength * c + noise_sigma * xi_T, dwell_log_min,
//!   dwell_log_max))`; the clamp mimics tracking floors and session
//!   timeouts and puts realistic point masses at the shortest and longest
//!   durations.
//!
//! Records carry observed dwell only when clicked. Appeal and depth are
//! emitted as equal-width bucket labels over the item population; depth is the
//! schema's post-click field.
//!
//! [`estimate_effects`] is a Monte-Carlo oracle for the total /
//! natural-indirect / total-direct effect decomposition of a feature change on
//! dwell. Each repetition draws one set of exogenous noises and reuses it
//! across all three potential outcomes (abduction-action-prediction), so the
//! decomposition identity `te = nie + tde` holds per repetition exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binning::{assign_bin, BinningSpec};
use crate::error::{OrcaError, Result};
use crate::schema::{FeatureSchema, FieldKind, FieldSpec, RawRecord, N_RESERVED};

const SALT_ITEMS: u64 = 0x5343_4d5f_4954;
const SALT_USERS: u64 = 0x5343_4d5f_5553;
const SALT_IMPRESSIONS: u64 = 0x5343_4d5f_494d;
const SALT_EFFECTS: u64 = 0x5343_4d5f_4546;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    /// Fraction of items in the clickbait segment.
    pub clickbait_fraction: f64,
    /// Click-propensity boost for clickbait items (beta_b).
    pub click_bias: f64,
    /// Content-quality penalty for clickbait items.
    pub quality_penalty: f64,
    /// Causal effect of the click state on log-dwell (delta).
    pub mediation_strength: f64,
    /// Scale of the dwell noise term.
    pub noise_sigma: f64,
    pub seed: u64,

    // Remaining structural coefficients.
    pub click_intercept: f64,
    pub dwell_base: f64,
    pub quality_base: f64,
    pub quality_noise: f64,
    pub depth_noise: f64,
    pub quality_coef: f64,
    pub depth_coef: f64,
    pub appeal_noise: f64,
    pub n_appeal_buckets: usize,
    pub n_depth_buckets: usize,
    /// Log-dwell clamp range (tracking floor / session timeout).
    pub dwell_log_min: f64,
    pub dwell_log_max: f64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            n_users: 1000,
            n_items: 2000,
            latent_dim: 4,
            clickbait_fraction: 0.3,
            click_bias: 2.0,
            quality_penalty: 2.0,
            mediation_strength: 0.5,
            noise_sigma: 0.9,
            seed: 42,
            click_intercept: -3.6,
            dwell_base: 5.5,
            quality_base: 0.0,
            quality_noise: 0.5,
            depth_noise: 0.5,
            quality_coef: 1.0,
            depth_coef: 1.0,
            appeal_noise: 0.1,
            n_appeal_buckets: 10,
            n_depth_buckets: 20,
            dwell_log_min: 2.0,
            dwell_log_max: 6.5,
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.clickbait_fraction) {
            return Err(OrcaError::config("clickbait_fraction must be in [0, 1]"));
        }
        if self.noise_sigma < 0.0 {
            return Err(OrcaError::config("noise_sigma must be non-negative"));
        }
        if self.latent_dim < 1 {
            return Err(OrcaError::config("latent_dim must be >= 1"));
        }
        if self.n_users == 0 || self.n_items == 0 {
            return Err(OrcaError::config("n_users and n_items must be positive"));
        }
        if self.n_appeal_buckets < 2 || self.n_depth_buckets < 2 {
            return Err(OrcaError::config("bucket counts must be >= 2"));
        }
        if self.dwell_log_min >= self.dwell_log_max {
            return Err(OrcaError::config("dwell_log_min must be below dwell_log_max"));
        }
        Ok(())
    }
}

/// Ground-truth attributes of one generated item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemTruth {
    pub item_id: usize,
    pub clickbait: bool,
    pub quality: f64,
    pub depth: f64,
    pub appeal_bucket: usize,
    pub depth_bucket: usize,
}

/// A generated dataset: raw records plus the declared schema and the item
/// ground truth used by diagnostics.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub schema: FeatureSchema,
    pub records: Vec<RawRecord>,
    pub items: Vec<ItemTruth>,
}

pub const FIELD_USER: &str = "user_id";
pub const FIELD_ITEM: &str = "item_id";
pub const FIELD_APPEAL: &str = "title_appeal";
pub const FIELD_DEPTH: &str = "content_depth";

struct Item {
    latent: Vec<f64>,
    clickbait: bool,
    quality: f64,
    depth: f64,
    appeal_raw: f64,
    appeal_bucket: usize,
    depth_bucket: usize,
}

fn bucketize(values: &[f64], n_buckets: usize) -> Vec<usize> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    values
        .iter()
        .map(|&v| (((v - lo) / span * n_buckets as f64) as usize).min(n_buckets - 1))
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sample_latent(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn click_score(cfg: &ScmConfig, user: &[f64], item_latent: &[f64], clickbait: bool) -> f64 {
    let dot: f64 = user.iter().zip(item_latent).map(|(a, b)| a * b).sum();
    cfg.click_intercept
        + dot / (cfg.latent_dim as f64).sqrt()
        + cfg.click_bias * if clickbait { 1.0 } else { 0.0 }
}

fn potential_log_dwell(cfg: &ScmConfig, quality: f64, depth: f64, click: f64, noise: f64) -> f64 {
    let raw = cfg.dwell_base
        + cfg.quality_coef * quality
        + cfg.depth_coef * depth
        + cfg.mediation_strength * click
        + cfg.noise_sigma * noise;
    raw.clamp(cfg.dwell_log_min, cfg.dwell_log_max)
}

/// Generate `n_impressions` impressions from the structural model.
pub fn generate_dataset(cfg: &ScmConfig, n_impressions: usize) -> Result<SynthDataset> {
    cfg.validate()?;
    if n_impressions == 0 {
        return Err(OrcaError::config("n_impressions must be positive"));
    }

    let mut item_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SALT_ITEMS);
    let mut items: Vec<Item> = (0..cfg.n_items)
        .map(|_| {
            let latent = sample_latent(&mut item_rng, cfg.latent_dim);
            let clickbait = item_rng.gen::<f64>() < cfg.clickbait_fraction;
            let xi_q: f64 = StandardNormal.sample(&mut item_rng);
            let quality = cfg.quality_base
                - cfg.quality_penalty * if clickbait { 1.0 } else { 0.0 }
                + cfg.quality_noise * xi_q;
            let xi_z: f64 = StandardNormal.sample(&mut item_rng);
            let depth = quality + cfg.depth_noise * xi_z;
            let xi_a: f64 = StandardNormal.sample(&mut item_rng);
            let appeal_raw =
                if clickbait { 1.0 } else { 0.0 } + cfg.appeal_noise * xi_a;
            Item {
                latent,
                clickbait,
                quality,
                depth,
                appeal_raw,
                appeal_bucket: 0,
                depth_bucket: 0,
            }
        })
        .collect();

    let appeal_buckets = bucketize(
        &items.iter().map(|it| it.appeal_raw).collect::<Vec<_>>(),
        cfg.n_appeal_buckets,
    );
    let depth_buckets = bucketize(
        &items.iter().map(|it| it.depth).collect::<Vec<_>>(),
        cfg.n_depth_buckets,
    );
    for (item, (a, d)) in items
        .iter_mut()
        .zip(appeal_buckets.into_iter().zip(depth_buckets))
    {
        item.appeal_bucket = a;
        item.depth_bucket = d;
    }

    let mut user_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SALT_USERS);
    let users: Vec<Vec<f64>> = (0..cfg.n_users)
        .map(|_| sample_latent(&mut user_rng, cfg.latent_dim))
        .collect();

    let mut imp_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SALT_IMPRESSIONS);
    let mut records = Vec::with_capacity(n_impressions);
    for _ in 0..n_impressions {
        let ui = imp_rng.gen_range(0..cfg.n_users);
        let ii = imp_rng.gen_range(0..cfg.n_items);
        let item = &items[ii];
        let u_click: f64 = imp_rng.gen::<f64>();
        let xi_t: f64 = StandardNormal.sample(&mut imp_rng);

        let clicked = sigmoid(click_score(cfg, &users[ui], &item.latent, item.clickbait)) > u_click;
        let dwell_seconds = if clicked {
            Some(potential_log_dwell(cfg, item.quality, item.depth, 1.0, xi_t).exp())
        } else {
            None
        };

        records.push(RawRecord {
            values: vec![
                ui.to_string(),
                ii.to_string(),
                item.appeal_bucket.to_string(),
                item.depth_bucket.to_string(),
            ],
            clicked,
            dwell_seconds,
            timestamp: None,
        });
    }

    let schema = FeatureSchema::new(vec![
        FieldSpec {
            name: FIELD_USER.into(),
            kind: FieldKind::Categorical,
            vocab_size: cfg.n_users as u32 + N_RESERVED,
            is_post_click: false,
        },
        FieldSpec {
            name: FIELD_ITEM.into(),
            kind: FieldKind::Categorical,
            vocab_size: cfg.n_items as u32 + N_RESERVED,
            is_post_click: false,
        },
        FieldSpec {
            name: FIELD_APPEAL.into(),
            kind: FieldKind::NumericBucketized,
            vocab_size: cfg.n_appeal_buckets as u32 + N_RESERVED,
            is_post_click: false,
        },
        FieldSpec {
            name: FIELD_DEPTH.into(),
            kind: FieldKind::NumericBucketized,
            vocab_size: cfg.n_depth_buckets as u32 + N_RESERVED,
            is_post_click: true,
        },
    ])?;

    let item_truth = items
        .iter()
        .enumerate()
        .map(|(i, it)| ItemTruth {
            item_id: i,
            clickbait: it.clickbait,
            quality: it.quality,
            depth: it.depth,
            appeal_bucket: it.appeal_bucket,
            depth_bucket: it.depth_bucket,
        })
        .collect();

    Ok(SynthDataset {
        schema,
        records,
        items: item_truth,
    })
}

/// An assignment of the structural model's feature variables, the unit the
/// mediation oracle intervenes on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmAssignment {
    pub user_latent: Vec<f64>,
    pub item_latent: Vec<f64>,
    pub clickbait: bool,
    pub quality: f64,
    pub depth: f64,
}

impl ScmAssignment {
    pub fn sample(cfg: &ScmConfig, rng: &mut ChaCha8Rng) -> Self {
        let clickbait = rng.gen::<f64>() < cfg.clickbait_fraction;
        let xi_q: f64 = StandardNormal.sample(rng);
        let quality = cfg.quality_base
            - cfg.quality_penalty * if clickbait { 1.0 } else { 0.0 }
            + cfg.quality_noise * xi_q;
        let xi_z: f64 = StandardNormal.sample(rng);
        let depth = quality + cfg.depth_noise * xi_z;
        ScmAssignment {
            user_latent: sample_latent(rng, cfg.latent_dim),
            item_latent: sample_latent(rng, cfg.latent_dim),
            clickbait,
            quality,
            depth,
        }
    }

    fn validate(&self, cfg: &ScmConfig) -> Result<()> {
        if self.user_latent.len() != cfg.latent_dim || self.item_latent.len() != cfg.latent_dim {
            return Err(OrcaError::config("assignment latent dims do not match config"));
        }
        Ok(())
    }
}

/// Monte-Carlo estimates of the total, natural-indirect, and total-direct
/// effect of moving features from `x_star` to `x`, on the dwell scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub te: f64,
    pub nie: f64,
    pub tde: f64,
    pub te_se: f64,
    pub nie_se: f64,
    pub tde_se: f64,
    pub n_mc: usize,
}

struct MeanVar {
    n: f64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    fn new() -> Self {
        MeanVar { n: 0.0, mean: 0.0, m2: 0.0 }
    }
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }
    fn se(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            (self.m2 / (self.n - 1.0) / self.n).sqrt()
        }
    }
}

/// Estimate TE / NIE / TDE for the feature change `x_star -> x`.
///
/// Each repetition draws one click-uniform and one dwell-noise value and
/// evaluates the three potential outcomes `T(x, C_x)`, `T(x_star, C_x)`,
/// `T(x_star, C_x_star)` on the shared draws, so `te = nie + tde` holds per
/// repetition by construction. The click state enters dwell only through the
/// mediation term, so `mediation_strength = 0` makes every NIE repetition
/// exactly zero.
pub fn estimate_effects(
    cfg: &ScmConfig,
    x: &ScmAssignment,
    x_star: &ScmAssignment,
    n_mc: usize,
) -> Result<EffectEstimate> {
    cfg.validate()?;
    x.validate(cfg)?;
    x_star.validate(cfg)?;
    if n_mc == 0 {
        return Err(OrcaError::config("n_mc must be positive"));
    }

    let p_x = sigmoid(click_score(cfg, &x.user_latent, &x.item_latent, x.clickbait));
    let p_star = sigmoid(click_score(cfg, &x_star.user_latent, &x_star.item_latent, x_star.clickbait));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SALT_EFFECTS);
    let (mut te, mut nie, mut tde) = (MeanVar::new(), MeanVar::new(), MeanVar::new());
    for _ in 0..n_mc {
        let u: f64 = rng.gen();
        let xi_t: f64 = StandardNormal.sample(&mut rng);
        let c_x = if p_x > u { 1.0 } else { 0.0 };
        let c_star = if p_star > u { 1.0 } else { 0.0 };

        let t_x_cx = potential_log_dwell(cfg, x.quality, x.depth, c_x, xi_t).exp();
        let t_star_cx = potential_log_dwell(cfg, x_star.quality, x_star.depth, c_x, xi_t).exp();
        let t_star_cstar =
            potential_log_dwell(cfg, x_star.quality, x_star.depth, c_star, xi_t).exp();

        te.push(t_x_cx - t_star_cstar);
        nie.push(t_star_cx - t_star_cstar);
        tde.push(t_x_cx - t_star_cx);
    }

    Ok(EffectEstimate {
        te: te.mean,
        nie: nie.mean,
        tde: tde.mean,
        te_se: te.se(),
        nie_se: nie.se(),
        tde_se: tde.se(),
        n_mc,
    })
}

/// Summary statistics of a generated or loaded dataset.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub n_impressions: usize,
    pub n_clicks: usize,
    pub click_rate: f64,
    /// Impressions per click, the supervision imbalance between the click
    /// task and the dwell task.
    pub supervision_ratio: Option<f64>,
    pub dwell_bin_histogram: Vec<usize>,
}

pub fn dataset_stats(records: &[RawRecord], binning: &BinningSpec) -> Result<DatasetStats> {
    if records.is_empty() {
        return Err(OrcaError::data("no records"));
    }
    let n = records.len();
    let mut n_clicks = 0usize;
    let mut hist = vec![0usize; binning.m];
    for r in records {
        if r.clicked {
            n_clicks += 1;
            if let Some(t) = r.dwell_seconds {
                hist[assign_bin(t, binning)?] += 1;
            }
        }
    }
    Ok(DatasetStats {
        n_impressions: n,
        n_clicks,
        click_rate: n_clicks as f64 / n as f64,
        supervision_ratio: (n_clicks > 0).then(|| n as f64 / n_clicks as f64),
        dwell_bin_histogram: hist,
    })
}

/// Pearson correlation between per-item empirical CTR and per-item mean
/// observed dwell, over items with at least one click. `None` when fewer than
/// two such items exist or a variance degenerates.
pub fn item_ctr_dwell_correlation(records: &[RawRecord], item_field_index: usize) -> Option<f64> {
    use std::collections::HashMap;
    struct Acc {
        imps: usize,
        clicks: usize,
        dwell_sum: f64,
    }
    let mut by_item: HashMap<&str, Acc> = HashMap::new();
    for r in records {
        let key = r.values.get(item_field_index)?.as_str();
        let acc = by_item.entry(key).or_insert(Acc { imps: 0, clicks: 0, dwell_sum: 0.0 });
        acc.imps += 1;
        if r.clicked {
            acc.clicks += 1;
            acc.dwell_sum += r.dwell_seconds.unwrap_or(0.0);
        }
    }
    let pairs: Vec<(f64, f64)> = by_item
        .values()
        .filter(|a| a.clicks > 0)
        .map(|a| (a.clicks as f64 / a.imps as f64, a.dwell_sum / a.clicks as f64))
        .collect();
    pearson(&pairs)
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pairs {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = ScmConfig { n_users: 50, n_items: 80, ..ScmConfig::default() };
        let a = generate_dataset(&cfg, 2000).unwrap();
        let b = generate_dataset(&cfg, 2000).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.items.len(), b.items.len());
    }

    #[test]
    fn zero_impressions_is_an_error() {
        assert!(generate_dataset(&ScmConfig::default(), 0).is_err());
    }

    #[test]
    fn unclicked_records_have_no_dwell() {
        let cfg = ScmConfig { n_users: 50, n_items: 80, ..ScmConfig::default() };
        let ds = generate_dataset(&cfg, 3000).unwrap();
        for r in &ds.records {
            assert_eq!(r.clicked, r.dwell_seconds.is_some());
        }
    }

    #[test]
    fn identical_assignments_give_exact_zero_effects() {
        let cfg = ScmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ScmAssignment::sample(&cfg, &mut rng);
        let est = estimate_effects(&cfg, &x, &x.clone(), 500).unwrap();
        assert_eq!(est.te, 0.0);
        assert_eq!(est.nie, 0.0);
        assert_eq!(est.tde, 0.0);
    }

    #[test]
    fn zero_mediation_strength_gives_exact_zero_nie() {
        let cfg = ScmConfig { mediation_strength: 0.0, ..ScmConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x = ScmAssignment::sample(&cfg, &mut rng);
            let x_star = ScmAssignment::sample(&cfg, &mut rng);
            let est = estimate_effects(&cfg, &x, &x_star, 2000).unwrap();
            assert_eq!(est.nie, 0.0, "click state must not move dwell when delta = 0");
        }
    }

    #[test]
    fn deterministic_click_te_matches_closed_form() {
        // 1-d model with a saturated click score: sigmoid behaves as a step,
        // so clicks are deterministic (always for x, never for x_star).
        let cfg = ScmConfig {
            latent_dim: 1,
            click_intercept: -50.0,
            click_bias: 100.0,
            quality_noise: 0.0,
            depth_noise: 0.0,
            mediation_strength: 0.8,
            noise_sigma: 0.3,
            dwell_log_min: -50.0,
            dwell_log_max: 50.0,
            ..ScmConfig::default()
        };
        let zero = ScmAssignment {
            user_latent: vec![0.0],
            item_latent: vec![0.0],
            clickbait: true,
            quality: 0.2,
            depth: 0.4,
        };
        let x_star = ScmAssignment { clickbait: false, quality: -0.3, depth: 0.1, ..zero.clone() };
        let est = estimate_effects(&cfg, &zero, &x_star, 50_000).unwrap();
        // Log-normal means: E[exp(mu + sigma*xi)] = exp(mu + sigma^2/2).
        let half_var = cfg.noise_sigma * cfg.noise_sigma / 2.0;
        let t_x = (cfg.dwell_base + 0.2 + 0.4 + cfg.mediation_strength + half_var).exp();
        let t_star = (cfg.dwell_base - 0.3 + 0.1 + half_var).exp();
        let expected = t_x - t_star;
        assert!(
            (est.te - expected).abs() <= 4.0 * est.te_se,
            "te {} vs closed form {} (se {})",
            est.te,
            expected,
            est.te_se
        );
    }

    #[test]
    fn supervision_ratio_formats_as_impressions_per_click() {
        let mut records = Vec::new();
        for i in 0..77 {
            let clicked = i < 10;
            records.push(RawRecord {
                values: vec!["0".into()],
                clicked,
                dwell_seconds: clicked.then_some(5.0 + i as f64),
                timestamp: None,
            });
        }
        let binning = crate::binning::build_binning(&[1.0, 5.0, 20.0, 90.0], 4, 1.0).unwrap();
        let stats = dataset_stats(&records, &binning).unwrap();
        assert_eq!(stats.n_impressions, 77);
        assert_eq!(stats.n_clicks, 10);
        assert!((stats.supervision_ratio.unwrap() - 7.7).abs() < 1e-12);
        assert_eq!(stats.dwell_bin_histogram.iter().sum::<usize>(), 10);
    }

    #[test]
    fn all_clicked_gives_unit_ratio() {
        let records: Vec<RawRecord> = (0..5)
            .map(|i| RawRecord {
                values: vec!["0".into()],
                clicked: true,
                dwell_seconds: Some(2.0 * (i + 1) as f64),
                timestamp: None,
            })
            .collect();
        let binning = crate::binning::build_binning(&[1.0, 4.0, 16.0], 2, 1.0).unwrap();
        let stats = dataset_stats(&records, &binning).unwrap();
        assert_eq!(stats.supervision_ratio, Some(1.0));
        assert_eq!(stats.dwell_bin_histogram.iter().sum::<usize>(), 5);
    }
}
