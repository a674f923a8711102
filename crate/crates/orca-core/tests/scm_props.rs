//! Properties of the synthetic generator and the mediation oracle: the
//! effect decomposition identity, mediation monotonicity, and the sign of the
//! planted item-level CTR/dwell shortcut.

use orca_core::scm::{
    estimate_effects, generate_dataset, item_ctr_dwell_correlation, ScmAssignment, ScmConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn decomposition_identity_holds_across_configs_and_seeds() {
    for seed in [1u64, 7, 42] {
        for delta in [0.0, 0.5, 1.3] {
            let cfg = ScmConfig { seed, mediation_strength: delta, ..ScmConfig::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) + 5);
            for _ in 0..3 {
                let x = ScmAssignment::sample(&cfg, &mut rng);
                let x_star = ScmAssignment::sample(&cfg, &mut rng);
                let est = estimate_effects(&cfg, &x, &x_star, 4000).unwrap();
                let combined_se =
                    (est.te_se.powi(2) + est.nie_se.powi(2) + est.tde_se.powi(2)).sqrt();
                let gap = (est.te - (est.nie + est.tde)).abs();
                assert!(
                    gap <= 4.0 * combined_se.max(1e-12),
                    "identity violated: gap {gap}, se {combined_se}"
                );
            }
        }
    }
}

#[test]
fn mediation_grows_strictly_with_its_strength() {
    // Fixed assignments with the actual state more clickable than the
    // counterfactual one, evaluated on a fixed oracle seed.
    let base = ScmConfig { seed: 404, ..ScmConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut x = ScmAssignment::sample(&base, &mut rng);
    let mut x_star = ScmAssignment::sample(&base, &mut rng);
    x.clickbait = true;
    x_star.clickbait = false;

    let mut last = f64::NEG_INFINITY;
    for delta in [0.0, 0.5, 1.0] {
        let cfg = ScmConfig { mediation_strength: delta, ..base.clone() };
        let est = estimate_effects(&cfg, &x, &x_star, 20_000).unwrap();
        if delta == 0.0 {
            assert_eq!(est.nie, 0.0, "no click effect on dwell at zero strength");
        }
        assert!(
            est.nie > last,
            "nie {} at delta {delta} did not exceed {last}",
            est.nie
        );
        last = est.nie;
    }
}

#[test]
fn planted_shortcut_flips_the_item_level_correlation_sign() {
    // No clickbait segment: no shortcut, correlation within noise of zero or
    // positive. Planted segment: clearly negative.
    let clean_cfg = ScmConfig { clickbait_fraction: 0.0, seed: 9, ..ScmConfig::default() };
    let clean = generate_dataset(&clean_cfg, 100_000).unwrap();
    let item_field = clean.schema.field_index("item_id").unwrap();
    let corr_clean = item_ctr_dwell_correlation(&clean.records, item_field).unwrap();
    assert!(corr_clean > -0.05, "unplanted correlation {corr_clean}");

    let shortcut_cfg = ScmConfig {
        clickbait_fraction: 0.3,
        click_bias: 2.0,
        quality_penalty: 2.0,
        seed: 9,
        ..ScmConfig::default()
    };
    let planted = generate_dataset(&shortcut_cfg, 100_000).unwrap();
    let corr_planted = item_ctr_dwell_correlation(&planted.records, item_field).unwrap();
    assert!(corr_planted < -0.05, "planted correlation {corr_planted}");
}

#[test]
fn clickbait_items_draw_more_clicks_and_less_dwell() {
    let cfg = ScmConfig { seed: 33, ..ScmConfig::default() };
    let ds = generate_dataset(&cfg, 60_000).unwrap();
    let mut stats = [(0usize, 0usize, 0.0f64); 2]; // (imps, clicks, dwell sum)
    for r in &ds.records {
        let item: usize = r.values[1].parse().unwrap();
        let b = ds.items[item].clickbait as usize;
        stats[b].0 += 1;
        if r.clicked {
            stats[b].1 += 1;
            stats[b].2 += r.dwell_seconds.unwrap();
        }
    }
    let ctr = |s: (usize, usize, f64)| s.1 as f64 / s.0 as f64;
    let mean_dwell = |s: (usize, usize, f64)| s.2 / s.1 as f64;
    assert!(ctr(stats[1]) > 1.5 * ctr(stats[0]), "clickbait must lift clicks");
    assert!(
        mean_dwell(stats[1]) < 0.5 * mean_dwell(stats[0]),
        "clickbait must depress dwell"
    );
}
