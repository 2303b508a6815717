use infersched::channel::ChannelModel;
use infersched::config::ExperimentConfig;
use infersched::error_model::{ar_autocovariance, inference_error_curve, ArModel};
use infersched::oracle::{random_instance, random_mapping};
use infersched::policy::PolicyContext;
use infersched::simulator::{step_aoi, Delivery};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stable_ar(coeffs: &[f64]) -> Option<ArModel> {
    ArModel::new(coeffs.to_vec(), 1.0, 0.1).ok()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn lmmse_curve_bounded_by_prior(coeffs in prop::collection::vec(-0.4f64..0.4, 1..5)) {
        if let Some(model) = stable_ar(&coeffs) {
            if model.integration() == infersched::Integration::Stationary {
                let r0 = ar_autocovariance(&model, 0).unwrap()[0];
                let curve = inference_error_curve(&model, 40).unwrap();
                for &h in curve.values() {
                    prop_assert!(h >= model.obs_noise_var() - 1e-12);
                    prop_assert!(h <= r0 + model.obs_noise_var() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn index_never_exceeds_one_step_error(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let ctx = PolicyContext::new(inst.curve.clone(), inst.channel.clone());
        for c in 0..inst.channel.states() {
            for d in 1..=inst.curve.delta_max() + 5 {
                let g = ctx.index(d, c);
                prop_assert!(g <= ctx.expected_future_error(d, c, 0) + 1e-12);
                prop_assert!(g >= inst.curve.min() - 1e-12);
            }
        }
    }

    #[test]
    fn optimal_threshold_is_smallest(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let ctx = PolicyContext::new(inst.curve.clone(), inst.channel.clone());
        let best = ctx.optimize_mapping(inst.buffer_size, None).unwrap();
        let tie = 1e-9 * (inst.curve.max() - inst.curve.min());
        for _ in 0..4 {
            let m = random_mapping(&mut rng, inst.channel.states(), inst.buffer_size);
            let beta = ctx.solve_threshold(&m, None).unwrap().beta;
            prop_assert!(best.h_opt <= beta + tie);
        }
        for (_, beta) in &best.evaluated {
            prop_assert!(best.h_opt <= beta + tie);
        }
    }

    #[test]
    fn threshold_zeroes_cost_gap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let ctx = PolicyContext::new(inst.curve.clone(), inst.channel.clone());
        let m = random_mapping(&mut rng, inst.channel.states(), inst.buffer_size);
        let range = inst.curve.max() - inst.curve.min();
        let sol = ctx.solve_threshold(&m, None).unwrap();
        if range > 0.0 {
            let lo = sol.beta - 2.0 * sol.bracket_width.max(1e-9 * range);
            let hi = sol.beta + 2.0 * sol.bracket_width.max(1e-9 * range);
            prop_assert!(ctx.epoch_cost_gap(lo.max(inst.curve.min()), &m) >= 0.0);
            prop_assert!(ctx.epoch_cost_gap(hi.min(inst.curve.max()), &m) <= 0.0);
        }
    }

    #[test]
    fn stationary_distribution_is_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let ch: &ChannelModel = &inst.channel;
        let pi = ch.stationary_distribution();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..ch.states() {
            let flow: f64 = (0..ch.states()).map(|i| pi[i] * ch.transition()[i][j]).sum();
            prop_assert!((flow - pi[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn aoi_step_rule(prev in 0usize..10_000, t in 1u32..50, b in 0usize..64) {
        prop_assert_eq!(step_aoi(prev, &[]).unwrap(), prev + 1);
        let d = Delivery { transmission: t, buffer_pos: b };
        prop_assert_eq!(step_aoi(prev, &[d]).unwrap(), t as usize + b);
        prop_assert!(step_aoi(prev, &[d, d]).is_err());
    }

    #[test]
    fn config_round_trips(
        alpha in 0.01f64..=1.0,
        buffer_size in 1usize..100,
        delta_max in 1usize..1000,
        horizon in 20_000u64..10_000_000,
        seeds in 1usize..20,
        base_seed in 0u64..(i64::MAX as u64),
        table in prop::collection::vec(0.0f64..10.0, 1..30),
    ) {
        let mut cfg = ExperimentConfig::reference();
        cfg.channel.alpha = Some(alpha);
        cfg.policy.buffer_size = buffer_size;
        cfg.policy.delta_max = delta_max;
        cfg.simulation.horizon = horizon;
        cfg.simulation.seeds = seeds;
        cfg.simulation.base_seed = base_seed;
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.config_hash().unwrap(), cfg.config_hash().unwrap());

        cfg.source.ar = None;
        cfg.source.h_table = Some(table);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn reference_mapping_uses_stale_samples() {
    let curve = inference_error_curve(&ArModel::reference_ar63(), 500).unwrap();
    let channel = ChannelModel::reference(0.2).unwrap();
    let ctx = PolicyContext::new(curve, channel);
    let sol = ctx.optimize_mapping(60, None).unwrap();
    let freshest = ctx
        .solve_threshold(&infersched::BufferMapping::freshest(2, 60).unwrap(), None)
        .unwrap();
    assert_eq!(sol.mapping.positions(), &[46, 26]);
    assert!(sol.h_opt < freshest.beta);
}
