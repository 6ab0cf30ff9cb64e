use proptest::prelude::*;
use vortex_perch::config::{Mode, ScenarioConfig, WingMode};
use vortex_perch::vehicle::AeroModel;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_then_parse_is_a_fixed_point(
        rho in 0.1f64..2.0,
        dt in 1e-4f64..0.02,
        n_bound in 4usize..40,
        speed in 1.0f64..15.0,
        theta in -0.5f64..0.5,
        samples in 1usize..300,
        seeds in 1usize..20,
        jitter in 0.0f64..0.2,
        target_x in 0.5f64..10.0,
        core in proptest::option::of(1e-4f64..0.05),
        merge in any::<bool>(),
        wing in prop_oneof![Just(WingMode::Fixed), Just(WingMode::Morphing)],
        model in prop_oneof![Just(AeroModel::QuasiSteady), Just(AeroModel::Unsteady)],
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.fluid.rho = rho;
        cfg.fluid.dt = dt;
        cfg.fluid.n_bound = n_bound;
        cfg.fluid.core_radius = core;
        cfg.fluid.merge.enabled = merge;
        cfg.launch.speed = speed;
        cfg.launch.theta = theta;
        cfg.planner.samples = samples;
        cfg.ablation.seeds = seeds;
        cfg.ablation.position_jitter = jitter;
        cfg.target.x = target_x;
        cfg.mode = Mode { wing, model };
        let text = cfg.to_toml();
        let back = ScenarioConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn all_four_modes_are_accepted() {
    for mode in Mode::ALL {
        let text = format!(
            "[mode]\nwing = \"{}\"\nmodel = \"{}\"\n",
            mode.label().split('/').next().unwrap(),
            mode.label().split('/').nth(1).unwrap()
        );
        let cfg = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(cfg.mode, mode);
        cfg.sim_config().unwrap();
    }
}
