use proptest::prelude::*;

use dtomo::instance::{build_lattice_rays, generate_random_instance, GeneratorConfig};
use dtomo::pipeline::{solve, Method, SolveConfig};
use dtomo::{Direction, Labeling, Pairwise, TomographyInstance};

fn config() -> SolveConfig {
    let mut c = SolveConfig {
        deterministic: true,
        ..SolveConfig::default()
    };
    c.ascent.max_iters = 200;
    c
}

fn instance(w: usize, h: usize, k: usize, potts: bool, truth: &[usize]) -> TomographyInstance {
    let pairwise = if potts { Pairwise::Potts(1.0) } else { Pairwise::AbsDiff(1.0) };
    let rays = build_lattice_rays(w, h, &[Direction::Horizontal, Direction::Vertical, Direction::DiagDown]);
    let mut inst = TomographyInstance::new(w, h, k, None, pairwise, rays).unwrap();
    inst.set_targets_from(&Labeling(truth.to_vec()));
    inst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Any feasible labeling's energy bounds both duals from above, CTG
    /// never ends below STD, and a reported labeling is feasible.
    #[test]
    fn bounds_are_valid_and_ordered(
        (w, h, k, truth) in (2usize..=3, 2usize..=3, 2usize..=3)
            .prop_flat_map(|(w, h, k)| (Just(w), Just(h), Just(k), prop::collection::vec(0..k, w * h))),
        potts in any::<bool>(),
    ) {
        let inst = instance(w, h, k, potts, &truth);
        let gt = inst.evaluate_energy(&Labeling(truth.clone()));
        let std = solve(&inst, Method::Std, &config());
        let ctg = solve(&inst, Method::Ctg, &config());
        prop_assert!(std.lower_bound <= gt + 1e-9);
        prop_assert!(ctg.lower_bound <= gt + 1e-9);
        prop_assert!(ctg.lower_bound >= std.lower_bound - 1e-6);
        for r in [&std, &ctg] {
            if let Some(l) = &r.labeling {
                prop_assert!(inst.is_feasible(l));
                prop_assert_eq!(r.primal_value, Some(inst.evaluate_energy(l)));
                prop_assert!(r.primal_value.unwrap() >= r.lower_bound - 1e-9);
            }
        }
    }

    /// Instances survive a JSON round trip unchanged.
    #[test]
    fn instance_json_round_trip(seed in 0u64..1000, w in 1usize..6, h in 1usize..6, k in 2usize..5) {
        let dirs = Direction::parse_set("hvdu").unwrap();
        let (inst, truth) = generate_random_instance(&GeneratorConfig::new(seed, w, h, k, dirs)).unwrap();
        prop_assert!(inst.is_feasible(&truth));
        let back = TomographyInstance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(back, inst);
    }
}
