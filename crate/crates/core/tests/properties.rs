mod support;

use deformtrack_core::energy::{arap_residuals, icp_residuals, total_cost, tukey_weight, EnergyWeights, IcpTerm, ResidualBlock};
use deformtrack_core::geom::{DualQuaternion, Vec3};
use deformtrack_core::matching::{preselect_inliers, reweight_distance, soft_weight, MatchSet, RansacConfig};
use deformtrack_core::solver::build_normal_equations;
use deformtrack_core::synth::rigid_matches;
use deformtrack_core::warp::{bind_template, sample_control_points, SamplingConfig, Template};
use proptest::prelude::*;
use rand::Rng;

fn flip(dq: &DualQuaternion) -> DualQuaternion {
    DualQuaternion { real: -dq.real, dual: -dq.dual }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arap_vanishes_under_a_common_rigid_motion(seed in any::<u64>()) {
        let mut rng = support::rng(seed);
        let mut graph = support::random_graph(&mut rng, 20);
        let g = DualQuaternion::from_transform(&support::random_rigid(&mut rng, 3.0, 100.0));
        for w in &mut graph.warps {
            *w = if rng.random_bool(0.5) { flip(&g) } else { g };
        }
        let weights = vec![1.0; graph.len()];
        let cost = total_cost(&arap_residuals(&graph, &weights, &EnergyWeights::default(), None)).arap;
        prop_assert!(cost < 1e-12, "{cost:e}");
    }

    #[test]
    fn rotation_cost_ignores_quaternion_sign(seed in any::<u64>(), mask in any::<u32>()) {
        let (_, graph, model) = support::random_state(seed);
        let mut flipped = graph.clone();
        for (i, w) in flipped.warps.iter_mut().enumerate() {
            if mask >> (i % 32) & 1 == 1 {
                *w = flip(w);
            }
        }
        let a = total_cost(&arap_residuals(&graph, &model.arap_weights, &model.weights, None));
        let b = total_cost(&arap_residuals(&flipped, &model.arap_weights, &model.weights, None));
        prop_assert!((a.arap_rotation - b.arap_rotation).abs() <= 1e-12 * a.arap_rotation.max(1.0));
        prop_assert!((a.arap - b.arap).abs() <= 1e-9 * a.arap.max(1.0));
    }

    #[test]
    fn tukey_is_monotone_and_cut_off(r1 in 0.0f64..30.0, r2 in 0.0f64..30.0, c in 0.5f64..20.0) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(tukey_weight(lo, c) >= tukey_weight(hi, c));
        prop_assert!(tukey_weight(hi, c) >= 0.0 && tukey_weight(lo, c) <= 1.0);
        if hi >= c {
            prop_assert_eq!(tukey_weight(hi, c), 0.0);
            prop_assert_eq!(tukey_weight(-hi, c), 0.0);
        }
    }

    #[test]
    fn match_weights_decrease_with_distance(d1 in 0.0f64..100.0, d2 in 0.0f64..100.0, h in 0.1f64..20.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(reweight_distance(lo, h) >= reweight_distance(hi, h));
        prop_assert!(soft_weight(lo, h) >= soft_weight(hi, h));
        prop_assert!((0.0..=1.0).contains(&reweight_distance(hi, h)));
        prop_assert!((0.0..=1.0).contains(&soft_weight(hi, h)));
    }

    #[test]
    fn in_plane_translation_has_zero_icp_cost(tx in -20.0f64..20.0, ty in -20.0f64..20.0) {
        let mut pts = Vec::new();
        for j in 0..8 {
            for i in 0..8 {
                pts.push(Vec3::new(i as f64 * 4.0, j as f64 * 4.0, 200.0));
            }
        }
        let normals = vec![Vec3::new(0.0, 0.0, -1.0); pts.len()];
        let t = Template::new(pts, normals).unwrap();
        let mut g = sample_control_points(&t, &SamplingConfig { radius: 9.0, connection_sigma: None }).unwrap();
        let t = bind_template(&t, &g, 4, 9.0).unwrap();
        let shift = DualQuaternion::from_translation(&Vec3::new(tx, ty, 0.0));
        g.warps.iter_mut().for_each(|w| *w = shift);
        let terms: Vec<IcpTerm> = t.points.iter().enumerate().map(|(i, p)| IcpTerm {
            point: i,
            target: *p,
            normal: Vec3::new(0.0, 0.0, -1.0),
            robust_weight: 1.0,
        }).collect();
        prop_assert_eq!(total_cost(&icp_residuals(&t, &g, &terms, None)).icp, 0.0);
    }

    #[test]
    fn normal_equations_ignore_blocks_of_other_controls(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let (template, graph, model) = support::random_state(seed);
        let pivots = graph.positions();
        let blocks = model.blocks(&template, &graph, Some(&pivots));
        let target = 0;
        let perturbed: Vec<ResidualBlock> = blocks.iter().cloned().map(|mut b| {
            if b.jacobians.iter().all(|j| j.control != target) {
                b.values.iter_mut().for_each(|v| *v *= scale);
                b.weight *= scale;
            }
            b
        }).collect();
        prop_assert_eq!(
            build_normal_equations(&blocks, target, 1e-3),
            build_normal_equations(&perturbed, target, 1e-3)
        );
    }

    #[test]
    fn preselection_is_translation_invariant(seed in any::<u64>(), sx in -512i32..512, sy in -512i32..512, sz in -512i32..512) {
        // coordinates on a 1/8 mm grid so that every shift is exact
        let snap = |v: Vec3| v.map(|c| (c * 8.0).round() / 8.0);
        let mut rng = support::rng(seed);
        let labeled = rigid_matches(&mut rng, 60, 0.4, 100.0, 15f64.to_radians(), 10.0);
        let pairs: Vec<(Vec3, Vec3)> = labeled.matches.pairs.iter().map(|&(a, b)| (snap(a), snap(b))).collect();
        let shift = Vec3::new(sx as f64, sy as f64, sz as f64) / 8.0;
        let moved: Vec<(Vec3, Vec3)> = pairs.iter().map(|&(a, b)| (a + shift, b + shift)).collect();
        let cfg = RansacConfig::default();
        let a = preselect_inliers(&MatchSet::new(pairs), &cfg);
        let b = preselect_inliers(&MatchSet::new(moved), &cfg);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.matches.weights, b.matches.weights);
                prop_assert_eq!(a.matches.preselected, b.matches.preselected);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "outcome changed under translation"),
        }
    }

    #[test]
    fn preselection_is_translation_invariant_on_general_data(seed in any::<u64>(), shift in prop::array::uniform3(-500.0f64..500.0)) {
        let mut rng = support::rng(seed);
        let labeled = rigid_matches(&mut rng, 60, 0.4, 100.0, 15f64.to_radians(), 10.0);
        let shift = Vec3::from(shift);
        let moved: Vec<(Vec3, Vec3)> = labeled.matches.pairs.iter().map(|&(a, b)| (a + shift, b + shift)).collect();
        let cfg = RansacConfig::default();
        let a = preselect_inliers(&labeled.matches, &cfg).unwrap();
        let b = preselect_inliers(&MatchSet::new(moved), &cfg).unwrap();
        for k in 0..a.matches.len() {
            prop_assert!((a.matches.weights[k] - b.matches.weights[k]).abs() < 1e-6);
        }
    }
}
