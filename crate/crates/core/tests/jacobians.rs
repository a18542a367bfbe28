mod support;

use deformtrack_core::energy::Term;

#[test]
fn analytic_jacobians_match_central_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let (template, graph, model) = support::random_state(seed);
        let pivots = graph.positions();
        let blocks = model.blocks(&template, &graph, Some(&pivots));
        for term in [Term::Icp, Term::Orb, Term::ArapLength, Term::ArapAngle, Term::ArapRotation] {
            assert!(blocks.iter().any(|b| b.term == term && !b.jacobians.is_empty()), "seed {seed} lacks {term:?}");
        }
        let err = support::max_jacobian_error(&template, &graph, &model);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
        worst = worst.max(err);
    }
    println!("worst relative Jacobian error {worst:e}");
}
