mod common;

use kspde::backward_pde::{duality_sides, solve_backward, BackwardProblem};
use kspde::coefficients::{
    check_strengthened_coercivity, check_superparabolic, CoefficientSet, CorrelationSign, Samples,
};
use kspde::expr::{parse_expr, Expression};
use kspde::forward_spde::{solve_forward, HistoryMode, SchemeOptions, SpdeProblem};
use kspde::grid::{Field, SpaceGrid, TimeGrid};
use kspde::noise::{sample_common_path, NoisePath};
use kspde::sde::{estimate_representation_rhs, Interval, McSetup, PathOptions};
use proptest::prelude::*;

fn expr(s: String) -> Expression {
    parse_expr(&s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discrete_duality_is_exact(
        b0 in 0.2f64..0.8, b1 in -0.1f64..0.1, f0 in -1.0f64..1.0, l0 in -1.0f64..1.0,
        theta in 0.5f64..=1.0, n_cells in 5usize..25, n_steps in 5usize..60,
        phi_c in -2.0f64..2.0, xi_c in -2.0f64..2.0, k in 1.0f64..4.0,
    ) {
        let g = SpaceGrid::new(-0.5, 1.0, n_cells).unwrap();
        let c = CoefficientSet::new(
            expr(format!("{b0}+{b1}*sin(3*x+t)")),
            expr(format!("{f0}*cos(x)")),
            expr(format!("{l0}*x")),
            vec![],
            vec![],
        ).unwrap();
        let fwd = SpdeProblem::new(
            c.clone(),
            expr(format!("{phi_c}*exp(-x)+t")),
            vec![],
            Field::from_fn(g, |x| (k * x).sin()).unwrap(),
        ).unwrap();
        let bwd = BackwardProblem::new(
            c,
            expr(format!("{xi_c}*x*x-t")),
            Field::from_fn(g, |x| (k * x).cos()).unwrap(),
        ).unwrap();
        let time = TimeGrid::new(0.0, 0.3, n_steps).unwrap();
        let noise = NoisePath::from_increments(time, 0, vec![]).unwrap();
        let opts = SchemeOptions { theta, cfl_override: true, ..SchemeOptions::default() };
        let path = solve_forward(&fwd, &noise, &opts, HistoryMode::Full).unwrap();
        let sol = solve_backward(&bwd, &time, theta).unwrap();
        let (l, r) = duality_sides(&fwd, &path, &bwd, &sol).unwrap();
        prop_assert!((l - r).abs() <= 1e-11 * (1.0 + l.abs()), "{} vs {}", l, r);
    }

    #[test]
    fn forward_solution_is_linear(
        alpha in -3.0f64..3.0, beta in 0.0f64..0.9, bar in -0.5f64..0.5, seed in 0u64..1000,
    ) {
        let g = SpaceGrid::new(0.0, 1.0, 20).unwrap();
        let c = CoefficientSet::constant(0.5, 0.1, 0.0, &[beta], &[bar]).unwrap();
        let time = TimeGrid::new(0.0, 0.1, 50).unwrap();
        let noise = sample_common_path(seed, 0, time, 1);
        let run = |f: &Field| {
            let p = SpdeProblem::homogeneous(c.clone(), f.clone()).unwrap();
            solve_forward(&p, &noise, &SchemeOptions::default(), HistoryMode::Terminal)
                .unwrap().terminal().clone()
        };
        let f1 = Field::from_fn(g, |x| x * (1.0 - x)).unwrap();
        let f2 = Field::from_fn(g, |x| (7.0 * x).sin()).unwrap();
        let lhs = run(&f1.axpy(alpha, &f2).unwrap());
        let rhs = run(&f1).axpy(alpha, &run(&f2)).unwrap();
        for (a, b) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn strengthened_margin_never_exceeds_superparabolic(
        b0 in 0.1f64..1.0, b1 in 0.0f64..0.5, beta1 in -1.0f64..1.0, beta2 in -1.0f64..1.0,
    ) {
        let c = CoefficientSet::new(
            expr(format!("{b0}+{b1}*x*x")),
            Expression::constant(0.0),
            Expression::constant(0.0),
            vec![expr(format!("{beta1}")), expr(format!("{beta2}*cos(x)"))],
            vec![Expression::constant(0.0), Expression::constant(0.0)],
        ).unwrap();
        let g = SpaceGrid::new(0.0, 1.0, 10).unwrap();
        let t = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let s = Samples::for_set(&c, &g, &t, 0, 0);
        let main1 = check_superparabolic(&c, &s).unwrap();
        let main1s = check_strengthened_coercivity(&c, &s).unwrap();
        if main1s.holds {
            prop_assert!(main1.holds);
        }
        prop_assert!(main1s.delta <= main1.delta + 1e-12);
    }
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let sde = common::sde(
        &CoefficientSet::constant(0.5, 0.1, -0.2, &[0.4], &[0.2]).unwrap(),
        CorrelationSign::Minus,
    );
    let setup = McSetup {
        domain: Interval::new(0.0, 1.0).unwrap(),
        time: TimeGrid::new(0.0, 0.2, 100).unwrap(),
        seed: 99,
        path: PathOptions {
            bridge: true,
            retain_trajectory: false,
        },
    };
    let xi = parse_expr("x").unwrap();
    let psi = parse_expr("sin(pi*x)").unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_representation_rhs(0.3, 0.0, &xi, &psi, &sde, 3000, &setup).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.mean.to_bits(), four.mean.to_bits());
    assert_eq!(one.std_error.to_bits(), four.std_error.to_bits());
}
