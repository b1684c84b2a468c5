//! Numerical convergence checks of the capacity limit statements: the
//! relative capacity approaches the global one along a doubly growing
//! radius pair, and the cross-interaction of condenser potentials with the
//! far field vanishes as the support grows.

use fraclab_core::capacity::{
    condenser_capacity, global_capacity, relative_capacity, GridPolicy, TargetSet,
};
use fraclab_core::energy::{locality_defect, KernelSpec, KernelTable};
use fraclab_core::grid::GridDomain;
use fraclab_core::solver::SolverTolerances;
use fraclab_core::ScalingParams;

#[test]
fn relative_capacity_converges_to_global() {
    // |cap(T) - cap(T, B_R; r)| shrinks as r grows with R/r fixed
    let kernel = KernelSpec::standard(ScalingParams::new(1, 0.25, 2.0).unwrap());
    let tol = SolverTolerances::default();
    let h = 1.0 / 32.0;
    let mut policy = GridPolicy::with_spacing(h);
    policy.ladder = Some(vec![16.0, 32.0, 64.0]);
    let cap = global_capacity(&TargetSet::ball(1.0), &kernel, &policy)
        .unwrap()
        .value;
    let mut gaps = Vec::new();
    for &r in &[4.0, 8.0, 16.0] {
        let big_r = 4.0 * r;
        let grid = GridDomain::symmetric(1, big_r * 1.25, h).unwrap();
        let table = KernelTable::build(&grid, &kernel);
        let rel = relative_capacity(&TargetSet::ball(1.0), r, big_r, &kernel, &grid, &table, &tol)
            .unwrap()
            .value;
        gaps.push((cap - rel).abs());
    }
    assert!(
        gaps[1] < gaps[0] && gaps[2] < gaps[1],
        "gaps not shrinking: {gaps:?}"
    );
}

#[test]
fn far_field_defect_of_potentials_vanishes() {
    // D(u_r, B_R x B_R^c) -> 0 for the condenser potentials as r grows
    let kernel = KernelSpec::standard(ScalingParams::new(1, 0.25, 2.0).unwrap());
    let tol = SolverTolerances::default();
    let h = 1.0 / 16.0;
    let grid = GridDomain::symmetric(1, 40.0, h).unwrap();
    let table = KernelTable::build(&grid, &kernel);
    let mut defects = Vec::new();
    for &r in &[4.0, 8.0, 16.0] {
        let pot = condenser_capacity(&TargetSet::ball(1.0), r, &kernel, &grid, &table, &tol)
            .unwrap()
            .potential;
        let big_r = 2.0 * r;
        let inside: Vec<usize> = (0..grid.n_nodes())
            .filter(|&i| grid.node_center(i)[0].abs() <= big_r)
            .collect();
        let outside: Vec<usize> = (0..grid.n_nodes())
            .filter(|&i| grid.node_center(i)[0].abs() > big_r)
            .collect();
        let d = locality_defect(&pot, &inside, &outside, &kernel, &grid, &table).unwrap();
        defects.push(d);
    }
    assert!(
        defects[1] < defects[0] && defects[2] < defects[1],
        "defects not shrinking: {defects:?}"
    );
}

#[test]
fn decreasing_radius_input_trips_ladder_guard() {
    // condenser values increase along a reversed ladder: the monotonicity
    // guard must reject it
    let kernel = KernelSpec::standard(ScalingParams::new(1, 0.25, 2.0).unwrap());
    let mut policy = GridPolicy::with_spacing(1.0 / 16.0);
    policy.ladder = Some(vec![16.0, 8.0, 4.0]);
    let err = global_capacity(&TargetSet::ball(1.0), &kernel, &policy);
    assert!(matches!(
        err,
        Err(fraclab_core::capacity::CapacityError::LadderNotMonotone(_))
    ));
}

#[test]
fn direct_method_refuses_large_free_sets() {
    use fraclab_core::energy::KernelTable;
    use fraclab_core::solver::{Method, VariationalProblem};
    let kernel = KernelSpec::standard(ScalingParams::new(1, 0.25, 2.0).unwrap());
    let grid = GridDomain::new(vec![0.0], 1.0 / 6000.0, vec![6000]).unwrap();
    let table = KernelTable::build(&grid, &kernel);
    let n = grid.n_nodes();
    let problem = VariationalProblem {
        grid: &grid,
        kernel: &kernel,
        table: &table,
        scope: None,
        pins: vec![None; n],
        box_bounds: None,
        zero_order: vec![1.0; n],
        source: vec![1.0; n],
    };
    let err = problem.solve(&SolverTolerances::default(), Method::Direct);
    assert!(err.is_err());
}
