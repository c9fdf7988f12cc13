//! Values checked against hand evaluation or independent computation.

use romopt::params::{maximin_design, ParameterSpace};
use romopt::structeval::{buckling_usage_factors, evaluate, is_buckled, PenaltyConfig, PlateGeometry, YieldThresholds};
use romopt::synthfom::{build_default_mesh, Fom};

#[test]
fn hull_grid_sizes() {
    let space = ParameterSpace::hull16(0.5);
    let levels: Vec<usize> = space.dims().iter().map(|d| d.levels()).collect();
    assert_eq!(levels, [21, 31, 31, 21, 21, 21, 21, 21, 31, 31, 31, 31, 31, 21, 27, 27]);
    let product: u128 = levels.iter().map(|&l| l as u128).product();
    assert_eq!(space.cardinality(), product);
}

#[test]
fn reference_plate_usage_factors() {
    // docs/buckling.md works this element through by hand.
    let geom = PlateGeometry::with_thickness(10.0);
    assert!((geom.euler_stress() - 37.996_907_128_362_25).abs() < 1e-9);
    let s = [-60.0, -20.0, 3.0, 40.0, -5.0, 8.0];
    let u = buckling_usage_factors(&s, &geom).unwrap();
    let want = [
        0.394_768_972_888_413_4,
        0.447_060_892_156_676_2,
        0.066_070_120_985_508_53,
        0.022_023_373_661_836_175,
        0.185_328_482_553_120_87,
        0.023_166_060_319_140_11,
        0.037_065_696_510_624_17,
        0.841_829_865_045_089_6,
        0.580_097_455_441_534_2,
        0.436_106_854_338_263_4,
        0.0,
    ];
    for (k, (a, b)) in u.iter().zip(want).enumerate() {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "factor {}: {a} vs {b}", k + 1);
    }
    assert!(!is_buckled(&s, &geom).unwrap());
    assert!(is_buckled(&[-60.0, -30.0, 3.0, 40.0, -5.0, 8.0], &geom).unwrap());
}

#[test]
fn calibrated_yield_feasibility() {
    // Roughly nine in ten space-filling designs satisfy the yield limit.
    let space = ParameterSpace::hull16(0.5);
    let fom = Fom::new(build_default_mesh(&space, 64, 18).unwrap());
    let (th, pen) = (YieldThresholds::default(), PenaltyConfig::default());
    let design = maximin_design(&space, 100, 4, 1).unwrap();
    let valid = design
        .points
        .iter()
        .filter(|p| {
            let r = fom.solve(p).unwrap();
            evaluate(&fom.mesh, p, &r.stress, &th, &pen).unwrap().n_yield as f64 <= pen.n_max_y
        })
        .count();
    assert!((80..=95).contains(&valid), "{valid}/100 designs within the yield limit");
}
