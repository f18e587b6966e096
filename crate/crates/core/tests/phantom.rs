use proptest::prelude::*;
use segbench_core::geometry::Mask;
use segbench_core::phantom::{make_phantom, simulate_sweep, PhantomSpec, SweepSpec, MEDIAN_LESION_DIAMETER_MM};

fn spec(radii: [f64; 3], center_frac: [f64; 3], seed: u64) -> PhantomSpec {
    let extent = [2.0 * radii[0] + 6.0, 2.0 * radii[1] + 6.0, 2.0 * radii[2] + 6.0];
    PhantomSpec {
        volume_extent: extent,
        spacing: [0.5; 3],
        background_level: 100.0,
        lesion_center: std::array::from_fn(|a| radii[a] + 1.0 + center_frac[a] * 4.0),
        lesion_radii: radii,
        lesion_contrast: -40.0,
        speckle_sigma: 0.1,
        boundary_blur_sigma: 0.5,
        rng_seed: seed,
    }
}

/// Mask voxels with a face neighbour outside the mask.
fn surface_voxels(m: &Mask) -> usize {
    let [nx, ny, nz] = m.grid().dims();
    let at = |i: i64, j: i64, k: i64| {
        i >= 0 && j >= 0 && k >= 0 && (i as usize) < nx && (j as usize) < ny && (k as usize) < nz
            && m.get(i as usize, j as usize, k as usize)
    };
    let mut n = 0;
    for k in 0..nz as i64 {
        for j in 0..ny as i64 {
            for i in 0..nx as i64 {
                if at(i, j, k)
                    && !(at(i - 1, j, k) && at(i + 1, j, k) && at(i, j - 1, k) && at(i, j + 1, k) && at(i, j, k - 1) && at(i, j, k + 1))
                {
                    n += 1;
                }
            }
        }
    }
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ground_truth_volume_matches_ellipsoid(
        radii in prop::array::uniform3(5.0f64..12.0),
        frac in prop::array::uniform3(0.0f64..1.0),
    ) {
        let s = spec(radii, frac, 0);
        let ph = make_phantom(&s).unwrap();
        let analytic = s.analytic_lesion_volume_mm3();
        let measured = ph.ground_truth.volume_mm3();
        let err = (measured - analytic).abs();
        prop_assert!(err / analytic < 0.02, "relative error {}", err / analytic);
        let bound = ph.ground_truth.grid().voxel_volume_mm3() * surface_voxels(&ph.ground_truth) as f64;
        prop_assert!(err < bound);
    }

    #[test]
    fn identical_specs_give_identical_phantoms(seed in any::<u64>()) {
        let s = spec([5.0, 6.0, 5.5], [0.5; 3], seed);
        let a = make_phantom(&s).unwrap();
        let b = make_phantom(&s).unwrap();
        prop_assert_eq!(&a.volume, &b.volume);
        prop_assert_eq!(&a.ground_truth, &b.ground_truth);
        let mut sw = SweepSpec::covering(a.volume.grid(), 40, 0.5, seed);
        sw.pose_noise_sigma = (0.5, 1.0);
        prop_assert_eq!(simulate_sweep(&a.volume, &sw).unwrap(), simulate_sweep(&b.volume, &sw).unwrap());
    }
}

#[test]
fn median_lesion_diameter() {
    let mut s = spec([7.95; 3], [0.5; 3], 3);
    s.speckle_sigma = 0.0;
    s.boundary_blur_sigma = 0.0;
    let ph = make_phantom(&s).unwrap();
    assert!((s.equivalent_diameter_mm() - MEDIAN_LESION_DIAMETER_MM).abs() < 1e-12);
    assert!((ph.ground_truth.equivalent_diameter_mm() - MEDIAN_LESION_DIAMETER_MM).abs() < 0.05);
}

#[test]
fn spec_json_round_trip() {
    let s = spec([5.0, 6.0, 7.0], [0.1, 0.2, 0.3], 11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phantom.json");
    s.write_json(&path).unwrap();
    assert_eq!(PhantomSpec::read_json(&path).unwrap(), s);
}
