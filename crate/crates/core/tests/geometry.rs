use proptest::prelude::*;
use segbench_core::geometry::{BoundingBox, Grid, Interpolation, Mask, Mat3, RigidTransform, Vec3, Volume};

fn rotation() -> impl Strategy<Value = Mat3> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        -std::f64::consts::PI..std::f64::consts::PI,
    )
        .prop_filter("nonzero axis", |(a, _)| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
        .prop_map(|(a, angle)| {
            *RigidTransform::from_axis_angle(Vec3::from(a), angle, Vec3::zeros())
                .unwrap()
                .rotation()
        })
}

fn grid(max_dim: usize, rotated: bool) -> impl Strategy<Value = Grid> {
    (
        prop::array::uniform3(1..=max_dim),
        prop::array::uniform3(0.1f64..3.0),
        prop::array::uniform3(-100.0f64..100.0),
        rotation(),
    )
        .prop_map(move |(dims, spacing, origin, rot)| {
            let orientation = if rotated { rot } else { Mat3::identity() };
            Grid::new(dims, Vec3::from(spacing), Vec3::from(origin), orientation).unwrap()
        })
}

fn volume(max_dim: usize, rotated: bool) -> impl Strategy<Value = Volume> {
    grid(max_dim, rotated).prop_flat_map(|g| {
        let n = g.len();
        prop::collection::vec(prop_oneof![Just(0.0), -50.0f64..50.0], n)
            .prop_map(move |data| Volume::new(g.clone(), data).unwrap())
    })
}

/// A box overlapping `g`'s extent, possibly sticking out of it.
fn box_in(g: &Grid, f: [f64; 6]) -> BoundingBox {
    let e = g.extent();
    let size = e.size();
    let mut lo = Vec3::zeros();
    let mut hi = Vec3::zeros();
    for a in 0..3 {
        let x = e.min()[a] + (f[a] * 1.4 - 0.2) * size[a];
        let y = e.min()[a] + (f[a + 3] * 1.4 - 0.2) * size[a];
        lo[a] = x.min(y);
        hi[a] = x.max(y);
    }
    BoundingBox::new(lo, hi).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn voxel_world_round_trip(g in grid(50, true), c in prop::array::uniform3(-20.0f64..60.0)) {
        let v = Vec3::from(c);
        let w = g.voxel_to_world(&v);
        let back = g.voxel_to_world(&g.world_to_voxel(&w));
        prop_assert!((back - w).norm() < 1e-9);
        prop_assert!((g.world_to_voxel(&w) - v).norm() < 1e-9);
    }

    #[test]
    fn crop_selects_exactly_the_centers_inside(v in volume(9, false), f in prop::array::uniform6(0.0f64..1.0)) {
        let b = box_in(v.grid(), f);
        let g = v.grid();
        let expected: Vec<f64> = (0..g.len())
            .filter(|&i| {
                let [x, y, z] = g.voxel_index(i);
                b.contains_half_open(&g.voxel_center(x, y, z))
            })
            .map(|i| v.data()[i])
            .collect();
        match v.crop(&b) {
            Ok(c) => {
                prop_assert_eq!(c.data(), &expected[..]);
                let cg = c.grid();
                for i in 0..cg.len() {
                    let [x, y, z] = cg.voxel_index(i);
                    prop_assert!(b.contains_half_open(&cg.voxel_center(x, y, z)));
                }
            }
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn crop_is_idempotent(v in volume(9, true), f in prop::array::uniform6(0.0f64..1.0)) {
        let b = box_in(v.grid(), f);
        if let Ok(once) = v.crop(&b) {
            let twice = once.crop(&b).unwrap();
            prop_assert_eq!(twice.data(), once.data());
            prop_assert!(twice.grid().matches(once.grid()));
        }
    }

    #[test]
    fn resample_identity_and_extent(v in volume(8, true), s in prop::array::uniform3(0.2f64..2.0)) {
        let same = v.resample(v.grid().spacing(), Interpolation::Trilinear).unwrap();
        prop_assert_eq!(same.data(), v.data());
        let target = Vec3::from(s);
        if let Ok(r) = v.resample(&target, Interpolation::Nearest) {
            let (a, b) = (v.grid().extent(), r.grid().extent());
            let tol = v.grid().spacing().max().max(target.max()) * 1.7321;
            prop_assert!((a.min() - b.min()).norm() <= tol && (a.max() - b.max()).norm() <= tol);
        }
    }

    #[test]
    fn constant_fields_resample_to_constants(g in grid(6, true), s in prop::array::uniform3(0.3f64..2.0), c in -5.0f64..5.0) {
        let v = Volume::filled(g, c);
        if let Ok(r) = v.resample(&Vec3::from(s), Interpolation::Trilinear) {
            for x in r.data() {
                prop_assert!((x - c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nearest_resampled_masks_are_masks(g in grid(7, false), s in prop::array::uniform3(0.2f64..2.0), seed in any::<u64>()) {
        let m = Mask::from_fn(g, |[i, j, k], _| (seed >> ((i + 3 * j + 7 * k) % 64)) & 1 == 1);
        if let Ok(r) = m.resample(&Vec3::from(s)) {
            let same = r.resample(r.grid().spacing()).unwrap();
            prop_assert_eq!(same, r);
        }
    }

    #[test]
    fn znormalize_statistics(v in volume(10, false)) {
        let nz: Vec<usize> = (0..v.data().len()).filter(|&i| v.data()[i] != 0.0).collect();
        match v.znormalize() {
            Ok(z) => {
                let vals: Vec<f64> = nz.iter().map(|&i| z.data()[i]).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let std = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((std - 1.0).abs() < 1e-9);
                for i in 0..z.data().len() {
                    if v.data()[i] == 0.0 {
                        prop_assert_eq!(z.data()[i], 0.0);
                    }
                }
            }
            Err(_) => {
                let first = nz.first().map(|&i| v.data()[i]);
                prop_assert!(nz.iter().all(|&i| Some(v.data()[i]) == first));
            }
        }
    }

    #[test]
    fn trilinear_is_exact_for_affine_fields(
        g in grid(8, true),
        coef in prop::array::uniform4(-3.0f64..3.0),
        f in prop::array::uniform3(0.0f64..1.0),
    ) {
        let field = |p: &Vec3| coef[0] * p.x + coef[1] * p.y + coef[2] * p.z + coef[3];
        let v = Volume::from_fn(g.clone(), |_, p| field(&p));
        let dims = g.dims();
        let c = Vec3::new(
            f[0] * (dims[0] - 1) as f64,
            f[1] * (dims[1] - 1) as f64,
            f[2] * (dims[2] - 1) as f64,
        );
        let p = g.voxel_to_world(&c);
        prop_assert!((v.sample_trilinear(&p) - field(&p)).abs() < 1e-9);
    }

    #[test]
    fn nrrd_round_trip(v in volume(6, true)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.nrrd");
        v.write_nrrd(&path).unwrap();
        let back = Volume::read_nrrd(&path).unwrap();
        prop_assert!(back.grid().matches(v.grid()));
        for (a, b) in back.data().iter().zip(v.data()) {
            prop_assert_eq!(*a, *b as f32 as f64);
        }
        let m = Mask::from_fn(v.grid().clone(), |_, p| p.x > p.y);
        m.write_nrrd(&path).unwrap();
        let mb = Mask::read_nrrd(&path).unwrap();
        prop_assert!(mb.grid().matches(m.grid()));
        prop_assert_eq!(mb.data(), m.data());
    }
}

#[test]
fn spec_examples() {
    let g = Grid::axis_aligned([10, 10, 10], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
    assert_eq!(g.world_to_voxel(&Vec3::new(3.0, 4.0, 5.0)), Vec3::new(3.0, 4.0, 5.0));
    let half = Grid::axis_aligned([10, 10, 10], Vec3::repeat(0.5), Vec3::zeros()).unwrap();
    assert_eq!(half.world_to_voxel(&Vec3::repeat(1.0)), Vec3::repeat(2.0));

    let v = Volume::from_fn(g.clone(), |[i, j, k], _| (i + 10 * j + 100 * k) as f64);
    let b = BoundingBox::from_arrays([2.0; 3], [5.0; 3]).unwrap();
    let c = v.crop(&b).unwrap();
    assert_eq!(c.grid().dims(), [3, 3, 3]);
    assert_eq!(*c.grid().origin(), Vec3::repeat(2.0));
    assert_eq!(c.get(0, 0, 0), 222.0);
    assert_eq!(v.crop(&g.extent()).unwrap(), v);
}
