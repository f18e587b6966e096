use proptest::prelude::*;
use segbench_core::geometry::{BoundingBox, Grid, Mask, ProbabilityMap, Vec3, Volume};
use segbench_core::metrics::{dice, pr_roc_curves, select_threshold_max_f1};
use segbench_core::phantom::{make_phantom, PhantomSpec};
use segbench_core::segmentation::{
    binarize, region_grow, roi_with_margin, segment, Connectivity, PredictorHandle, SeedPoint, ROI_MARGIN_MM,
};

fn boxes() -> impl Strategy<Value = (BoundingBox, BoundingBox)> {
    (
        prop::array::uniform3(-50.0f64..50.0),
        prop::array::uniform3(0.0f64..60.0),
        prop::array::uniform3(-80.0f64..80.0),
        prop::array::uniform3(0.0f64..40.0),
    )
        .prop_map(|(emin, esize, bmin, bsize)| {
            let e = BoundingBox::from_arrays(emin, std::array::from_fn(|a| emin[a] + esize[a])).unwrap();
            let b = BoundingBox::from_arrays(bmin, std::array::from_fn(|a| bmin[a] + bsize[a])).unwrap();
            (b, e)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn margin_expands_each_face_then_clips((b, e) in boxes(), m in 0.0f64..30.0) {
        match roi_with_margin(&b, m, &e) {
            Ok(r) => {
                for a in 0..3 {
                    prop_assert_eq!(r.min()[a], (b.min()[a] - m).max(e.min()[a]));
                    prop_assert_eq!(r.max()[a], (b.max()[a] + m).min(e.max()[a]));
                }
            }
            Err(_) => prop_assert!((0..3).any(|a| b.min()[a] - m > e.max()[a] || b.max()[a] + m < e.min()[a])),
        }
    }

    #[test]
    fn margin_is_monotone_and_zero_is_idempotent((b, e) in boxes(), m1 in 0.0f64..20.0, dm in 0.0f64..20.0) {
        if let Ok(small) = roi_with_margin(&b, m1, &e) {
            let large = roi_with_margin(&b, m1 + dm, &e).unwrap();
            for a in 0..3 {
                prop_assert!(large.min()[a] <= small.min()[a] && large.max()[a] >= small.max()[a]);
            }
            prop_assert_eq!(roi_with_margin(&small, 0.0, &e).unwrap(), small);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn region_growing_is_monotone_in_tolerance(
        data in prop::collection::vec(0.0f64..10.0, 6 * 6 * 6),
        seed in prop::array::uniform3(0usize..6),
        t1 in 0.0f64..5.0,
        dt in 0.0f64..5.0,
        six in any::<bool>(),
    ) {
        let g = Grid::axis_aligned([6, 6, 6], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let v = Volume::new(g.clone(), data).unwrap();
        let s = [SeedPoint::new(g.voxel_center(seed[0], seed[1], seed[2]))];
        let conn = if six { Connectivity::Six } else { Connectivity::TwentySix };
        let a = region_grow(&v, &s, t1, conn).unwrap();
        let b = region_grow(&v, &s, t1 + dt, conn).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| !*x || *y));
        prop_assert!(a.get(seed[0], seed[1], seed[2]));
    }

    #[test]
    fn binarize_is_monotone(
        data in prop::collection::vec(0.0f64..=1.0, 64),
        t1 in 0.0f64..=1.0,
        t2 in 0.0f64..=1.0,
    ) {
        let g = Grid::axis_aligned([4, 4, 4], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let p = ProbabilityMap::new(g, data).unwrap();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let a = binarize(&p, lo).unwrap();
        let b = binarize(&p, hi).unwrap();
        prop_assert!(b.data().iter().zip(a.data()).all(|(x, y)| !*x || *y));
    }
}

#[test]
fn margin_worked_example() {
    let b = BoundingBox::from_arrays([20.0; 3], [30.0; 3]).unwrap();
    let e = BoundingBox::from_arrays([0.0; 3], [100.0; 3]).unwrap();
    let r = roi_with_margin(&b, ROI_MARGIN_MM, &e).unwrap();
    assert_eq!(r, BoundingBox::from_arrays([10.0; 3], [40.0; 3]).unwrap());
}

fn two_valued(contrast: f64) -> (PhantomSpec, Volume, Mask) {
    let spec = PhantomSpec {
        volume_extent: [40.0; 3],
        spacing: [0.5; 3],
        background_level: 100.0,
        lesion_center: [19.0, 21.0, 20.0],
        lesion_radii: [7.0, 6.0, 8.0],
        lesion_contrast: contrast,
        speckle_sigma: 0.0,
        boundary_blur_sigma: 0.0,
        rng_seed: 0,
    };
    let ph = make_phantom(&spec).unwrap();
    (spec, ph.volume, ph.ground_truth)
}

#[test]
fn region_growing_recovers_two_valued_lesion() {
    let (spec, v, gt) = two_valued(50.0);
    let seed = [SeedPoint::new(Vec3::from(spec.lesion_center))];
    let m = region_grow(&v, &seed, 25.0, Connectivity::TwentySix).unwrap();
    assert_eq!(dice(&m, &gt).unwrap(), 1.0);
    let bg = region_grow(&v, &[SeedPoint::new(Vec3::new(1.0, 1.0, 1.0))], 25.0, Connectivity::TwentySix).unwrap();
    assert_eq!(dice(&bg, &gt).unwrap(), 0.0);
}

#[test]
fn threshold_model_at_max_f1_recovers_lesion() {
    for contrast in [50.0, -50.0] {
        let (spec, v, gt) = two_valued(contrast);
        let roi = roi_with_margin(&spec.lesion_box(), ROI_MARGIN_MM, &v.grid().extent()).unwrap();
        let hint = spec.lesion_box().center();
        let h: PredictorHandle = "threshold_model".parse().unwrap();
        let seg = segment(&h, &v, &roi, &hint, 0.5).unwrap();
        let gt_crop = gt.crop(&roi).unwrap();
        let scores: Vec<(f64, bool)> = seg
            .probability
            .data()
            .iter()
            .zip(gt_crop.data())
            .map(|(p, l)| (*p, *l))
            .collect();
        let curves = pr_roc_curves(&scores).unwrap();
        let best = select_threshold_max_f1(&curves.points).unwrap();
        assert_eq!(best.f1, 1.0);
        let tuned = segment(&h, &v, &roi, &hint, best.threshold).unwrap();
        assert_eq!(dice(&tuned.mask, &gt_crop).unwrap(), 1.0);
    }
}

#[test]
fn region_growing_predictor_on_two_valued_lesion() {
    let (spec, v, gt) = two_valued(-45.0);
    let roi = roi_with_margin(&spec.lesion_box(), ROI_MARGIN_MM, &v.grid().extent()).unwrap();
    let h: PredictorHandle = "region_growing".parse().unwrap();
    let seg = segment(&h, &v, &roi, &spec.lesion_box().center(), 0.5).unwrap();
    assert_eq!(dice(&seg.mask, &gt.crop(&roi).unwrap()).unwrap(), 1.0);
}
