use crate::error::{Error, Result};
use crate::geometry::{sub_grid_offset, BoundingBox, Grid, Mask};

/// Standard margin added around the tumor box before segmentation, in mm.
pub const ROI_MARGIN_MM: f64 = 10.0;

/// Grows `tumor_box` by `margin_mm` on all six faces and clips it to `extent`.
pub fn roi_with_margin(tumor_box: &BoundingBox, margin_mm: f64, extent: &BoundingBox) -> Result<BoundingBox> {
    if !(margin_mm >= 0.0) || !margin_mm.is_finite() {
        return Err(Error::InvalidParameter(format!("margin {margin_mm} mm must be >= 0")));
    }
    tumor_box
        .expanded(margin_mm)
        .intersection(extent)
        .ok_or(Error::EmptyIntersection)
}

/// Places a mask defined on an index-aligned sub-grid back into `outer`.
pub fn embed_mask(inner: &Mask, outer: &Grid) -> Result<Mask> {
    let off = sub_grid_offset(outer, inner.grid())
        .ok_or_else(|| Error::GridMismatch("mask grid is not a sub-grid of the target".into()))?;
    let mut out = Mask::empty(outer.clone());
    let [nx, ny, nz] = inner.grid().dims();
    let data = out.data_mut();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if inner.get(i, j, k) {
                    data[outer.linear_index(off[0] + i, off[1] + j, off[2] + k)] = true;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn cube(lo: f64, hi: f64) -> BoundingBox {
        BoundingBox::from_arrays([lo; 3], [hi; 3]).unwrap()
    }

    #[test]
    fn one_centimetre_margin() {
        let r = roi_with_margin(&cube(20.0, 30.0), 10.0, &cube(0.0, 100.0)).unwrap();
        assert_eq!(r, cube(10.0, 40.0));
    }

    #[test]
    fn zero_margin_and_clamping() {
        let b = BoundingBox::from_arrays([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]).unwrap();
        assert_eq!(roi_with_margin(&b, 0.0, &cube(0.0, 10.0)).unwrap(), b);
        let r = roi_with_margin(&cube(0.0, 5.0), 10.0, &cube(0.0, 50.0)).unwrap();
        assert_eq!(r, cube(0.0, 15.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            roi_with_margin(&cube(80.0, 90.0), 5.0, &cube(0.0, 50.0)),
            Err(Error::EmptyIntersection)
        ));
        assert!(roi_with_margin(&cube(1.0, 2.0), -1.0, &cube(0.0, 50.0)).is_err());
    }

    #[test]
    fn embed_round_trips_crop() {
        let g = Grid::axis_aligned([8, 7, 6], Vec3::repeat(0.5), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let m = Mask::from_fn(g.clone(), |[i, j, k], _| (i + j + k) % 3 == 0 && i > 2 && j < 5);
        let b = BoundingBox::from_arrays([2.2, 2.0, 3.0], [4.6, 5.0, 6.0]).unwrap();
        let crop = m.crop(&b).unwrap();
        let back = embed_mask(&crop, &g).unwrap();
        assert_eq!(back.crop(&b).unwrap(), crop);
        assert_eq!(back.count(), crop.count());
    }
}
