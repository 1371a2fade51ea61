use proptest::prelude::*;
use swinct_ct::slicing::{
    crop, crop_nodule, hu_window, slice_triaxial, slice_triaxial_at, Axis, Cube, Label, SliceLabel, AIR_HU, CROP_SIZE,
};
use swinct_ct::volume::Volume;

fn patterned(dims: [usize; 3]) -> Volume {
    let mut voxels = Vec::new();
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                voxels.push((z as i16) * 13 - (y as i16) * 7 + (x as i16) * 3 - 500);
            }
        }
    }
    Volume::new("p", dims, [1.0; 3], voxels).unwrap()
}

#[test]
fn window_maps_endpoints_and_clamps() {
    assert_eq!(hu_window(-1000.0), 0.0);
    assert_eq!(hu_window(400.0), 1.0);
    assert!((hu_window(-300.0) - 0.5).abs() < 1e-6);
    assert_eq!(hu_window(-3000.0), 0.0);
    assert_eq!(hu_window(3000.0), 1.0);
}

proptest! {
    #[test]
    fn window_is_monotone(a in -4000.0f32..4000.0, b in -4000.0f32..4000.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(hu_window(lo) <= hu_window(hi));
    }

    #[test]
    fn crop_is_always_full_size(z in 0usize..60, y in 0usize..60, x in 0usize..60) {
        let v = patterned([60, 60, 60]);
        let cube = crop_nodule(&v, [z, y, x]);
        prop_assert_eq!(cube.size, CROP_SIZE);
        prop_assert_eq!(cube.data.len(), CROP_SIZE.pow(3));
        prop_assert_eq!(cube.get(24, 24, 24), v.get(z, y, x));
    }
}

#[test]
fn deep_center_needs_no_fill() {
    let v = Volume::new("u", [100, 100, 100], [1.0; 3], vec![5; 1_000_000]).unwrap();
    let cube = crop_nodule(&v, [50, 50, 50]);
    assert!(cube.data.iter().all(|&x| x == 5));
}

#[test]
fn corner_center_fills_all_but_one_octant() {
    let v = Volume::new("u", [100, 100, 100], [1.0; 3], vec![5; 1_000_000]).unwrap();
    let cube = crop_nodule(&v, [0, 0, 0]);
    let fill = cube.data.iter().filter(|&&x| x == AIR_HU).count();
    assert_eq!(fill, 48 * 48 * 48 - 24 * 24 * 24);
    assert_eq!(fill, 96768);
}

#[test]
fn crop_copies_the_right_voxels() {
    let v = patterned([30, 31, 32]);
    let c = [10, 20, 5];
    let cube = crop(&v.voxels, v.dims, c, 8, i16::MIN);
    for dz in 0..8 {
        for dy in 0..8 {
            for dx in 0..8 {
                let (z, y, x) = (c[0] as i64 - 4 + dz, c[1] as i64 - 4 + dy, c[2] as i64 - 4 + dx);
                let expected = if x < 0 { i16::MIN } else { v.get(z as usize, y as usize, x as usize) };
                assert_eq!(cube.get(dz as usize, dy as usize, dx as usize), expected);
            }
        }
    }
}

#[test]
fn triaxial_slicing_yields_144_slices() {
    let v = patterned([60, 60, 60]);
    let cube = crop_nodule(&v, [30, 30, 30]);
    let recs = slice_triaxial(&cube, SliceLabel::Class(1), "p", [30, 30, 30]).unwrap();
    assert_eq!(recs.len(), 144);
    for axis in Axis::ALL {
        assert_eq!(recs.iter().filter(|r| r.provenance.axis == axis).count(), 48);
    }
    assert!(recs.iter().all(|r| r.label == Label::Class(1) && r.height == 48 && r.width == 48));
}

#[test]
fn z_slice_is_windowed_direct_indexing() {
    let v = patterned([60, 60, 60]);
    let cube = crop_nodule(&v, [30, 30, 30]);
    let recs = slice_triaxial_at(&cube, SliceLabel::Class(0), "p", [30, 30, 30], &[7]).unwrap();
    let z = recs.iter().find(|r| r.provenance.axis == Axis::Z).unwrap();
    for y in 0..48 {
        for x in 0..48 {
            let hu = v.get(30 - 24 + 7, 30 - 24 + y, 30 - 24 + x);
            assert_eq!(z.image[y * 48 + x], hu_window(hu as f32));
        }
    }
    let y_slice = recs.iter().find(|r| r.provenance.axis == Axis::Y).unwrap();
    assert_eq!(y_slice.image[3 * 48 + 9], hu_window(cube.get(3, 7, 9) as f32));
    let x_slice = recs.iter().find(|r| r.provenance.axis == Axis::X).unwrap();
    assert_eq!(x_slice.image[3 * 48 + 9], hu_window(cube.get(3, 9, 7) as f32));
    let rgb = z.rgb();
    assert_eq!(rgb.len(), 48 * 48 * 3);
    assert!(rgb.chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]));
}

#[test]
fn segmentation_keeps_only_slices_with_nodule_pixels() {
    let v = patterned([60, 60, 60]);
    let cube = crop_nodule(&v, [30, 30, 30]);
    let empty = Cube { size: 48, data: vec![0u8; 48 * 48 * 48] };
    assert!(slice_triaxial(&cube, SliceLabel::Mask(&empty), "p", [30; 3]).unwrap().is_empty());

    let mut data = vec![0u8; 48 * 48 * 48];
    for z in 20..23 {
        for y in 10..12 {
            data[(z * 48 + y) * 48 + 30] = 1;
        }
    }
    let mask = Cube { size: 48, data };
    let recs = slice_triaxial(&cube, SliceLabel::Mask(&mask), "p", [30; 3]).unwrap();
    // 3 z-slices, 2 y-slices, 1 x-slice contain the block
    assert_eq!(recs.len(), 6);
    for r in &recs {
        let Label::Mask(m) = &r.label else { panic!("mask label") };
        assert_eq!(m.iter().filter(|&&p| p == 1).count(), match r.provenance.axis {
            Axis::Z => 2,
            Axis::Y => 3,
            Axis::X => 6,
        });
    }

    let small = Cube { size: 8, data: vec![0u8; 512] };
    assert!(slice_triaxial(&cube, SliceLabel::Mask(&small), "p", [30; 3]).is_err());
    assert!(slice_triaxial_at(&cube, SliceLabel::Class(0), "p", [30; 3], &[48]).is_err());
}

#[test]
fn resize_keeps_range_and_mask_values() {
    let v = patterned([60, 60, 60]);
    let cube = crop_nodule(&v, [30, 30, 30]);
    let mut data = vec![0u8; 48usize.pow(3)];
    data[(24 * 48 + 24) * 48 + 24] = 1;
    let mask = Cube { size: 48, data };
    let rec = slice_triaxial_at(&cube, SliceLabel::Mask(&mask), "p", [30; 3], &[24]).unwrap().remove(0);
    let big = rec.resized(64);
    assert_eq!((big.height, big.width, big.image.len()), (64, 64, 4096));
    assert!(big.image.iter().all(|&p| (0.0..=1.0).contains(&p)));
    let Label::Mask(m) = &big.label else { panic!() };
    assert!(m.iter().all(|&p| p <= 1) && m.contains(&1));
    assert_eq!(rec.resized(48), rec);
}
