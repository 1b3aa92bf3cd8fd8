use image::{GrayImage, Luma};
use proptest::prelude::*;

use rgbt_core::data::{warp_thermal, Affine};

fn textured(side: u32) -> GrayImage {
    GrayImage::from_fn(side, side, |x, y| Luma([((x * 7 + y * 13 + x * y) % 256) as u8]))
}

/// Brute-force translation with border replication.
fn shifted(img: &GrayImage, dx: i64, dy: i64) -> GrayImage {
    let (w, h) = img.dimensions();
    GrayImage::from_fn(w, h, |x, y| {
        let sx = (i64::from(x) - dx).clamp(0, i64::from(w) - 1) as u32;
        let sy = (i64::from(y) - dy).clamp(0, i64::from(h) - 1) as u32;
        *img.get_pixel(sx, sy)
    })
}

fn translation(tx: f64, ty: f64) -> Affine {
    Affine {
        translate_x: tx,
        translate_y: ty,
        ..Affine::IDENTITY
    }
}

#[test]
fn five_percent_of_64_pixels_is_a_three_pixel_shift() {
    let img = textured(64);
    let a = translation(0.05, -0.05);
    assert_eq!(a.shift_pixels(64, 64), (3.0, -3.0));
    assert_eq!(warp_thermal(&img, &a), shifted(&img, 3, -3));
}

#[test]
fn quarter_turn_matches_the_image_crate() {
    let img = textured(64);
    let a = Affine {
        rotation_deg: 90.0,
        ..Affine::IDENTITY
    };
    assert_eq!(warp_thermal(&img, &a), image::imageops::rotate90(&img));
}

#[test]
fn translation_round_trips_on_the_interior() {
    let img = textured(64);
    let there = warp_thermal(&img, &translation(0.05, 0.03));
    let back = warp_thermal(&there, &translation(-0.05, -0.03));
    for y in 0..64 - 2 {
        for x in 0..64 - 3 {
            assert_eq!(back.get_pixel(x, y), img.get_pixel(x, y), "({x}, {y})");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn integer_translations_match_brute_force(side in 8u32..48, fx in -0.2f64..0.2, fy in -0.2f64..0.2) {
        let img = textured(side);
        let a = translation(fx, fy);
        let (dx, dy) = a.shift_pixels(side, side);
        prop_assert_eq!(warp_thermal(&img, &a), shifted(&img, dx as i64, dy as i64));
    }
}
