mod common;

use common::*;
use enfield::data::FieldSample;
use enfield::decoder::{condition_latents, decode, DecoderParams};
use enfield::encoder::{encode, init_latent_positions, BoundingBox, EncoderState};
use enfield::eval::spearman;
use enfield::field::{enf_forward, shift_rows};
use enfield::Tensor;
use proptest::prelude::*;

fn rel(a: &Tensor, b: &Tensor) -> f64 {
    a.max_abs_diff(b) / a.max_abs().max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn field_commutes_with_translation(seed in 0u64..1_000_000, dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
        let mut r = rng(seed);
        let cfg = tiny_field(2, 3, 0.5);
        let p = random_field(&cfg, &mut r);
        let z = random_latents(4, 3, &mut r);
        let q = random_queries(10, &mut r);
        let d = [dx, dy];
        let a = enf_forward(&z, &q, &p).unwrap();
        let b = enf_forward(&z.shifted(&d), &q.shifted(&d), &p).unwrap();
        prop_assert!(rel(&a, &b) < 1e-8);
    }

    #[test]
    fn decoder_commutes_with_translation(seed in 0u64..1_000_000, dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
        let mut r = rng(seed);
        let cfg = tiny_field(1, 5, 0.2);
        let dec = DecoderParams::init(&cfg, 2, 4, &mut r).unwrap();
        let z = random_latents(3, 3, &mut r);
        let q = random_queries(8, &mut r);
        let mu = [0.3, -0.7];
        let d = [dx, dy];
        let a = decode(&condition_latents(&z, &mu), &q, &dec).unwrap();
        let b = decode(&condition_latents(&z.shifted(&d), &mu), &q.shifted(&d), &dec).unwrap();
        prop_assert!(rel(&a, &b) < 1e-8);
    }

    #[test]
    fn spearman_ignores_monotone_maps(xs in prop::collection::vec(-10.0f64..10.0, 3..30), k in 0.1f64..5.0) {
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        prop_assume!(xs.iter().any(|x| *x != xs[0]) && ys.iter().any(|y| *y != ys[0]));
        let warped: Vec<f64> = xs.iter().map(|x| (k * x).exp()).collect();
        let a = spearman(&xs, &ys).unwrap();
        let b = spearman(&warped, &ys).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }
}

#[test]
fn encoding_a_shifted_sample_gives_the_same_features() {
    // shift the points and the latent grid together: the fitted features
    // and the reconstruction do not change
    let mut r = rng(5);
    let cfg = tiny_field(1, 3, 0.4);
    let params = random_field(&cfg, &mut r);
    let coords = Tensor::uniform(40, 2, -1.0, 1.0, &mut r);
    let input = coords.map(|v| v.sin());
    let input = Tensor::column((0..40).map(|i| input.get(i, 0) + input.get(i, 1)).collect());
    let sample = FieldSample::new(
        coords.clone(),
        input.clone(),
        input.clone(),
        vec![],
        vec![false; 40],
    )
    .unwrap();
    let pos = init_latent_positions(&BoundingBox::square(0.8), 4).unwrap();
    let d = [0.37, -1.4];
    let a = encode(
        &sample,
        &EncoderState::new(params.clone(), pos.clone(), 3, 1.0).unwrap(),
    )
    .unwrap();
    let moved = FieldSample {
        coords: shift_rows(&coords, &d),
        ..sample.clone()
    };
    let b = encode(
        &moved,
        &EncoderState::new(params, shift_rows(&pos, &d), 3, 1.0).unwrap(),
    )
    .unwrap();
    assert!(rel(&a.0.features, &b.0.features) < 1e-8);
    for (x, y) in a.1.losses.iter().zip(&b.1.losses) {
        assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-12));
    }
}
