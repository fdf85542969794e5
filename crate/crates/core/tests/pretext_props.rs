use cycconf_core::ssl_tasks::*;
use cycconf_core::tensor::Tensor3;
use proptest::prelude::*;

fn image() -> impl Strategy<Value = Tensor3<u16>> {
    (1usize..4, 2usize..7).prop_flat_map(|(c, half)| {
        let n = 2 * half;
        prop::collection::vec(any::<u16>(), c * n * n).prop_map(move |d| Tensor3::from_vec(c, n, n, d).unwrap())
    })
}

fn full(t: &Tensor3<u16>) -> CropWindow {
    CropWindow { top: 0, left: 0, size: t.h }
}

/// The angle index whose rotation of `original` reproduces `rotated`.
fn decode_angle(original: &Tensor3<u16>, rotated: &Tensor3<u16>) -> Option<usize> {
    (0..4).find(|&k| rotate_and_label(original, k, full(original)).unwrap().image == *rotated)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rotation_labels_round_trip(img in image(), k in 0usize..4) {
        let s = rotate_and_label(&img, k, full(&img)).unwrap();
        prop_assert_eq!(s.label, k);
        let mut a = img.data.clone();
        let mut b = s.image.data.clone();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        let distinct = img.data.iter().collect::<std::collections::BTreeSet<_>>().len() == img.data.len();
        if distinct {
            prop_assert_eq!(decode_angle(&img, &s.image), Some(k));
        }
        let back = rotate_and_label(&s.image, (4 - k) % 4, full(&img)).unwrap();
        prop_assert_eq!(back.image, img);
    }

    #[test]
    fn jigsaw_labels_round_trip(img in image(), p in 0usize..24) {
        let s = jigsaw_shuffle(&img, p, full(&img)).unwrap();
        prop_assert_eq!(s.label, p);
        prop_assert_eq!(permutation_index(permutation_table()[p]), Some(p));
        let restored = unshuffle_tiles(&s.tiles, p).unwrap();
        let reference = jigsaw_shuffle(&img, 0, full(&img)).unwrap().tiles;
        prop_assert_eq!(&restored, &reference);
        let half = img.h / 2;
        for (t, tile) in reference.iter().enumerate() {
            prop_assert_eq!(tile, &img.crop((t / 2) * half, (t % 2) * half, half, half).unwrap());
        }
    }

    #[test]
    fn cross_entropy_is_non_negative_and_shift_invariant(
        logits in prop::collection::vec(-30.0f64..30.0, 4),
        label in 0usize..4,
        shift in -1e3f64..1e3,
    ) {
        let (l, g) = rotation_loss(&logits, label).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let (l2, _) = rotation_loss(&shifted, label).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert!((l - l2).abs() < 1e-9);
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }
}

#[test]
fn hand_evaluated_cross_entropy() {
    let (l, _) = rotation_loss(&[1.0f64, 2.0, 0.0, -1.0], 1).unwrap();
    let hand = -2.0 + (1f64.exp() + 2f64.exp() + 1.0 + (-1f64).exp()).ln();
    assert!((l - hand).abs() < 1e-10);
    let (u, _) = rotation_loss(&[0.3f64; 4], 2).unwrap();
    assert!((u - 4f64.ln()).abs() < 1e-12);
    let (j, _) = jigsaw_loss(&[0.0f64; 24], 5).unwrap();
    assert!((j - 24f64.ln()).abs() < 1e-12);
    let mut favour = [0.0f64; 24];
    favour[5] = 3.0;
    assert!(jigsaw_loss(&favour, 5).unwrap().0 < 24f64.ln());
    let (hi, _) = rotation_loss(&[20.0f64, 0.0, 0.0, 0.0], 0).unwrap();
    let (lo, _) = rotation_loss(&[10.0f64, 0.0, 0.0, 0.0], 0).unwrap();
    assert!(hi < lo);
    assert!(rotation_loss(&[0.0f64; 4], 4).is_err());
    assert!(jigsaw_loss(&[0.0f64; 4], 0).is_err());
    assert!(rotation_loss(&[f64::NAN, 0.0, 0.0, 0.0], 0).is_err());
}

#[test]
fn random_jigsaw_logits_against_hand_evaluation() {
    let mut rng = cycconf_core::rng::CounterRng::new(8);
    for _ in 0..50 {
        let logits: Vec<f64> = (0..24).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let label = rng.below(24);
        let hand = -logits[label] + logits.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((jigsaw_loss(&logits, label).unwrap().0 - hand).abs() < 1e-10);
    }
}
