use cycconf_core::geometry::BoundingBox;
use cycconf_core::metrics::*;
use proptest::prelude::*;

fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2)
}

fn box_iou(a: &BoundingBox, c: &BoundingBox) -> f64 {
    let w = (a.x2.min(c.x2) - a.x1.max(c.x1)).max(0.0);
    let h = (a.y2.min(c.y2) - a.y1.max(c.y1)).max(0.0);
    let inter = w * h;
    inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (c.x2 - c.x1) * (c.y2 - c.y1) - inter)
}

/// Precision and recall of the `k` top-ranked detections, matched from
/// scratch; ties in score keep input order, ties in IoU go to the lower GT
/// index.
fn pr_at(dets: &[BoundingBox], gts: &[BoundingBox], thr: f64, k: usize) -> (f64, f64) {
    let mut ranked: Vec<&BoundingBox> = dets.iter().collect();
    ranked.sort_by(|a, c| c.score.unwrap().partial_cmp(&a.score.unwrap()).unwrap());
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for d in &ranked[..k] {
        let mut best: Option<(f64, usize)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = box_iou(d, gt);
            if !used[g] && v >= thr && best.map_or(true, |(bv, _)| v > bv) {
                best = Some((v, g));
            }
        }
        if let Some((_, g)) = best {
            used[g] = true;
            tp += 1;
        }
    }
    let precision = if k == 0 { 1.0 } else { tp as f64 / k as f64 };
    (precision, tp as f64 / gts.len() as f64)
}

/// Area under the PR curve with precision replaced by the best precision at
/// any equal or higher recall, enumerating every rank cut-off.
fn brute_force_ap(dets: &[BoundingBox], gts: &[BoundingBox], thr: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let curve: Vec<(f64, f64)> = (1..=dets.len()).map(|k| pr_at(dets, gts, thr, k)).collect();
    let mut levels: Vec<f64> = curve.iter().map(|&(_, r)| r).collect();
    levels.sort_by(|a, c| a.partial_cmp(c).unwrap());
    levels.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in levels {
        if r == 0.0 {
            continue;
        }
        let p = curve.iter().filter(|&&(_, rr)| rr >= r).map(|&(p, _)| p).fold(0.0, f64::max);
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

/// Boxes on a 10×10 grid whose pairwise IoUs straddle 0.5 and 0.75:
/// A–B 0.8, A–C 0.6, B–C exactly 0.5, D disjoint from all.
fn palette() -> [BoundingBox; 4] {
    [b(0.0, 0.0, 4.0, 4.0), b(0.0, 0.0, 4.0, 5.0), b(1.0, 0.0, 5.0, 4.0), b(5.0, 5.0, 9.0, 9.0)]
}

fn for_each_tuple(n: usize, len: usize, f: &mut dyn FnMut(&[usize])) {
    let mut idx = vec![0; len];
    loop {
        f(&idx);
        let mut k = 0;
        while k < len {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == len {
            return;
        }
    }
}

#[test]
fn exhaustive_small_cases_match_brute_force() {
    let pal = palette();
    let scores = [0.5, 0.9];
    let mut cases = 0usize;
    for ng in 0..=3 {
        for_each_tuple(4, ng, &mut |g| {
            let gts: Vec<BoundingBox> = g.iter().map(|&i| pal[i]).collect();
            for nd in 0..=4 {
                for_each_tuple(8, nd, &mut |d| {
                    let dets: Vec<BoundingBox> = d.iter().map(|&i| pal[i % 4].with_score(scores[i / 4])).collect();
                    for thr in [0.5, 0.75] {
                        let got = average_precision(&dets, &gts, thr);
                        let want = brute_force_ap(&dets, &gts, thr);
                        assert!((got - want).abs() < 1e-9, "gts {g:?} dets {d:?} thr {thr}: {got} vs {want}");
                    }
                    cases += 1;
                });
            }
        });
    }
    assert_eq!(cases, 85 * 4681);
}

fn grid_box() -> impl Strategy<Value = BoundingBox> {
    (0u8..10, 0u8..10, 1u8..=10, 1u8..=10).prop_map(|(x, y, w, h)| {
        let (x1, y1) = (x as f64, y as f64);
        b(x1, y1, (x1 + w as f64).min(10.0).max(x1 + 1.0), (y1 + h as f64).min(10.0).max(y1 + 1.0))
    })
}

fn scored() -> impl Strategy<Value = BoundingBox> {
    (grid_box(), 1u8..=10).prop_map(|(bx, s)| bx.with_score(s as f64 / 10.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn random_grid_cases_match_brute_force(
        gts in prop::collection::vec(grid_box(), 0..=3),
        dets in prop::collection::vec(scored(), 0..=4),
        thr in prop_oneof![Just(0.5), Just(0.75), Just(0.95)],
    ) {
        let got = average_precision(&dets, &gts, thr);
        prop_assert!((got - brute_force_ap(&dets, &gts, thr)).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn top_scoring_true_positive_never_lowers_ap(
        gts in prop::collection::vec(grid_box(), 1..=3),
        dets in prop::collection::vec(scored(), 0..=4),
    ) {
        let before = average_precision(&dets, &gts, 0.5);
        let extra = b(20.0, 20.0, 25.0, 25.0);
        let mut gts2 = gts.clone();
        gts2.push(extra);
        let mut dets2 = dets.clone();
        dets2.push(extra.with_score(2.0));
        prop_assert!(average_precision(&dets2, &gts2, 0.5) >= before - 1e-12);
    }

    #[test]
    fn lowest_scoring_false_positive_changes_nothing(
        gts in prop::collection::vec(grid_box(), 1..=3),
        dets in prop::collection::vec(scored(), 0..=4),
    ) {
        let before = average_precision(&dets, &gts, 0.5);
        let mut dets2 = dets.clone();
        dets2.push(b(30.0, 30.0, 31.0, 31.0).with_score(0.0));
        prop_assert!(average_precision(&dets2, &gts, 0.5) <= before + 1e-12);
    }

    #[test]
    fn size_buckets_partition_areas(area in 0.0f64..20000.0) {
        let hits = [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large]
            .iter()
            .filter(|&&k| SizeBucket::of_area(area) == k)
            .count();
        prop_assert_eq!(hits, 1);
    }
}

#[test]
fn worked_example_is_five_sixths() {
    let gts = [b(0.0, 0.0, 10.0, 10.0), b(20.0, 20.0, 30.0, 30.0)];
    let dets = [
        b(0.0, 0.0, 10.0, 10.0).with_score(0.9),
        b(50.0, 50.0, 60.0, 60.0).with_score(0.8),
        b(20.0, 20.0, 30.0, 30.0).with_score(0.7),
    ];
    assert_eq!(brute_force_ap(&dets, &gts, 0.5), 0.5 + 0.5 * (2.0 / 3.0));
    assert!((average_precision(&dets, &gts, 0.5) - 0.8333).abs() < 1e-4);
    assert!((average_precision(&dets, &gts, 0.5) - brute_force_ap(&dets, &gts, 0.5)).abs() < 1e-15);
}

#[test]
fn iou_hand_geometry() {
    assert!((iou(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < 1e-12);
    assert_eq!(iou(&b(0.0, 0.0, 2.0, 2.0), &b(0.0, 0.0, 2.0, 2.0)), 1.0);
    assert_eq!(iou(&b(0.0, 0.0, 2.0, 2.0), &b(5.0, 5.0, 6.0, 6.0)), 0.0);
}

fn labelled(bx: BoundingBox, k: usize) -> BoundingBox {
    bx.with_category(k)
}

#[test]
fn perfect_predictions_score_one_and_empty_classes_are_excluded() {
    let gt = vec![
        labelled(b(0.0, 0.0, 20.0, 20.0), 0),
        labelled(b(30.0, 30.0, 80.0, 80.0), 0),
        labelled(b(10.0, 40.0, 120.0, 127.0), 2),
    ];
    let images = vec![ImageResult { detections: gt.iter().map(|g| g.with_score(1.0)).collect(), ground_truth: gt }];
    let report = evaluate_detections(&images, 3);
    assert_eq!(report.per_class[1].num_instances, 0);
    assert_eq!(report.per_class[1].metrics.ap50, None);
    for v in report.mean.values() {
        assert_eq!(v, Some(1.0));
    }
    assert_eq!(report.per_class[0].metrics.apl, None);
    assert_eq!(report.per_class[0].metrics.aps, Some(1.0));
    assert_eq!(report.per_class[0].metrics.apm, Some(1.0));
}

#[test]
fn class_mean_is_arithmetic() {
    let gt = vec![labelled(b(0.0, 0.0, 20.0, 20.0), 0), labelled(b(40.0, 40.0, 60.0, 60.0), 1)];
    let dets = vec![labelled(b(0.0, 0.0, 20.0, 20.0), 0).with_score(0.9)];
    let report = evaluate_detections(&[ImageResult { detections: dets, ground_truth: gt }], 3);
    assert_eq!(report.per_class[0].metrics.ap50, Some(1.0));
    assert_eq!(report.per_class[1].metrics.ap50, Some(0.0));
    assert_eq!(report.mean.ap50, Some(0.5));
}
