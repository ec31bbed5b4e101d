use std::f64::consts::{PI, TAU};

use floorloc_core::contrastive::{point_info_nce, ContrastiveBatch, Denominator, PairTerm};
use floorloc_core::disambiguate::{build_dpm, fuse, softmax};
use floorloc_core::floorplan::{render_gt_rays, Cell};
use floorloc_core::pose_scoring::{build_dafpm, top_x, Candidate};
use floorloc_core::ray_model::{cosine_similarity, floc_loss, ShapeTerm, DEFAULT_EPSILON};
use floorloc_core::{CandidateSet, Embedding, FanSpec, FloorPlan, Pose, PoseGridSpec};
use proptest::prelude::*;

/// Walled 3 m × 2.4 m room with a pillar and a notch, at 0.2 m.
fn room() -> FloorPlan {
    let (w, h) = (15, 12);
    let occ = (0..w * h)
        .map(|i| {
            let (c, r) = (i % w, i / w);
            let border = c == 0 || r == 0 || c == w - 1 || r == h - 1;
            let pillar = (4..6).contains(&c) && (3..5).contains(&r);
            let notch = c >= 11 && r >= 8;
            if border || pillar || notch {
                Cell::Wall
            } else {
                Cell::Free
            }
        })
        .collect();
    FloorPlan::new(w, h, 0.2, [0.0, 0.0], occ, None).unwrap()
}

fn grid() -> PoseGridSpec {
    PoseGridSpec {
        cell_stride_m: None,
        n_orientations: 8,
    }
}

fn unit(v: Vec<f64>) -> Embedding {
    Embedding::normalized(v).unwrap()
}

fn candidates(scores: &[f64]) -> CandidateSet {
    CandidateSet {
        candidates: scores
            .iter()
            .enumerate()
            .map(|(i, &score)| Candidate {
                pose: Pose::new(i as f64, 0.0, 0.0),
                index: i,
                score,
            })
            .collect(),
    }
}

fn free_pose() -> impl Strategy<Value = Pose> {
    (0.25f64..2.75, 0.25f64..2.15, 0.0f64..TAU)
        .prop_filter("free", |&(x, y, _)| room().is_free_at(x, y))
        .prop_map(|(x, y, t)| Pose::new(x, y, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_turns_render_identically(p in free_pose(), k in -3i32..4) {
        let map = room();
        let fan = FanSpec::gibson();
        let a = render_gt_rays(&map, &p, &fan).unwrap();
        let b = render_gt_rays(&map, &Pose::new(p.x, p.y, p.theta + k as f64 * TAU), &fan).unwrap();
        prop_assert_eq!(a.depths, b.depths);
        prop_assert_eq!(a.hits, b.hits);
    }

    #[test]
    fn dafpm_is_a_distribution_over_free_poses(p in free_pose(), sigma in 0.05f64..3.0) {
        let map = room();
        let fan = FanSpec::gibson();
        let pred = render_gt_rays(&map, &p, &fan).unwrap().depths;
        let pmap = build_dafpm(&map, &pred, &grid(), &fan, sigma).unwrap();
        let mut total = 0.0;
        for (i, &v) in pmap.values().iter().enumerate() {
            if pmap.grid().is_free(i) {
                prop_assert!(v > 0.0);
                total += v;
            } else {
                prop_assert_eq!(v, 0.0);
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn candidate_lists_are_nested(p in free_pose(), a in 1usize..60, b in 1usize..60) {
        let map = room();
        let fan = FanSpec::gibson();
        let pred = render_gt_rays(&map, &p, &fan).unwrap().depths;
        let pmap = build_dafpm(&map, &pred, &grid(), &fan, 0.5).unwrap();
        let (short, long) = (top_x(&pmap, a.min(b)).unwrap(), top_x(&pmap, a.max(b)).unwrap());
        prop_assert_eq!(&long.candidates[..short.len()], &short.candidates[..]);
        prop_assert!(long.candidates.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn shape_penalty_loss_is_non_negative_and_zero_on_truth(
        d in prop::collection::vec(0.1f64..10.0, 2..48),
        noise in prop::collection::vec(-1.0f64..1.0, 48),
    ) {
        let other: Vec<f64> = d.iter().zip(&noise).map(|(x, n)| (x + n).max(0.0)).collect();
        prop_assert!(floc_loss(&other, &d, ShapeTerm::ShapePenalty, DEFAULT_EPSILON).unwrap() >= -1e-12);
        prop_assert!(floc_loss(&d, &d, ShapeTerm::ShapePenalty, DEFAULT_EPSILON).unwrap().abs() < 1e-9);
    }

    #[test]
    fn cosine_ignores_positive_scale(
        d in prop::collection::vec(0.1f64..10.0, 2..48),
        g in prop::collection::vec(0.1f64..10.0, 48),
        s in 0.01f64..100.0,
    ) {
        let g = &g[..d.len()];
        let scaled: Vec<f64> = d.iter().map(|x| x * s).collect();
        let (a, b) = (cosine_similarity(&d, g, 0.0), cosine_similarity(&scaled, g, 0.0));
        prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn softmax_ignores_a_constant_shift(
        s in prop::collection::vec(-1.0f64..1.0, 1..40),
        c in -50.0f64..50.0,
        t in 0.05f64..2.0,
    ) {
        let shifted: Vec<f64> = s.iter().map(|x| x + c).collect();
        let (a, b) = (softmax(&s, t).unwrap(), softmax(&shifted, t).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn fusion_is_a_linear_blend(
        scores in prop::collection::vec(1e-6f64..1.0, 1..30),
        sims in prop::collection::vec(-1.0f64..1.0, 30),
        w in 0.0f64..=1.0,
    ) {
        let mut scores = scores;
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let set = candidates(&scores);
        let dpm = softmax(&sims[..scores.len()], 1.0).unwrap();
        let (_, f0) = fuse(&set, &dpm, 0.0).unwrap();
        let (_, f1) = fuse(&set, &dpm, 1.0).unwrap();
        let (best, fw) = fuse(&set, &dpm, w).unwrap();
        prop_assert!((fw.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for i in 0..fw.len() {
            prop_assert!((fw[i] - ((1.0 - w) * f0[i] + w * f1[i])).abs() < 1e-12);
            prop_assert!(fw[best] >= fw[i]);
        }
        prop_assert_eq!(fuse(&set, &dpm, 0.0).unwrap().0, 0);
    }
}

#[test]
fn fusion_at_w1_follows_similarity() {
    let set = candidates(&[0.6, 0.3, 0.1]);
    let q = unit(vec![1.0, 0.0, 0.0]);
    let crops = [unit(vec![0.0, 1.0, 0.0]), unit(vec![1.0, 0.2, 0.0]), unit(vec![1.0, 0.2, 0.0])];
    let dpm = build_dpm(&q, &crops, 0.1).unwrap();
    assert_eq!(fuse(&set, &dpm, 1.0).unwrap().0, 1, "ties go to the earlier candidate");
    assert_eq!(fuse(&set, &dpm, 0.0).unwrap().0, 0);
}

#[test]
fn heading_bearings_wrap() {
    let map = room();
    let fan = FanSpec::gibson();
    let a = render_gt_rays(&map, &Pose::new(1.1, 1.5, -PI / 2.0), &fan).unwrap();
    let b = render_gt_rays(&map, &Pose::new(1.1, 1.5, 1.5 * PI), &fan).unwrap();
    assert_eq!(a.depths, b.depths);
}

/// With a positive that outscores every negative, a sharper temperature
/// lowers the with-positive loss.
#[test]
fn with_positive_loss_falls_as_temperature_sharpens() {
    let anchor = unit(vec![1.0, 0.0, 0.0, 0.0]).into_vec();
    let positive = unit(vec![0.9, 0.3, 0.0, 0.1]).into_vec();
    let negs = vec![
        unit(vec![0.2, 1.0, 0.0, 0.0]).into_vec(),
        unit(vec![0.0, 0.3, 1.0, 0.0]).into_vec(),
        unit(vec![-0.4, 0.0, 0.0, 1.0]).into_vec(),
    ];
    let loss = |t: f64| {
        let batch = ContrastiveBatch {
            anchors: vec![anchor.clone()],
            positives: vec![positive.clone()],
            pos_negatives: negs[..2].to_vec(),
            ori_negatives: negs[2..].to_vec(),
            terms: vec![PairTerm {
                anchor: 0,
                positive: 0,
                pos_negatives: vec![0, 1],
                ori_negatives: vec![0],
            }],
            temperature: t,
        };
        point_info_nce(&batch, Denominator::WithPositive).unwrap()
    };
    let temps = [2.0, 1.0, 0.5, 0.2, 0.07, 0.02];
    let losses: Vec<f64> = temps.iter().map(|&t| loss(t)).collect();
    assert!(losses.iter().all(|&l| l > 0.0), "{losses:?}");
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}
