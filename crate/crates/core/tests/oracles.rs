// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::Rng;
use tribranch::boxes::{bev_iou, point_in_box, Box7, Proposal};
use tribranch::ckps::{decode_mask, encode_mask, select_keypoints, shared_voxels, voxelize, CkpsConfig};
use tribranch::cloud::{crop, random_fixed_count, read_frame, write_frame, CropRange, Point, PointCloud};
use tribranch::consistency::{
    foreground_sample_bev, mvfp_pool, nms_by_class, BevGrid, BevProposals, FeatureTable, MvfpConfig,
    NmsConfig,
};
use tribranch::des::{des_sample_detailed, partition_rings, DesConfig, RingAction};
use tribranch::gas::{gas_filter, gas_mask, GasConfig};
use tribranch::SampleSeed;

use common::*;

fn point() -> impl Strategy<Value = Point> {
    (-60f32..60.0, -60f32..60.0, -4f32..3.0, 0f32..1.0).prop_map(|(x, y, z, r)| Point::new(x, y, z, r))
}

fn cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(point(), 0..max).prop_map(PointCloud::new)
}

fn bits(c: &PointCloud) -> Vec<[u32; 4]> {
    let mut v: Vec<[u32; 4]> = c.iter().map(|p| p.as_array().map(f32::to_bits)).collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crop_matches_filter(c in cloud(400), lo in -50f64..0.0, span in 1f64..80.0, zl in -4f64..0.0) {
        let range = CropRange { x_min: lo, x_max: lo + span, y_min: lo, y_max: lo + span, z_min: zl, z_max: zl + 3.0 };
        let got = crop(&c, &range);
        let want: Vec<Point> = c.points.iter().copied().filter(|p| {
            let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
            x >= range.x_min && x <= range.x_max && y >= range.y_min && y <= range.y_max && z >= range.z_min && z <= range.z_max
        }).collect();
        prop_assert_eq!(&crop(&got, &range).points, &got.points);
        prop_assert_eq!(got.points, want);
        prop_assert_eq!(got.crop_applied, [true; 3]);
    }

    #[test]
    fn frame_round_trip(c in cloud(300)) {
        let bytes = write_frame(&c);
        prop_assert_eq!(bytes.len(), c.len() * 16);
        prop_assert_eq!(read_frame(&bytes).unwrap().points, c.points);
    }

    #[test]
    fn ring_partition_matches_scan(c in cloud(400), d_t in prop::sample::select(vec![2.5, 5.0, 8.0]), n_r in 1usize..12) {
        let cfg = DesConfig { tau_far: d_t * n_r as f64, d_t, ..DesConfig::kitti() };
        let part = partition_rings(&c, &cfg);
        let mut counts = vec![0usize; n_r];
        for (p, a) in c.iter().zip(&part.assignments) {
            let want = ring_oracle(planar(p), &cfg);
            prop_assert_eq!(*a, want);
            if let Some(j) = want { counts[j - 1] += 1; }
        }
        prop_assert_eq!(&part.counts, &counts);
        for j in 1..=n_r {
            let area = ring_area_oracle(j, &cfg);
            prop_assert!((part.areas[j - 1] - area).abs() <= 1e-9 * area);
            prop_assert!((part.densities[j - 1] - counts[j - 1] as f64 / area).abs() <= 1e-12 * (1.0 + part.densities[j - 1]));
        }
    }

    #[test]
    fn des_counts_match_rules(c in cloud(800), f in 0.002f64..0.2, seed in any::<u64>()) {
        let cfg = DesConfig { rho_s: 5.0 * f, rho_m: 8.0 * f, rho_l: 15.0 * f, ..DesConfig::kitti() };
        let out = des_sample_detailed(&c, &cfg, SampleSeed(seed));
        let (expected, outside) = des_counts_oracle(&c, &cfg);
        let mut got = vec![0usize; expected.len()];
        let mut got_out = 0;
        for p in out.cloud.iter() {
            match ring_oracle(planar(p), &cfg) { Some(j) => got[j - 1] += 1, None => got_out += 1 }
        }
        prop_assert_eq!(got, expected);
        prop_assert_eq!(got_out, outside);
        // Every output point is an input point (no jitter by default).
        let input: std::collections::HashSet<[u32; 4]> = bits(&c).into_iter().collect();
        for p in out.cloud.iter() {
            prop_assert!(input.contains(&p.as_array().map(f32::to_bits)));
        }
        // Upsampled copies come from the height band.
        prop_assert!(out.rings.iter().filter(|r| r.action != RingAction::Upsample).all(|r| r.added == 0));
        let kept = c.len() - out.rings.iter().map(|r| r.removed).sum::<usize>();
        for p in &out.cloud.points[kept..] {
            let z = p.z as f64;
            prop_assert!(z >= cfg.tau_z_min && z <= cfg.tau_z_max);
        }
    }

    #[test]
    fn gas_matches_cell_scan(c in cloud(300), tau_h in 0.05f64..1.0, pass in any::<bool>()) {
        let cfg = GasConfig { tau_h, passthrough_outside: pass, ..GasConfig::kitti() };
        let mask = gas_mask(&c, &cfg);
        prop_assert_eq!(&mask, &gas_oracle(&c, &cfg));
        let kept: Vec<Point> = c.iter().zip(&mask).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
        prop_assert_eq!(gas_filter(&c, &cfg).points, kept);
    }

    #[test]
    fn voxel_bounds_hold_their_points(c in cloud(300), size in 0.1f64..2.0) {
        let cfg = CkpsConfig { voxel_size: size, tau_v: 0.001, origin: Some([-70.0, -70.0, -5.0]) };
        let table = voxelize(&c, &cfg);
        let mut total = 0;
        for key in table.keys() {
            let bounds = cfg.voxel_bounds(*key);
            for &i in table.inner(key) {
                let p = &c.points[i as usize];
                total += 1;
                for (v, (lo, hi)) in [p.x as f64, p.y as f64, p.z as f64].into_iter().zip(bounds) {
                    // Bounds are reconstructed in floating point; allow rounding at the faces.
                    prop_assert!(v >= lo - 1e-9 && v < hi + 1e-9);
                }
                prop_assert_eq!(*key, voxel_oracle(p, size, [-70.0, -70.0, -5.0]));
            }
        }
        prop_assert_eq!(total, c.len());
    }

    #[test]
    fn bev_iou_matches_clipping(a in box_strategy(), b in box_strategy()) {
        let got = bev_iou(&a, &b);
        let want = iou_oracle(&a, &b);
        prop_assert!((got - want).abs() <= 1e-9, "got {} want {}", got, want);
        prop_assert!((bev_iou(&b, &a) - got).abs() <= 1e-9);
    }

    #[test]
    fn point_in_box_matches_hull(p in point(), b in box_strategy()) {
        prop_assert_eq!(point_in_box(&p, &b), point_in_box_oracle(&p, &b));
    }
}

fn box_strategy() -> impl Strategy<Value = Box7> {
    (-4f64..4.0, -4f64..4.0, -1f64..1.0, 0.3f64..6.0, 0.3f64..3.0, 0.3f64..3.0, -3.2f64..3.2)
        .prop_map(|(x, y, z, l, w, h, yaw)| Box7::new(x, y, z, l, w, h, yaw))
}

#[test]
fn fixed_count_downsamples_without_replacement() {
    let mut r = rng(1);
    let c = random_cloud(&mut r, 20_000, 30.0);
    let out = random_fixed_count(&c, 16_384, SampleSeed(9)).unwrap();
    assert_eq!(out.len(), 16_384);
    let mut multiset: HashMap<[u32; 4], isize> = HashMap::new();
    for p in c.iter() {
        *multiset.entry(p.as_array().map(f32::to_bits)).or_default() += 1;
    }
    for p in out.iter() {
        let slot = multiset.get_mut(&p.as_array().map(f32::to_bits)).expect("sampled point exists");
        *slot -= 1;
        assert!(*slot >= 0, "point drawn twice");
    }
}

#[test]
fn fixed_count_upsamples_keeping_every_point() {
    for (n, n_p) in [(100usize, 150usize), (16_000, 16_384)] {
        let mut r = rng(n as u64);
        let c = random_cloud(&mut r, n, 30.0);
        let out = random_fixed_count(&c, n_p, SampleSeed(4)).unwrap();
        assert_eq!(out.len(), n_p);
        assert_eq!(&out.points[..n], &c.points[..]);
        let originals: std::collections::HashSet<_> = bits(&c).into_iter().collect();
        assert!(out.points[n..].iter().all(|p| originals.contains(&p.as_array().map(f32::to_bits))));
    }
}

#[test]
fn full_size_frame_round_trip() {
    let mut r = rng(2);
    let c = random_cloud(&mut r, 16_384, 70.0);
    let bytes = write_frame(&c);
    assert_eq!(bytes.len(), 16_384 * 16);
    assert_eq!(write_frame(&read_frame(&bytes).unwrap()), bytes);
}

#[test]
fn shared_voxels_match_triple_loop() {
    for seed in 0..30 {
        let mut r = rng(seed);
        let views = related_views(&mut r, 300, 3.0);
        let cfg = CkpsConfig { voxel_size: 0.5, tau_v: 0.001, origin: Some([-4.0, -4.0, -3.0]) };
        let tables = views.each_ref().map(|v| voxelize(v, &cfg));
        let got = shared_voxels([&tables[0], &tables[1], &tables[2]]).unwrap();
        let keys: Vec<Vec<[i64; 3]>> = views
            .iter()
            .map(|v| v.iter().map(|p| voxel_oracle(p, 0.5, [-4.0, -4.0, -3.0])).collect())
            .collect();
        let mut want = Vec::new();
        for a in &keys[0] {
            for b in &keys[1] {
                for c in &keys[2] {
                    if a == b && b == c {
                        want.push(*a);
                    }
                }
            }
        }
        want.sort_unstable();
        want.dedup();
        assert_eq!(got, want);
    }
}

#[test]
fn keypoints_match_exhaustive_search() {
    for seed in 0..40 {
        let mut r = rng(100 + seed);
        let views = related_views(&mut r, 400, 2.0);
        let refs = [&views[0], &views[1], &views[2]];
        let size = r.gen_range(0.2..0.8);
        let origin = [-3.0, -3.0, -3.0];
        let cfg = CkpsConfig { voxel_size: size, tau_v: 0.001, origin: Some(origin) };
        let mask = select_keypoints(refs, &cfg).unwrap();
        assert!(!mask.is_empty());
        assert_eq!(mask.triples, ckps_oracle(refs, size, origin, 0.001));
        // At most one keypoint per voxel, and the three points agree.
        let mut seen = mask.voxels.clone();
        seen.dedup();
        assert_eq!(seen.len(), mask.len());
        for t in &mask.triples {
            let a = views[0].points[t[0] as usize];
            for v in 1..3 {
                let b = views[v].points[t[v] as usize];
                assert!((a.x - b.x).abs() < 0.001 && (a.r - b.r).abs() < 0.001);
            }
        }
        assert_eq!(decode_mask(&encode_mask(&mask)).unwrap(), mask.triples);
    }
}

#[test]
fn bev_foreground_matches_rasterization() {
    for seed in 0..50 {
        let mut r = rng(500 + seed);
        let grid = BevGrid { x_min: -6.0, y_min: -6.0, cell_size: r.gen_range(0.3..1.5), nx: 12, ny: 10 };
        let views: Vec<BevProposals> = (0..3)
            .map(|_| BevProposals {
                grid,
                cells: (0..grid.cells())
                    .map(|_| Proposal::new(random_box(&mut r, 5.0), r.gen_range(-2.0..2.0), 1))
                    .collect(),
            })
            .collect();
        let gt: Vec<Box7> = (0..r.gen_range(0..6)).map(|_| random_box(&mut r, 5.0)).collect();
        let cf = foreground_sample_bev([&views[0], &views[1], &views[2]], &gt).unwrap();
        let mut want = Vec::new();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let x = grid.x_min + (ix as f64 + 0.5) * grid.cell_size;
                let y = grid.y_min + (iy as f64 + 0.5) * grid.cell_size;
                if gt.iter().any(|b| footprint_oracle(x, y, b)) {
                    want.push(iy * grid.nx + ix);
                }
            }
        }
        for v in 0..3 {
            assert_eq!(cf.mask.indices[v], want);
        }
        assert_eq!(cf.views[1].len(), want.len());
    }
}

#[test]
fn nms_per_class_matches_oracle() {
    let cfg = NmsConfig::default();
    for seed in 0..100 {
        let mut r = rng(900 + seed);
        let props: Vec<Proposal> = (0..r.gen_range(1..60))
            .map(|_| Proposal::new(random_box(&mut r, 3.0), r.gen_range(-3.0..3.0), r.gen_range(0..3)))
            .collect();
        let got = nms_by_class(&props, &cfg);
        for class in 0..3u32 {
            let idx: Vec<usize> = (0..props.len()).filter(|&i| props[i].class_id == class).collect();
            let subset: Vec<Proposal> = idx.iter().map(|&i| props[i]).collect();
            let thr = if class == cfg.car_class_id { cfg.car_threshold } else { cfg.other_threshold };
            let want: Vec<usize> = nms_oracle(&subset, thr, cfg.max_keep).into_iter().map(|k| idx[k]).collect();
            let got_class: Vec<usize> = got.iter().copied().filter(|&i| props[i].class_id == class).collect();
            let mut a = got_class.clone();
            let mut b = want.clone();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b, "seed {seed} class {class}");
        }
        assert!(got.len() <= cfg.max_keep);
    }
}

#[test]
fn mvfp_gathers_points_inside_rois() {
    for seed in 0..30 {
        let mut r = rng(1300 + seed);
        let views: Vec<PointCloud> = (0..3)
            .map(|_| {
                let n = r.gen_range(10..300);
                random_cloud(&mut r, n, 5.0)
            })
            .collect();
        let feats: Vec<FeatureTable> = views
            .iter()
            .map(|v| FeatureTable::new(v.len(), 2, (0..v.len() * 2).map(|i| i as f32).collect()))
            .collect();
        let props: Vec<Vec<Proposal>> = (0..3)
            .map(|_| {
                (0..r.gen_range(0..8))
                    .map(|_| Proposal::new(random_box(&mut r, 4.0), r.gen_range(-2.0..2.0), 1))
                    .collect()
            })
            .collect();
        let cfg = MvfpConfig { roi_margin: r.gen_range(0.0..0.5), ..Default::default() };
        let out = mvfp_pool(
            [&views[0], &views[1], &views[2]],
            [&feats[0], &feats[1], &feats[2]],
            [&props[0], &props[1], &props[2]],
            &cfg,
        )
        .unwrap();
        let total: usize = views.iter().map(|v| v.len()).sum();
        assert_eq!(out.points.len(), total);
        assert_eq!(out.view_offsets, [0, views[0].len(), views[0].len() + views[1].len()]);
        for roi in &out.rois {
            let region = roi.roi.bbox.enlarged(cfg.roi_margin);
            let want: Vec<usize> = (0..total).filter(|&i| point_in_box_oracle(&out.points.points[i], &region)).collect();
            assert_eq!(roi.point_indices, want);
            assert_eq!(roi.features.len(), want.len() * 2);
            assert!(props[roi.source_view].contains(&roi.roi));
        }
        for (i, a) in out.rois.iter().enumerate() {
            for b in &out.rois[i + 1..] {
                assert!(iou_oracle(&a.roi.bbox, &b.roi.bbox) <= cfg.nms.car_threshold + 1e-9);
            }
        }
    }
}
