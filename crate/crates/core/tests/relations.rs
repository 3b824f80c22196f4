mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenecode::parallel::Exec;
use scenecode::relations::{allocentric_relations, relation_table, xy_iou, RelationConfig, RelationLabel};
use scenecode::scene::{ObjectId, ObjectInstance, OrientedBox, Vec3};

use common::{oracle, random_scene};

#[test]
fn every_predicate_matches_the_brute_force_oracle() {
    let cfg = RelationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    let mut pairs_checked = 0;
    let mut labels_seen = std::collections::BTreeSet::new();
    for s in 0..100 {
        let scene = random_scene(&mut rng, &format!("rand{s}"), 20);
        let table = relation_table(&scene, &cfg, Exec::Parallel).unwrap();
        for p in &table.pairs {
            let t = scene.object(p.target).unwrap();
            let r = scene.object(p.reference).unwrap();
            let expected = oracle::pair(t, r, &scene, &cfg);
            assert_eq!(p.relations, expected, "scene {s}: target {} reference {}", p.target, p.reference);
            labels_seen.extend(p.relations.iter().map(|l| match l {
                RelationLabel::OClock(_) => "o'clock".to_string(),
                other => other.to_string(),
            }));
            pairs_checked += 1;
        }
        for a in &table.agent {
            let o = scene.object(a.object).unwrap();
            assert_eq!(a.relations, oracle::egocentric(o, &scene, &cfg), "scene {s}: agent to {}", a.object);
        }
    }
    assert!(pairs_checked > 1000);
    // Every pairwise label kind, including the vertical ones from stacked objects, occurred.
    assert_eq!(labels_seen.len(), 11, "label kinds seen: {labels_seen:?}");
    assert!(start.elapsed().as_secs_f64() < 10.0, "took {:?}", start.elapsed());
}

fn random_box(rng: &mut impl Rng, spread: f64) -> OrientedBox {
    OrientedBox::with_heading(
        Vec3::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), 0.5),
        [rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0), 1.0],
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

fn monte_carlo_iou(a: &OrientedBox, b: &OrientedBox, n: usize, rng: &mut impl Rng) -> f64 {
    let (ca, cb) = (oracle::corners(a), oracle::corners(b));
    let all: Vec<(f64, f64)> = ca.iter().chain(cb.iter()).copied().collect();
    let (x0, x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y0, y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let inside = |poly: &[(f64, f64)], p: (f64, f64)| {
        (0..4).all(|i| {
            let (o, q) = (poly[i], poly[(i + 1) % 4]);
            (q.0 - o.0) * (p.1 - o.1) - (q.1 - o.1) * (p.0 - o.0) >= 0.0
        })
    };
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..n {
        let p = (rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        let (ia, ib) = (inside(&ca, p), inside(&cb, p));
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    both as f64 / either as f64
}

#[test]
fn xy_iou_agrees_with_monte_carlo_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = random_box(&mut rng, 0.6);
        let b = random_box(&mut rng, 0.6);
        let err = (xy_iou(&a, &b) - monte_carlo_iou(&a, &b, 100_000, &mut rng)).abs();
        worst = worst.max(err);
    }
    assert!(worst <= 1e-2, "worst error {worst}");
    let a = random_box(&mut rng, 1.0);
    assert_eq!(xy_iou(&a, &a), 1.0);
    let mut far = a;
    far.center.x += 10.0;
    assert_eq!(xy_iou(&a, &far), 0.0);
}

#[test]
fn xy_iou_is_symmetric_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let (a, b) = (random_box(&mut rng, 1.5), random_box(&mut rng, 1.5));
        let (ab, ba) = (xy_iou(&a, &b), xy_iou(&b, &a));
        assert!((0.0..=1.0).contains(&ab));
        assert!((ab - ba).abs() < 1e-12, "{ab} vs {ba}");
        assert!((ab - oracle::iou(&a, &b)).abs() < 1e-9);
    }
}

#[test]
fn relation_tables_survive_rigid_motion() {
    let cfg = RelationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for s in 0..10 {
        let scene = random_scene(&mut rng, &format!("rigid{s}"), 20);
        let reference = relation_table(&scene, &cfg, Exec::Sequential).unwrap().to_json();
        for _ in 0..10 {
            let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let shift = Vec3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-2.0..2.0));
            let moved = scene.rigid_transform(yaw, shift);
            assert_eq!(
                relation_table(&moved, &cfg, Exec::Sequential).unwrap().to_json(),
                reference,
                "scene {s}, yaw {yaw}"
            );
        }
    }
}

#[test]
fn sequential_and_parallel_tables_are_identical() {
    let cfg = RelationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for s in 0..10 {
        let scene = random_scene(&mut rng, &format!("exec{s}"), 20);
        assert_eq!(
            relation_table(&scene, &cfg, Exec::Sequential).unwrap(),
            relation_table(&scene, &cfg, Exec::Parallel).unwrap()
        );
    }
}

#[test]
fn swapping_point_like_objects_mirrors_allocentric_labels() {
    let cfg = RelationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let point = |id, x, y| ObjectInstance {
        id: ObjectId(id),
        category: "p".into(),
        bbox: OrientedBox::with_heading(Vec3::new(x, y, 0.0), [1e-3, 1e-3, 1e-3], 0.0),
        attributes: Default::default(),
    };
    let mirror = |l: &RelationLabel| match l {
        RelationLabel::Left => RelationLabel::Right,
        RelationLabel::Right => RelationLabel::Left,
        RelationLabel::Front => RelationLabel::Back,
        RelationLabel::Back => RelationLabel::Front,
        other => *other,
    };
    for _ in 0..500 {
        let a = point(1, rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
        let b = point(2, rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
        let forward = Vec3::new(1.0, 0.0, 0.0);
        let ab = allocentric_relations(&a, &b, forward, &cfg);
        let ba: Vec<RelationLabel> = allocentric_relations(&b, &a, forward, &cfg).iter().map(mirror).collect();
        assert_eq!(ab, ba);
    }
}
