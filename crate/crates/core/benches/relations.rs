//! Sequential versus data-parallel relation tables.
//!
//! `cargo bench -p scenecode` compares both executors; with
//! `--no-default-features` the parallel arm falls back to the calling thread
//! and the two should match.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenecode::parallel::Exec;
use scenecode::relations::{relation_table, RelationConfig};
use scenecode::scene::{scene_from_file, AgentFile, AttributesFile, ObjectFile, Scene, SceneFile};

/// A room of `n` boxes, roughly a third stacked on earlier ones.
fn scene(n: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects: Vec<ObjectFile> = Vec::with_capacity(n);
    for i in 0..n {
        let lwh = [rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.05..1.5)];
        let center = if i > 0 && rng.gen_bool(0.35) {
            let base = &objects[rng.gen_range(0..i)];
            [base.center[0], base.center[1], base.center[2] + base.lwh[2] / 2.0 + lwh[2] / 2.0]
        } else {
            [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), lwh[2] / 2.0]
        };
        objects.push(ObjectFile {
            id: i as u32 + 1,
            category: ["chair", "table", "lamp", "box", "cup"][i % 5].to_string(),
            center,
            lwh,
            heading: rng.gen_bool(0.5).then(|| rng.gen_range(-3.1..3.1)),
            attributes: AttributesFile::default(),
        });
    }
    let file = SceneFile {
        scene_id: format!("bench{seed}"),
        agent: AgentFile {
            position: [0.0, 0.0, 1.2],
            rotation: [0.0, 0.0, 0.3826834, 0.9238795],
            reference_axis: None,
        },
        objects,
    };
    scene_from_file(file).expect("valid bench scene")
}

fn single_scene(c: &mut Criterion) {
    let cfg = RelationConfig::default();
    let mut group = c.benchmark_group("relation_table");
    for n in [20, 60, 150] {
        let s = scene(n, n as u64);
        for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, n), &s, |b, s| {
                b.iter(|| relation_table(s, &cfg, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn scene_batch(c: &mut Criterion) {
    let cfg = RelationConfig::default();
    let scenes: Vec<Scene> = (0..64).map(|i| scene(20, 1000 + i)).collect();
    let mut group = c.benchmark_group("relation_batch_64x20");
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        group.bench_function(name, |b| {
            b.iter(|| exec.map(&scenes, |s| relation_table(s, &cfg, Exec::Sequential).unwrap().pairs.len()))
        });
    }
    group.finish();
}

criterion_group!(benches, single_scene, scene_batch);
criterion_main!(benches);
