//! Desk-scale training run on the synthetic `winged` family, reporting the
//! held-out property metrics.
//!
//! `cargo run --release -p keydeform --example desk_train -- [iterations] [seed]`

use std::time::Instant;

use keydeform::deformer::{predict_keypoints, prepare_dataset, train_prepared, KeypointSet, ModelConfig, TrainConfig};
use keydeform::eval::{alignment_benchmark, landmark_consistency, mirror_symmetry, surface_proximity};
use keydeform::geom::{generate_synthetic_family, Family};
use keydeform::Rng;

fn main() -> keydeform::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);

    let mut rng = Rng::new(seed);
    let shapes: Vec<_> = generate_synthetic_family(Family::Winged, 240, &mut rng)
        .iter()
        .map(|s| s.normalized().map(|(n, _)| n))
        .collect::<Result<_, _>>()?;
    let (train_set, test_set) = shapes.split_at(200);

    let config = TrainConfig {
        model: ModelConfig {
            num_keypoints: 8,
            ..ModelConfig::default()
        },
        points: 256,
        iterations,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let meshes: Vec<_> = train_set.iter().map(|s| s.mesh.clone()).collect();
    let prepared = prepare_dataset(&meshes, &config)?;
    let trained = train_prepared(&prepared, &config)?;
    println!("trained in {:.1?}", start.elapsed());
    for e in trained.log.iter().step_by((iterations / 20).max(1)) {
        println!("{:5} sim {:.5} kpt {:.5} inf {:.3e}", e.iteration, e.sim, e.kpt, e.inf);
    }

    let test_meshes: Vec<_> = test_set.iter().map(|s| s.mesh.clone()).collect();
    let test_prepared = prepare_dataset(&test_meshes, &TrainConfig { seed: seed + 1, ..config.clone() })?;
    let keypoints: Vec<KeypointSet> = test_prepared
        .iter()
        .map(|p| predict_keypoints(&trained.model, &p.cloud))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<_> = (0..test_prepared.len())
        .map(|i| (&test_prepared[i], &test_prepared[(i + 1) % test_prepared.len()]))
        .collect();
    let align = alignment_benchmark(&trained.model, &pairs)?;
    let landmarks: Vec<_> = test_set.iter().map(|s| s.landmark_positions()).collect();
    let consistency = landmark_consistency(&keypoints, &landmarks)?;
    println!(
        "alignment deformed {:.5} identity {:.5} ratio {:.3}",
        align.deformed_mean,
        align.identity_mean,
        align.deformed_mean / align.identity_mean
    );
    println!("consistency {:?} {:?}", consistency.landmark, consistency.frequency);
    println!("surface {:.4}", surface_proximity(&keypoints, &test_meshes)?);
    println!("symmetry {:.4}", mirror_symmetry(&keypoints)?);
    println!("keypoints[0] {:?}", keypoints[0].points);
    Ok(())
}
