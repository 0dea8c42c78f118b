//! File-format integration tests: DXPC clouds, checkpoints, manifests,
//! resume snapshots.

use dexkit::formats::{self, dxpc, resume, DatasetIndex, IndexEntry, ManifestFile};
use dexkit_core::assets::{generate_split, Category, CategoryTemplate};
use dexkit_core::env::EnvSnapshot;
use dexkit_core::geometry::{Pose, Vec3};
use dexkit_core::nn::{Init, ParamStore};
use dexkit_core::sensing::{LabeledPointCloud, PointLabel, PointOrigin};
use dexkit_core::sim::{RobotState, SimState};
use proptest::prelude::*;

fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("dexkit-test-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn sample_cloud(n: usize) -> LabeledPointCloud {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut origins = Vec::new();
    for i in 0..n {
        let x = (i as f64 * 0.1).sin() as f32 as f64;
        points.push(Vec3::new(x, 0.25, -0.5 + i as f64 * 0.01));
        labels.push(PointLabel::from_code((i % 4) as u8).unwrap());
        origins.push(if i % 5 == 0 { PointOrigin::Imagined } else { PointOrigin::Observed });
    }
    LabeledPointCloud { points, labels, origins }
}

#[test]
fn dxpc_header_and_round_trip() {
    let cloud = sample_cloud(64);
    let bytes = dxpc::encode(&cloud);
    assert_eq!(&bytes[0..4], b"DXPC");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 64);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 5);

    let decoded = dxpc::decode(&bytes).unwrap();
    assert_eq!(decoded.len(), cloud.len());
    assert_eq!(decoded.labels, cloud.labels);
    assert_eq!(decoded.origins, cloud.origins);
    // re-encode is byte-identical (f32 payload is already exact)
    assert_eq!(dxpc::encode(&decoded), bytes);
}

#[test]
fn dxpc_rejects_corruption() {
    let cloud = sample_cloud(8);
    let mut bytes = dxpc::encode(&cloud);
    bytes[0] = b'Z';
    assert!(dxpc::decode(&bytes).is_err());
    let bytes = dxpc::encode(&cloud);
    assert!(dxpc::decode(&bytes[..bytes.len() - 1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn dxpc_round_trip_preserves_f32_values(
        pts in prop::collection::vec((-10.0f32..10.0, -10.0f32..10.0, -10.0f32..10.0), 1..128),
        codes in prop::collection::vec((0u8..4, 0u8..2), 1..128),
    ) {
        let n = pts.len().min(codes.len());
        let cloud = LabeledPointCloud {
            points: pts[..n].iter().map(|&(x, y, z)| Vec3::new(x as f64, y as f64, z as f64)).collect(),
            labels: codes[..n].iter().map(|&(l, _)| PointLabel::from_code(l).unwrap()).collect(),
            origins: codes[..n].iter().map(|&(_, o)| PointOrigin::from_code(o).unwrap()).collect(),
        };
        let decoded = dxpc::decode(&dxpc::encode(&cloud)).unwrap();
        prop_assert_eq!(&decoded, &cloud);
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = temp_dir("ckpt");
    let mut store = ParamStore::new();
    store.add("pointnet.l0.w", 4, 16, Init::UniformFanIn, 3);
    store.add("pointnet.l0.b", 1, 16, Init::Zeros, 3);
    let path = dir.join("enc.dxck");
    formats::save_checkpoint(&store, &path).unwrap();
    let loaded = formats::load_checkpoint(&path).unwrap();
    assert_eq!(store, loaded);
}

#[test]
fn manifest_file_round_trips_and_rewrites_identically() {
    let dir = temp_dir("manifest");
    let template = CategoryTemplate::for_category(Category::Bucket);
    let manifest = generate_split(&template, 19, 11, 8, 123).unwrap();
    let file = ManifestFile::from_core(&manifest, &template);
    let path = dir.join("bucket_manifest.json");
    file.save(&path).unwrap();
    let bytes_a = std::fs::read(&path).unwrap();
    let loaded = ManifestFile::load(&path).unwrap();
    assert_eq!(loaded.to_core(), manifest);
    // params present for every object
    assert!(loaded.objects.iter().all(|o| !o.params.is_empty()));
    loaded.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes_a);
}

#[test]
fn dataset_index_round_trip() {
    let dir = temp_dir("index");
    let index = DatasetIndex {
        records: vec![IndexEntry {
            file: "a.dxpc".into(),
            object_id: 3,
            category: Category::Laptop,
            task: Category::Laptop,
        }],
    };
    let path = dir.join("index.json");
    index.save(&path).unwrap();
    let loaded = DatasetIndex::load(&path).unwrap();
    assert_eq!(loaded.records.len(), 1);
    assert_eq!(loaded.records[0].category, Category::Laptop);
}

#[test]
fn resume_snapshot_round_trip() {
    let mut store = ParamStore::new();
    store.add("w", 3, 3, Init::UniformFanIn, 9);
    let snap = resume::TrainSnapshot {
        config_hash: 0xDEAD_BEEF,
        round: 17,
        env_steps: 3400,
        rng_state: [1, 2, 3, 4],
        rows_written: 17,
        params: store.encode(),
        adam: dexkit_core::nn::AdamState::new(&store, 1e-3).encode(),
        envs: vec![EnvSnapshot {
            object_id: 5,
            episode_seed: 42,
            step_in_episode: 13,
            episode_counter: 3,
            stage: 2,
            prev_progress: 0.25,
            first_success: Some(9),
            episode_return: -1.5,
            sim: SimState {
                robot: RobotState {
                    arm_q: [0.1; 6],
                    hand_q: [0.4; 16],
                    hand_q_target: [0.5; 16],
                    palm_lin_vel: Vec3::new(0.1, 0.0, -0.2),
                    palm_ang_vel: Vec3::ZERO,
                },
                object_root: Pose::from_translation(Vec3::new(0.01, -0.02, 0.0)),
                object_q: vec![0.7],
                lift_height: 0.0,
                step_count: 13,
                elapsed: 0.65,
            },
        }],
    };
    let decoded = resume::decode(&resume::encode(&snap)).unwrap();
    assert_eq!(decoded, snap);
}
