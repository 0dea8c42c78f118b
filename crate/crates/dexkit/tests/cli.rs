//! CLI surface tests: subcommands, exit codes, artifact contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dexkit::config::RunConfig;
use dexkit::formats::{dxpc, DatasetIndex, ManifestFile};
use dexkit_core::assets::Split;
use dexkit_core::nn::{PointNetSize, PointNetSpec};
use dexkit_core::sensing::{PointLabel, SensingConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dexkit"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dexkit-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small config for CLI runs that must finish in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::default();
    cfg.task = "laptop".into();
    cfg.sensing = SensingConfig {
        width: 24,
        height: 24,
        n_observed: 32,
        n_imagined: 8,
        ..Default::default()
    };
    cfg.pointnet = PointNetSpec {
        size: PointNetSize::Small,
        in_dim: 4,
        hidden_width: 8,
        feature_dim: 16,
    };
    cfg.horizon = 5;
    cfg.ppo.horizon = 5;
    cfg.ppo.n_envs = 2;
    cfg.ppo.minibatch = 10;
    cfg.ppo.epochs = 1;
    cfg.ppo.total_steps = 30;
    cfg.dam_per_object = 4;
    cfg.pmm_per_category = 12;
    cfg.pretrain_epochs = 1;
    cfg.pretrain_batch = 4;
    cfg.eval_episodes = 2;
    cfg.sweep_episodes = 1;
    cfg.seeds = vec![0];
    cfg.checkpoint_every_rounds = 2;
    cfg.out_dir = dir.join("run");
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn gen_assets_defaults_and_override() {
    let dir = temp_dir("assets");
    let out = bin()
        .args(["gen-assets", "--task", "faucet", "--seed", "0"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = ManifestFile::load(&dir.join("faucet_manifest.json")).unwrap();
    let core = manifest.to_core();
    assert_eq!(core.counts(), (18, 11, 7));

    // byte-identical rerun
    let bytes_a = fs::read(dir.join("faucet_manifest.json")).unwrap();
    let out = bin()
        .args(["gen-assets", "--task", "faucet", "--seed", "0"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(dir.join("faucet_manifest.json")).unwrap(), bytes_a);

    // --n-seen override honored exactly
    let out = bin()
        .args([
            "gen-assets", "--task", "faucet", "--seed", "0", "--n-all", "8", "--n-seen", "5",
            "--n-unseen", "3",
        ])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest = ManifestFile::load(&dir.join("faucet_manifest.json")).unwrap();
    assert_eq!(manifest.to_core().counts(), (8, 5, 3));
}

#[test]
fn unknown_task_is_validation_exit_code() {
    let dir = temp_dir("badtask");
    let out = bin()
        .args(["gen-assets", "--task", "chair", "--seed", "0"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dataset_generation_and_pretrain_flow() {
    let dir = temp_dir("data");
    let cfg_path = tiny_config(&dir);

    // dam dataset: index count = seen objects x per-object
    let dam_dir = dir.join("dam");
    let out = bin()
        .args(["gen-pretrain-data", "--dataset", "dam"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&dam_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index = DatasetIndex::load(&dam_dir.join("index.json")).unwrap();
    assert_eq!(index.records.len(), 11 * 4, "11 seen laptops x 4 records");
    // index references only existing files
    for e in &index.records {
        assert!(dam_dir.join(&e.file).exists(), "{} missing", e.file);
    }

    // pmm dataset: balanced categories, no robot-labeled points
    let pmm_dir = dir.join("pmm");
    let out = bin()
        .args(["gen-pretrain-data", "--dataset", "pmm"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&pmm_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index = DatasetIndex::load(&pmm_dir.join("index.json")).unwrap();
    assert_eq!(index.records.len(), 8 * 12);
    for e in &index.records {
        let cloud = dxpc::read(&pmm_dir.join(&e.file)).unwrap();
        assert!(cloud
            .labels
            .iter()
            .all(|l| matches!(l, PointLabel::ObjectFunctional | PointLabel::ObjectRest)));
    }

    // missing manifest path is a validation failure
    let out = bin()
        .args(["gen-pretrain-data", "--dataset", "dam"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--manifest")
        .arg(dir.join("nope.json"))
        .arg("--out")
        .arg(dir.join("dam2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // pretrain each method on its dataset; encoder checkpoints agree on
    // parameter names/shapes
    let mut shapes: Vec<Vec<(String, usize, usize)>> = Vec::new();
    for (method, data) in [
        ("seg-dam", &dam_dir),
        ("seg-pmm", &pmm_dir),
        ("cls-pmm", &pmm_dir),
        ("recon-dam", &dam_dir),
        ("simsiam-dam", &dam_dir),
    ] {
        let ckpt = dir.join(format!("{method}.dxck"));
        let out = bin()
            .args(["pretrain", "--method", method, "--epochs", "1"])
            .arg("--data")
            .arg(data)
            .arg("--out")
            .arg(&ckpt)
            .arg("--config")
            .arg(&cfg_path)
            .output()
            .unwrap();
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let store = dexkit::formats::load_checkpoint(&ckpt).unwrap();
        shapes.push(store.iter().map(|e| (e.name.clone(), e.rows, e.cols)).collect());
        // metrics CSV: header + initial row + one epoch row
        let metrics =
            fs::read_to_string(ckpt.with_extension("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 3, "{method} metrics rows");
        let rows: Vec<&str> = metrics.lines().collect();
        let loss_of = |line: &str| -> f64 { line.split(',').nth(1).unwrap().parse().unwrap() };
        // loss after one epoch below the pre-update loss (not for simsiam,
        // whose row 0 metric is the collapse std)
        if method != "simsiam-dam" {
            assert!(loss_of(rows[2]) < loss_of(rows[1]), "{method}: {metrics}");
        }
    }
    for w in shapes.windows(2) {
        assert_eq!(w[0], w[1], "encoder layouts must match across methods");
    }
}

#[test]
fn train_eval_sweep_flow() {
    let dir = temp_dir("train");
    let cfg_path = tiny_config(&dir);
    let run_dir = dir.join("run");

    let out = bin()
        .args(["train"])
        .arg("--config")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run_dir.join("final.dxck").exists());
    assert!(run_dir.join("state.dxrs").exists());
    assert!(run_dir.join("run_manifest.json").exists());
    let log = fs::read_to_string(run_dir.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3, "header + ceil(30/10) rounds");

    // run manifest is completed with artifacts
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(run_dir.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["completed"], serde_json::Value::Bool(true));
    assert!(manifest["artifacts"].as_array().unwrap().len() >= 3);

    // eval on both splits emits 2 rows sets
    let out = bin()
        .args(["eval", "--split", "both", "--episodes", "2"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--checkpoint")
        .arg(run_dir.join("final.dxck"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval_csv = fs::read_to_string(run_dir.join("eval.csv")).unwrap();
    // header + (splits x seeds) rows
    assert_eq!(eval_csv.lines().count(), 1 + 2);

    // eval with zero episodes is a validation error, not an empty report
    let out = bin()
        .args(["eval", "--episodes", "0"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--checkpoint")
        .arg(run_dir.join("final.dxck"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // viewpoint sweep: exactly 35 rows
    let out = bin()
        .args(["sweep-viewpoints", "--episodes", "1"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--checkpoint")
        .arg(run_dir.join("final.dxck"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep_csv = fs::read_to_string(run_dir.join("viewpoint.csv")).unwrap();
    assert_eq!(sweep_csv.lines().count(), 1 + 35);
}

#[test]
fn encoder_initialization_contract() {
    // --encoder: extractor parameters equal the checkpoint before training
    let dir = temp_dir("encinit");
    let cfg_path = tiny_config(&dir);
    let cfg = RunConfig::load(&cfg_path).unwrap();

    // build an encoder checkpoint with recognizable values
    let policy = dexkit_core::rl::Policy::new(cfg.pointnet.clone());
    let donor = policy.init_params(777, -0.5);
    let enc_path = dir.join("donor.dxck");
    fs::write(&enc_path, donor.encode_prefix("pointnet.")).unwrap();

    let mut cfg2 = cfg.clone();
    cfg2.encoder = Some(enc_path.clone());
    // zero rounds: train() writes final.dxck without updating anything
    let summary = dexkit::pipelines::train(&cfg2, false, Some(0)).unwrap();
    let trained = dexkit::formats::load_checkpoint(&summary.final_checkpoint).unwrap();
    for e in donor.iter().filter(|e| e.name.starts_with("pointnet.")) {
        assert_eq!(trained.get(&e.name).unwrap().data, e.data, "{}", e.name);
    }
    // scratch init differs from the donor
    let scratch = policy.init_params(cfg.seed, -0.5);
    assert_ne!(
        scratch.get("pointnet.l0.w").unwrap().data,
        donor.get("pointnet.l0.w").unwrap().data
    );
}

#[test]
fn ablate_sizes_produces_three_variants() {
    let dir = temp_dir("ablate");
    let cfg_path = tiny_config(&dir);
    let plan_path = dir.join("plan.json");
    fs::write(&plan_path, r#"{"axis": "sizes", "seeds": [0], "eval_episodes": 1}"#).unwrap();
    let out = bin()
        .args(["ablate"])
        .arg("--plan")
        .arg(&plan_path)
        .arg("--config")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.join("run");
    for size in ["small", "medium", "large"] {
        assert!(run_dir.join(format!("size-{size}_seed0_log.csv")).exists());
    }
    let cmp = fs::read_to_string(run_dir.join("comparison.csv")).unwrap();
    // header + 3 variants x 1 seed x 2 splits
    assert_eq!(cmp.lines().count(), 1 + 6);
}

#[test]
fn dexkit_seed_env_overrides_config() {
    let dir = temp_dir("seedenv");
    let out = bin()
        .args(["gen-assets", "--task", "bucket", "--seed", "3"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let with_seed3 = fs::read(dir.join("bucket_manifest.json")).unwrap();

    // gen-pretrain-data reads the seed from the config; DEXKIT_SEED wins
    let cfg_path = tiny_config(&dir);
    let out_a = dir.join("pmm_a");
    let out_b = dir.join("pmm_b");
    let run = |out_dir: &Path, env_seed: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["gen-pretrain-data", "--dataset", "pmm"])
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(out_dir);
        if let Some(s) = env_seed {
            cmd.env("DEXKIT_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&out_a, Some("99"));
    run(&out_b, Some("99"));
    // same env seed -> identical first record
    let ia = DatasetIndex::load(&out_a.join("index.json")).unwrap();
    let a0 = fs::read(out_a.join(&ia.records[0].file)).unwrap();
    let b0 = fs::read(out_b.join(&ia.records[0].file)).unwrap();
    assert_eq!(a0, b0);
    drop(with_seed3);

    // split tags survive the round trip
    let manifest = ManifestFile::load(&dir.join("bucket_manifest.json")).unwrap();
    assert!(manifest.objects.iter().any(|o| o.split == Split::Unseen));
}
