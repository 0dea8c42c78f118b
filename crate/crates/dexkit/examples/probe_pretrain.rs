//! Pre-training threshold probe: seg accuracy, recon progress, simsiam
//! collapse, cls accuracy at desk scale.
use std::time::Instant;

use dexkit_core::assets::{generate_split, Category, CategoryTemplate};
use dexkit_core::nn::{PointNetSize, PointNetSpec};
use dexkit_core::pretrain::*;
use dexkit_core::sensing::SensingConfig;
use dexkit_core::sim::RobotModel;
use dexkit_core::tasks::TaskSpec;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "seg".into());
    let sensing = SensingConfig {
        width: 64,
        height: 64,
        n_observed: 192,
        n_imagined: 48,
        ..Default::default()
    };
    let spec = PointNetSpec {
        size: PointNetSize::Small,
        in_dim: 4,
        hidden_width: 64,
        feature_dim: 128,
    };
    let cat = Category::Laptop;
    let template = CategoryTemplate::for_category(cat);
    let (a, s, u) = cat.default_counts();
    let manifest = generate_split(&template, a, s, u, 0).unwrap();
    let task = TaskSpec::for_category(cat).unwrap();
    let model = RobotModel::standard(&Default::default());

    let t0 = Instant::now();
    match which.as_str() {
        "seg" | "recon" | "simsiam" => {
            let recs = generate_dam(&manifest, &template, &task, &model, &sensing, 50, 7);
            let clouds: Vec<TrainCloud> = recs.iter().map(TrainCloud::from_dam).collect();
            println!("dam: {} clouds in {:.0}s", clouds.len(), t0.elapsed().as_secs_f64());
            let cfg = PretrainConfig { epochs: 20, batch: 32, seed: 0, recon_points: 256, ..Default::default() };
            let out = match which.as_str() {
                "seg" => train_segmentation(&clouds, &spec, &cfg).unwrap(),
                "recon" => train_reconstruction(&clouds, &spec, &cfg).unwrap(),
                _ => train_simsiam(&clouds, &spec, &AugmentationSpec::default(), &cfg).unwrap(),
            };
            for m in &out.metrics {
                println!(
                    "epoch {} loss {:.4} acc {:?} miou {:?} cd {:?} std {:?} [{:.0}s]",
                    m.epoch, m.loss, m.accuracy, m.miou, m.chamfer, m.collapse_std,
                    t0.elapsed().as_secs_f64()
                );
            }
            println!("confusion (rows = want func/rest/hand/arm):");
            for row in &out.confusion {
                println!("  {row:?}");
            }
        }
        "cls" => {
            let recs = generate_pmm(&Category::ALL, 150, &sensing, 7);
            let clouds: Vec<TrainCloud> = recs.iter().map(TrainCloud::from_pmm).collect();
            println!("pmm: {} clouds in {:.0}s", clouds.len(), t0.elapsed().as_secs_f64());
            let cfg = PretrainConfig { epochs: 10, batch: 32, seed: 0, ..Default::default() };
            let out = train_classification(&clouds, &spec, 8, &cfg).unwrap();
            for m in &out.metrics {
                println!(
                    "epoch {} loss {:.4} acc {:?} [{:.0}s]",
                    m.epoch, m.loss, m.accuracy, t0.elapsed().as_secs_f64()
                );
            }
        }
        _ => panic!("seg|recon|simsiam|cls"),
    }
}
