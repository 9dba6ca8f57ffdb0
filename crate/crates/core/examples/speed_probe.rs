use wsiseg_core::netgraph::{ModelConfig, SegmentationModel};
use wsiseg_core::trainer::*;

fn main() {
    let lr: f64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let steps: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let cfg = ModelConfig::with_levels(3, 8).scale_channels(1, 8);
    let mut model = SegmentationModel::<f32>::build(&cfg, 1).unwrap();
    let data = synth_dataset(4, 256, 8, 5);
    let tcfg = TrainConfig {
        learning_rate: lr, batch_size: 4, max_steps: steps, val_interval: 50, seed: 3,
        augment: AugmentationSpec { rotations: false, hflip: false, crop: false, multiplicity: 1 },
        early_stop: Some((0.95, 0.0)),
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let rep = train(&mut model, &data.images, &data.masks, &data.images, &data.masks, &tcfg, dir.path()).unwrap();
    println!("lr {lr}: stopped at {} steps", rep.steps_run);
    println!("{}", std::fs::read_to_string(&rep.log_path).unwrap().lines().filter(|l| l.contains("val")).collect::<Vec<_>>().join("\n"));
}
