//! Densification through files, and configuration round trips.

use proptest::prelude::*;
use radar_densify::config::{BandwidthRule, DistanceForm, Kernel, PillarPreset, ToolkitConfig};
use radar_densify::config::PillarConfig;
use radar_densify::densify::densify_frame;
use radar_densify::io::{load_frame, read_cloud, read_masks, write_calibration, write_cloud, write_frame, write_masks_json, write_masks_png};
use radar_densify::synthetic;

#[test]
fn densify_from_files_is_reproducible_in_both_mask_formats() {
    let scene = synthetic::fixture();
    let dir = tempfile::tempdir().unwrap();
    let (calib, cloud) = (dir.path().join("calib.json"), dir.path().join("frame.bin"));
    write_calibration(&calib, scene.frame.calibration()).unwrap();
    write_frame(&cloud, &scene.frame).unwrap();
    let dims = (scene.frame.image_width(), scene.frame.image_height());
    let (png, json) = (dir.path().join("masks.png"), dir.path().join("masks.json"));
    write_masks_png(&png, &scene.masks, dims).unwrap();
    write_masks_json(&json, &scene.masks, dims).unwrap();
    assert_eq!(read_masks(&png, dims).unwrap(), read_masks(&json, dims).unwrap());

    let frame = load_frame(&calib, &cloud).unwrap();
    let masks = read_masks(&png, dims).unwrap();
    let cfg = Default::default();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let (out, report) = densify_frame(&frame, &masks, &cfg).unwrap();
        assert_eq!(report.generated_points, 1000);
        let path = dir.path().join(format!("out{k}.bin"));
        write_cloud(&path, out.schema(), out.points()).unwrap();
        assert_eq!(read_cloud(&path).unwrap().points.len(), 2000);
        outputs.push(std::fs::read(path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

fn kernel() -> impl Strategy<Value = Kernel> {
    prop::sample::select(Kernel::ALL.to_vec())
}

fn rule() -> impl Strategy<Value = BandwidthRule> {
    prop_oneof![
        Just(BandwidthRule::Scott),
        Just(BandwidthRule::Silverman),
        (0.01f64..10.0).prop_map(BandwidthRule::UserDefined),
    ]
}

fn preset() -> impl Strategy<Value = PillarPreset> {
    prop::sample::select(vec![PillarPreset::Vod, PillarPreset::Tj4d, PillarPreset::Astyx, PillarPreset::Bev1m])
}

proptest! {
    #[test]
    fn toml_round_trip(
        kernel in kernel(),
        rule in rule(),
        manhattan in any::<bool>(),
        gamma in 0.1f64..5.0,
        seed in any::<u64>(),
        points in 1usize..1000,
        fraction in 0.0f64..=1.0,
        preset in preset(),
    ) {
        let mut cfg = ToolkitConfig::default();
        cfg.simden.kernel = kernel;
        cfg.simden.bandwidth_rule = rule;
        cfg.simden.distance = if manhattan { DistanceForm::Manhattan } else { DistanceForm::PerDimension };
        cfg.simden.gamma = gamma;
        cfg.simden.rng_seed = seed;
        cfg.simden.points_per_instance = points;
        cfg.simden.outline_fraction = fraction;
        cfg.pillars = PillarConfig::preset(preset);
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(ToolkitConfig::from_toml_str(&text).unwrap(), cfg);
    }
}
