//! Rendered frames through the perception stack.

use pvrow_core::geometry::world_line_to_camera;
use pvrow_core::lineclust::{ClusterConfig, PanelSpec};
use pvrow_core::rgb_seg::{detect_rgb, HsvThresholds};
use pvrow_core::thermal_seg::{detect_thermal, ThermalThresholds};
use pvrow_core::{CameraLineF64, Geometry, Pose};
use pvrow_sim::{frame_seed, panel_mask, render_rgb, render_thermal, PlantLayout};

const THERMAL: ThermalThresholds = ThermalThresholds { th1: 135, th2: 220, th3: 6.0 };
const HSV: HsvThresholds = HsvThresholds { th4: 190.0, th5: 90.0, th6: 60.0, th7: 250.0, th8: 250.0, th9: 230.0, hue_wrap: false };

fn setup() -> (PlantLayout, Geometry, ClusterConfig) {
    let g = Geometry::default_thermal();
    let cfg = ClusterConfig::for_panels(&g, &PanelSpec::default());
    (PlantLayout::default(), g, cfg)
}

/// Whether some detected line lies within `deg` degrees of `want` and within
/// half a panel width of it laterally.
fn matches(lines: &[CameraLineF64], want: &CameraLineF64, deg: f64) -> bool {
    lines.iter().any(|l| (l.a.atan() - want.a.atan()).abs().to_degrees() <= deg && (l.b - want.b).abs() <= 1.0)
}

fn poses() -> Vec<Pose> {
    vec![
        Pose::new(30.0, 0.0, 0.0, 15.0),
        Pose::new(20.0, 6.3, 0.2, 15.0),
        Pose::new(40.0, 11.7, -0.3, 15.0),
        Pose::new(25.0, 18.0, std::f64::consts::PI, 15.0),
    ]
}

#[test]
fn empty_ground_stays_out_of_the_panel_band() {
    let (layout, g, _) = setup();
    let img = render_thermal(&layout, &Pose::new(200.0, 200.0, 0.0, 15.0), &g, 3);
    let inside = img.data().iter().filter(|&&p| (THERMAL.th1..=THERMAL.th2).contains(&p)).count();
    assert!((inside as f64) < 1e-3 * img.data().len() as f64, "{inside}");
}

#[test]
fn rows_under_the_camera_are_detected_in_both_modalities() {
    let (layout, g, cfg) = setup();
    for (i, pose) in poses().iter().enumerate() {
        let k = layout.rows.iter().position(|r| r.offset_of(pose.position()).abs() < 1.0).unwrap();
        let want = world_line_to_camera(&layout.rows[k].midline().unwrap(), pose).unwrap();
        let cam = |ls: Vec<pvrow_core::lineclust::ObservedLine>| -> Vec<CameraLineF64> {
            ls.iter().filter_map(|l| l.to_camera_line(&g).ok()).collect()
        };
        let t = detect_thermal(&render_thermal(&layout, pose, &g, frame_seed(1, 2, i as u64)), &THERMAL, &cfg).unwrap();
        assert!(matches(&cam(t), &want, 2.0), "thermal pose {i}");
        let c = detect_rgb(&render_rgb(&layout, pose, &g, frame_seed(1, 3, i as u64)), &HSV, &cfg).unwrap();
        assert!(matches(&cam(c), &want, 2.0), "rgb pose {i}");
    }
}

#[test]
fn renders_are_bitwise_deterministic() {
    let (mut layout, g, _) = setup();
    layout.glare.enabled = true;
    let pose = Pose::new(31.0, 5.5, 0.1, 15.0);
    assert_eq!(render_thermal(&layout, &pose, &g, 11), render_thermal(&layout, &pose, &g, 11));
    assert_eq!(render_rgb(&layout, &pose, &g, 11), render_rgb(&layout, &pose, &g, 11));
    assert_ne!(render_thermal(&layout, &pose, &g, 11), render_thermal(&layout, &pose, &g, 12));
}

#[test]
fn thermal_and_rgb_masks_agree() {
    let (layout, g, _) = setup();
    for pose in poses() {
        let t = panel_mask(&layout, &pose, &g, true);
        let c = panel_mask(&layout, &pose, &g, false);
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in t.data().iter().zip(c.data()) {
            inter += usize::from(*a != 0 && *b != 0);
            union += usize::from(*a != 0 || *b != 0);
        }
        assert!(union > 0);
        assert!(inter as f64 / union as f64 >= 0.95, "{pose:?}: {inter}/{union}");
    }
}

#[test]
fn ground_only_rgb_gives_no_lines() {
    let (layout, g, cfg) = setup();
    for i in 0..5 {
        let pose = Pose::new(-100.0 - 20.0 * f64::from(i), 50.0, 0.3 * f64::from(i), 15.0);
        let img = render_rgb(&layout, &pose, &g, frame_seed(2, 3, i as u64));
        assert!(detect_rgb(&img, &HSV, &cfg).unwrap().is_empty());
    }
}

#[test]
fn glare_leaves_most_rgb_frames_usable() {
    let (mut layout, g, cfg) = setup();
    layout.glare.enabled = true;
    layout.glare.coverage = 0.2;
    let frames = 400u64;
    let mut hits = 0;
    for i in 0..frames {
        let k = (i % 4) as usize;
        let pose = Pose::new(8.0 + (i * 37 % 44) as f64, 6.0 * k as f64, 0.0, 15.0);
        let want = world_line_to_camera(&layout.rows[k].midline().unwrap(), &pose).unwrap();
        let img = render_rgb(&layout, &pose, &g, frame_seed(9, 3, i));
        let lines: Vec<_> = detect_rgb(&img, &HSV, &cfg).unwrap().iter().filter_map(|l| l.to_camera_line(&g).ok()).collect();
        hits += u64::from(matches(&lines, &want, 2.0));
    }
    assert!(hits as f64 >= 0.9 * frames as f64, "{hits}/{frames}");
}
